#pragma once

// KITTI raw / odometry readers.
//
// Expected layout under the data root:
//   <date>/<drive>/image_02/data/<frame:010>.png     (left, raw splits)
//   <date>/<drive>/image_03/data/<frame:010>.png     (right)
//   sequences/<seq:02>/image_2/<frame:06>.png        (odometry split)
//   splits/<split>/<subset>_files.txt                lines "folder frame side"
//   splits/<split>/static_frames.txt                 optional, lines "date drive frame"
//
// Images may be .png or .jpg.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sdepth/data.hpp"

namespace sdepth {

enum class KittiSplit { Eigen, EigenFull, Benchmark, Odometry };

KittiSplit parse_split(const std::string& name);
std::string to_string(KittiSplit split);

struct SplitEntry {
  std::string folder;
  int frame = 0;
  char side = 'l';
};

/// Parses "folder frame side" lines; side defaults to 'l' when absent.
std::vector<SplitEntry> read_split_file(const std::filesystem::path& path);

struct TripletDescriptor {
  SplitEntry entry;
  std::filesystem::path target;
  std::vector<std::filesystem::path> sources;
  std::vector<SourceKind> kinds;
};

struct KittiLoadOptions {
  std::string subset = "train";
  int height = 192;
  int width = 640;
  /// Mean absolute inter-frame difference below which a triplet counts as
  /// static when no static-frame list is provided.
  double static_threshold = 0.01;
  bool remove_static = true;
};

/// Normalized intrinsics used for every KITTI image: centred principal point
/// and the average KITTI focal length.
inline constexpr double kKittiFxRatio = 0.58;
inline constexpr double kKittiFyRatio = 1.92;

/// Image path for a split entry, or an empty path if no file exists.
std::filesystem::path kitti_image_path(const std::filesystem::path& root, KittiSplit split, const std::string& folder,
                                       int frame, char side);

/// Lists valid triplets of the split. Entries whose neighbours or stereo
/// partner are missing are dropped; static frames are removed for monocular
/// modes on the Eigen split.
std::vector<TripletDescriptor> load_kitti_split(const std::filesystem::path& root, KittiSplit split, TrainingMode mode,
                                                const KittiLoadOptions& options = {});

class KittiDataset : public TripletDataset {
 public:
  KittiDataset(std::vector<TripletDescriptor> descriptors, TrainingMode mode, int height, int width);
  size_t size() const override { return descriptors_.size(); }
  SampleTriplet get(size_t index) const override;
  TrainingMode mode() const override { return mode_; }
  CameraIntrinsics intrinsics() const override { return intrinsics_; }
  const std::vector<TripletDescriptor>& descriptors() const { return descriptors_; }

 private:
  std::vector<TripletDescriptor> descriptors_;
  TrainingMode mode_;
  int height_;
  int width_;
  CameraIntrinsics intrinsics_;
};

}  // namespace sdepth
