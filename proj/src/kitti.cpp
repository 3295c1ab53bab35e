#include "sdepth/kitti.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "sdepth/errors.hpp"
#include "sdepth/image_io.hpp"

namespace sdepth {

namespace fs = std::filesystem;

KittiSplit parse_split(const std::string& name) {
  if (name == "eigen" || name == "eigen_zhou") return KittiSplit::Eigen;
  if (name == "eigen_full") return KittiSplit::EigenFull;
  if (name == "benchmark") return KittiSplit::Benchmark;
  if (name == "odometry" || name == "odom") return KittiSplit::Odometry;
  throw ConfigError("unknown split '" + name + "' (expected eigen, eigen_full, benchmark or odometry)");
}

std::string to_string(KittiSplit split) {
  switch (split) {
    case KittiSplit::Eigen: return "eigen";
    case KittiSplit::EigenFull: return "eigen_full";
    case KittiSplit::Benchmark: return "benchmark";
    case KittiSplit::Odometry: return "odometry";
  }
  return "?";
}

std::vector<SplitEntry> read_split_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("split file not found: " + path.string());
  std::vector<SplitEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    SplitEntry e;
    std::string side;
    if (!(ss >> e.folder >> e.frame))
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'folder frame side'");
    if (ss >> side) {
      if (side != "l" && side != "r")
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": side must be l or r");
      e.side = side[0];
    }
    entries.push_back(e);
  }
  return entries;
}

fs::path kitti_image_path(const fs::path& root, KittiSplit split, const std::string& folder, int frame, char side) {
  char name[32];
  fs::path dir;
  if (split == KittiSplit::Odometry) {
    std::snprintf(name, sizeof(name), "%06d", frame);
    char seq[16];
    std::snprintf(seq, sizeof(seq), "%02d", std::stoi(folder));
    dir = root / "sequences" / seq / (side == 'l' ? "image_2" : "image_3");
  } else {
    std::snprintf(name, sizeof(name), "%010d", frame);
    dir = root / folder / (side == 'l' ? "image_02" : "image_03") / "data";
  }
  for (const char* ext : {".png", ".jpg"}) {
    auto p = dir / (std::string(name) + ext);
    if (fs::exists(p)) return p;
  }
  return {};
}

namespace {

using StaticKey = std::tuple<std::string, int>;

std::set<StaticKey> read_static_list(const fs::path& path) {
  std::set<StaticKey> keys;
  std::ifstream in(path);
  std::string date, drive, frame;
  while (in >> date >> drive >> frame) keys.emplace(date + "/" + drive, std::stoi(frame));
  return keys;
}

double mean_abs_diff(const fs::path& a, const fs::path& b, int h, int w) {
  return (read_rgb(a, std::pair{h, w}) - read_rgb(b, std::pair{h, w})).abs().mean().item<double>();
}

}  // namespace

std::vector<TripletDescriptor> load_kitti_split(const fs::path& root, KittiSplit split, TrainingMode mode,
                                                const KittiLoadOptions& options) {
  if (!fs::is_directory(root)) throw DataError("data root does not exist: " + root.string());
  if (fs::is_empty(root)) throw DataError("data root is empty: " + root.string());
  const fs::path split_dir = root / "splits" / to_string(split);
  const auto entries = read_split_file(split_dir / (options.subset + "_files.txt"));

  const bool filter_static = options.remove_static && split == KittiSplit::Eigen && uses_temporal(mode);
  std::set<StaticKey> static_list;
  const bool have_list = fs::exists(split_dir / "static_frames.txt");
  if (filter_static && have_list) static_list = read_static_list(split_dir / "static_frames.txt");

  std::vector<TripletDescriptor> out;
  for (const auto& e : entries) {
    TripletDescriptor d;
    d.entry = e;
    d.target = kitti_image_path(root, split, e.folder, e.frame, e.side);
    if (d.target.empty()) continue;
    bool ok = true;
    if (uses_temporal(mode)) {
      for (auto [offset, kind] : {std::pair{-1, SourceKind::Previous}, std::pair{1, SourceKind::Next}}) {
        auto p = kitti_image_path(root, split, e.folder, e.frame + offset, e.side);
        if (p.empty()) {
          ok = false;
          break;
        }
        d.sources.push_back(p);
        d.kinds.push_back(kind);
      }
    }
    if (ok && uses_stereo(mode)) {
      auto p = kitti_image_path(root, split, e.folder, e.frame, e.side == 'l' ? 'r' : 'l');
      if (p.empty()) ok = false;
      d.sources.push_back(p);
      d.kinds.push_back(SourceKind::Stereo);
    }
    if (!ok) continue;

    if (filter_static) {
      if (have_list) {
        if (static_list.count({e.folder, e.frame})) continue;
      } else {
        const double diff = 0.5 * (mean_abs_diff(d.target, d.sources[0], options.height, options.width) +
                                   mean_abs_diff(d.target, d.sources[1], options.height, options.width));
        if (diff < options.static_threshold) continue;
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

KittiDataset::KittiDataset(std::vector<TripletDescriptor> descriptors, TrainingMode mode, int height, int width)
    : descriptors_(std::move(descriptors)),
      mode_(mode),
      height_(height),
      width_(width),
      intrinsics_(CameraIntrinsics::from_normalized(kKittiFxRatio, kKittiFyRatio, width, height)) {}

SampleTriplet KittiDataset::get(size_t index) const {
  const auto& d = descriptors_.at(index);
  SampleTriplet t;
  t.target = read_rgb(d.target, std::pair{height_, width_});
  for (const auto& p : d.sources) t.sources.push_back(read_rgb(p, std::pair{height_, width_}));
  t.kinds = d.kinds;
  t.intrinsics = intrinsics_;
  if (uses_stereo(mode_)) t.stereo_baseline_pose = stereo_pose(d.entry.side);
  return t;
}

}  // namespace sdepth
