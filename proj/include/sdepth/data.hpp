#pragma once

// Training samples, augmentation, and the dataset interface shared by the
// KITTI reader and the synthetic scene generator.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdepth/geometry.hpp"

namespace sdepth {

/// Source-view sets: M uses the temporal neighbours, S the opposite stereo
/// view, MS all three.
enum class TrainingMode { Mono, Stereo, MonoStereo };

TrainingMode parse_mode(const std::string& text);
std::string to_string(TrainingMode mode);
inline bool uses_temporal(TrainingMode m) { return m != TrainingMode::Stereo; }
inline bool uses_stereo(TrainingMode m) { return m != TrainingMode::Mono; }
/// Number of source views for a mode (2, 1, 3).
int source_count(TrainingMode m);

enum class SourceKind { Previous, Next, Stereo };

/// Stereo baseline length in scene units and the metres-per-unit factor used
/// when reporting metric depth (0.54 m KITTI baseline / 0.1 units).
inline constexpr double kStereoBaseline = 0.1;
inline constexpr double kStereoMetricScale = 5.4;

/// Transform from a target camera on `side` ('l' or 'r') into the opposite
/// stereo camera: pure horizontal translation of fixed length.
PoseSE3 stereo_pose(char side, bool flipped = false, double baseline = kStereoBaseline);

struct SampleTriplet {
  torch::Tensor target;                ///< 3 x H x W in [0, 1].
  std::vector<torch::Tensor> sources;  ///< Same shape as target.
  std::vector<SourceKind> kinds;       ///< One per source.
  CameraIntrinsics intrinsics;
  std::optional<PoseSE3> stereo_baseline_pose;

  /// Throws ConfigError if the source set does not match `mode`.
  void validate(TrainingMode mode) const;
};

class TripletDataset {
 public:
  virtual ~TripletDataset() = default;
  virtual size_t size() const = 0;
  virtual SampleTriplet get(size_t index) const = 0;
  virtual TrainingMode mode() const = 0;
  virtual CameraIntrinsics intrinsics() const = 0;
};

/// Dataset view over a subset of another dataset's indices.
class SubsetDataset : public TripletDataset {
 public:
  SubsetDataset(std::shared_ptr<const TripletDataset> base, std::vector<size_t> indices)
      : base_(std::move(base)), indices_(std::move(indices)) {}
  size_t size() const override { return indices_.size(); }
  SampleTriplet get(size_t i) const override { return base_->get(indices_.at(i)); }
  TrainingMode mode() const override { return base_->mode(); }
  CameraIntrinsics intrinsics() const override { return base_->intrinsics(); }

 private:
  std::shared_ptr<const TripletDataset> base_;
  std::vector<size_t> indices_;
};

/// Deterministic train/validation split holding out `fraction` of the samples.
std::pair<std::vector<size_t>, std::vector<size_t>> split_train_val(size_t n, double fraction, uint64_t seed);

struct AugmentationConfig {
  double flip_prob = 0.5;
  double jitter_prob = 0.5;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.1;
};

struct AugmentationParams {
  bool flip = false;
  bool jitter = false;
  double brightness = 1.0;  ///< Multiplicative factor.
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;  ///< Additive shift on the unit hue circle.

  bool operator==(const AugmentationParams&) const = default;
};

/// RNG for one sample, independent of the order in which samples are drawn.
std::mt19937_64 sample_rng(uint64_t global_seed, uint64_t epoch, uint64_t sample_index);

AugmentationParams draw_augmentation(const AugmentationConfig& cfg, std::mt19937_64& rng);

/// Brightness, contrast, saturation, then hue, on C x H x W or B x C x H x W.
torch::Tensor color_jitter(const torch::Tensor& image, const AugmentationParams& params);

struct AugmentedSample {
  SampleTriplet network_inputs;  ///< Colour-jittered copies fed to the networks.
  SampleTriplet loss_targets;    ///< Unjittered images used by the photometric loss.
  AugmentationParams params;
};

/// Applies one draw of augmentation parameters to every image of the
/// triplet. Flipping also mirrors the intrinsics and the stereo baseline.
AugmentedSample augment(const SampleTriplet& triplet, const AugmentationParams& params);
AugmentedSample augment(const SampleTriplet& triplet, const AugmentationConfig& cfg, std::mt19937_64& rng);

}  // namespace sdepth
