#pragma once

// Procedural scenes of textured fronto-parallel planes with exact depth and
// camera poses, used as ground truth for desk-scale checks.
//
// Each plane z = depth (world frame) carries a canonical texture raster that
// spans its extent; a pixel's colour is the bilinear sample of that raster at
// the analytic ray-plane intersection of the nearest plane hit.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <torch/torch.h>

#include "sdepth/data.hpp"
#include "sdepth/geometry.hpp"

namespace sdepth {

struct PlaneLayer {
  double depth = 10.0;
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  uint64_t texture_seed = 0;
  double texel_size = 0.05;   ///< World units per texel.
  double blur_sigma = 1.5;    ///< Texture smoothing in texels.
  Eigen::Vector3d tint = Eigen::Vector3d::Ones();
};

struct SyntheticSceneSpec {
  CameraIntrinsics intrinsics;
  std::vector<PlaneLayer> layers;
  std::vector<PoseSE3> trajectory;  ///< Camera-to-world pose per frame.
  bool render_stereo = false;       ///< Also render a right camera at +baseline.
  double stereo_baseline = kStereoBaseline;
  double min_visible_fraction = 0.8;
};

struct SyntheticScene {
  SyntheticSceneSpec spec;
  std::vector<torch::Tensor> textures;       ///< Per layer, 3 x Th x Tw float64.
  std::vector<torch::Tensor> frames;         ///< 3 x H x W float32.
  std::vector<torch::Tensor> depths;         ///< 1 x H x W float32 camera z.
  std::vector<torch::Tensor> layer_ids;      ///< H x W int64, index of the visible plane.
  std::vector<torch::Tensor> stereo_frames;  ///< Right-camera renders when requested.

  size_t size() const { return frames.size(); }
  /// Transform mapping camera `from` points into camera `to`.
  PoseSE3 relative_pose(size_t from, size_t to) const;
};

/// Texture raster of a layer: smoothed uniform noise, scaled to [0.15, 0.85]
/// and multiplied by the tint.
torch::Tensor make_texture(const PlaneLayer& layer);

/// Texel coordinates (column, row) of world point (x, y) on `layer`.
Eigen::Vector2d texel_coordinates(const PlaneLayer& layer, double x, double y);

/// Throws ConfigError if a depth leaves [0.5, 50], a pixel misses every plane,
/// or consecutive frames share less than `min_visible_fraction` of their view.
SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec);

/// Renders a single view with the given camera-to-world pose.
struct RenderedView {
  torch::Tensor image;     ///< 3 x H x W float32.
  torch::Tensor depth;     ///< 1 x H x W float32.
  torch::Tensor layer_id;  ///< H x W int64.
};
RenderedView render_view(const SyntheticSceneSpec& spec, const std::vector<torch::Tensor>& textures,
                         const PoseSE3& camera_to_world);

struct TwoPlanePreset {
  int height = 64;
  int width = 192;
  int frames = 10;
  double near_depth = 2.0;
  double far_depth = 10.0;
  double step_x = 0.2;    ///< Camera translation per frame (scene units).
  double step_z = 0.05;
};

/// Background plane plus a nearer box plane whose position and textures vary
/// with `seed`.
SyntheticSceneSpec two_plane_spec(const TwoPlanePreset& preset, uint64_t seed);

/// Names accepted by the CLI: "two-planes", "single-plane".
SyntheticSceneSpec preset_spec(const std::string& name, uint64_t seed, const TwoPlanePreset& sizes = {});

/// Frames, ground-truth depth (16-bit PNG, value = depth * 256) and a
/// metadata.json describing intrinsics, poses and layers.
void save_synthetic_scene(const SyntheticScene& scene, const std::filesystem::path& dir);

struct LoadedSyntheticScene {
  CameraIntrinsics intrinsics;
  std::vector<torch::Tensor> frames;
  std::vector<torch::Tensor> depths;
  std::vector<torch::Tensor> stereo_frames;
  std::vector<PoseSE3> trajectory;
  double stereo_baseline = kStereoBaseline;
};
LoadedSyntheticScene load_synthetic_scene(const std::filesystem::path& dir);

/// Triplets (i-1, i, i+1) of every scene plus the stereo partner when the
/// mode needs it.
class SyntheticDataset : public TripletDataset {
 public:
  SyntheticDataset(std::vector<LoadedSyntheticScene> scenes, TrainingMode mode);
  static SyntheticDataset from_scenes(const std::vector<SyntheticScene>& scenes, TrainingMode mode);

  size_t size() const override { return index_.size(); }
  SampleTriplet get(size_t index) const override;
  TrainingMode mode() const override { return mode_; }
  CameraIntrinsics intrinsics() const override;

  /// Ground-truth depth (1 x H x W) of the target frame of triplet `index`.
  torch::Tensor target_depth(size_t index) const;

 private:
  std::vector<LoadedSyntheticScene> scenes_;
  std::vector<std::pair<size_t, size_t>> index_;
  TrainingMode mode_;
};

LoadedSyntheticScene to_loaded(const SyntheticScene& scene);

/// A family of `count` two-plane scenes with seeds seed, seed+1, ...
std::vector<SyntheticScene> two_plane_family(const TwoPlanePreset& preset, size_t count, uint64_t seed,
                                             bool render_stereo = false);

}  // namespace sdepth
