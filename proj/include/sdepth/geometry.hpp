#pragma once

// Differentiable pinhole-camera geometry used by view synthesis.
//
// Pixel convention: column u in [0, W-1], row v in [0, H-1]. Sample grids are
// normalized with 2u/(W-1) - 1, so they pair with align_corners=true sampling.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <torch/torch.h>

namespace sdepth {

inline constexpr double kMinDepth = 0.1;
inline constexpr double kMaxDepth = 100.0;
/// Lower clamp applied to camera-frame z before the projective division.
inline constexpr double kProjectionMinZ = 1e-3;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws ConfigError if the invariants (positive focal lengths, principal
  /// point inside the image) do not hold.
  void validate() const;

  /// All four parameters and the resolution multiplied by `s`.
  CameraIntrinsics scaled(double s) const;

  /// Intrinsics for a resampled image of size w x h under the corner-aligned
  /// convention (pixel 0 and pixel W-1 keep their positions), so that the
  /// normalized projection of any 3D point is unchanged.
  CameraIntrinsics resized(int w, int h) const;

  /// Intrinsics of the horizontally mirrored image (cx -> W-1-cx).
  CameraIntrinsics flipped() const;

  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse_matrix() const;

  /// Centered principal point and a focal length given as a fraction of the
  /// image size (fx = fx_ratio * W, fy = fy_ratio * H).
  static CameraIntrinsics from_normalized(double fx_ratio, double fy_ratio, int width, int height);

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Rodrigues formula. The zero vector yields the identity.
Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& axis_angle);
Eigen::Vector3d matrix_to_axis_angle(const Eigen::Matrix3d& rotation);

/// Rigid transform stored as axis-angle rotation plus translation.
/// Applied to points as x' = R x + t.
class PoseSE3 {
 public:
  PoseSE3() = default;
  PoseSE3(const Eigen::Vector3d& axis_angle, const Eigen::Vector3d& translation)
      : axis_angle_(axis_angle), translation_(translation) {}

  static PoseSE3 identity() { return {}; }
  static PoseSE3 from_matrix(const Eigen::Matrix4d& m);
  static PoseSE3 translation_only(double tx, double ty, double tz) {
    return {Eigen::Vector3d::Zero(), Eigen::Vector3d(tx, ty, tz)};
  }

  const Eigen::Vector3d& axis_angle() const { return axis_angle_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Matrix3d rotation() const { return axis_angle_to_matrix(axis_angle_); }
  Eigen::Matrix4d matrix() const;

  /// this * other, i.e. apply `other` first.
  PoseSE3 compose(const PoseSE3& other) const;
  PoseSE3 inverse() const;
  /// The same motion seen in horizontally mirrored images: M T M with M = diag(-1, 1, 1).
  PoseSE3 mirrored_x() const {
    return {Eigen::Vector3d(axis_angle_.x(), -axis_angle_.y(), -axis_angle_.z()),
            Eigen::Vector3d(-translation_.x(), translation_.y(), translation_.z())};
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation() * p + translation_; }

  /// 4x4 tensor with the given options.
  torch::Tensor to_tensor(const torch::TensorOptions& options = torch::kFloat32) const;

 private:
  Eigen::Vector3d axis_angle_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

/// Sampling coordinates produced by `project`.
struct SampleGrid {
  torch::Tensor coords;    ///< B x H x W x 2, (x, y) normalized to [-1, 1] inside the image.
  torch::Tensor oob_mask;  ///< B x H x W bool, true where the target left the image or went behind the camera.
};

/// Batched Rodrigues: B x 3 axis-angle -> B x 3 x 3 rotation. Differentiable,
/// with a series expansion near zero angle.
torch::Tensor axis_angle_to_matrix(const torch::Tensor& axis_angle);

/// B x 3 axis-angle and B x 3 translation -> B x 4 x 4 homogeneous transforms.
/// With `invert`, returns the inverse transform [R^T | -R^T t].
torch::Tensor pose_to_matrix(const torch::Tensor& axis_angle, const torch::Tensor& translation,
                             bool invert = false);

/// B x 1 x H x W depth -> B x 4 x (H*W) homogeneous camera-frame points.
torch::Tensor backproject(const torch::Tensor& depth, const CameraIntrinsics& K);

/// Transforms points by `T` (B x 4 x 4 or 4 x 4), projects with `K` and
/// normalizes to a sampling grid at K's resolution.
SampleGrid project(const torch::Tensor& points, const CameraIntrinsics& K, const torch::Tensor& T);

/// Grid mapping every pixel to itself.
torch::Tensor identity_grid(int64_t batch, int64_t height, int64_t width,
                            const torch::TensorOptions& options = torch::kFloat32);

/// Bilinear sampling with border replication outside the image.
torch::Tensor bilinear_sample(const torch::Tensor& image, const torch::Tensor& coords);
inline torch::Tensor bilinear_sample(const torch::Tensor& image, const SampleGrid& grid) {
  return bilinear_sample(image, grid.coords);
}

/// D = 1 / (a sigma + b) with a = 1/d_min - 1/d_max and b = 1/d_max.
torch::Tensor disparity_to_depth(const torch::Tensor& sigma, double d_min = kMinDepth,
                                 double d_max = kMaxDepth);
/// Inverse of disparity_to_depth.
torch::Tensor depth_to_disparity(const torch::Tensor& depth, double d_min = kMinDepth,
                                 double d_max = kMaxDepth);

/// Full warp: sample `source` at proj(depth, T, K).
torch::Tensor warp_image(const torch::Tensor& source, const torch::Tensor& depth,
                         const CameraIntrinsics& K, const torch::Tensor& T);

/// Horizontal flip of the last dimension.
inline torch::Tensor flip_horizontal(const torch::Tensor& t) { return t.flip({-1}); }

}  // namespace sdepth
