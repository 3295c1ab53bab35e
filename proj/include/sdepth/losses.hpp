#pragma once

// Photometric and smoothness losses for self-supervised depth training.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "sdepth/geometry.hpp"

namespace sdepth {

/// Deterministic tie-break used by the auto-mask: a pixel is kept only when
/// the warped error beats the identity error by more than this margin.
inline constexpr double kAutoMaskTieEps = 1e-5;

struct PhotometricConfig {
  double alpha = 0.85;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  int ssim_window = 3;

  void validate() const;
};

/// Per-pixel, per-channel SSIM over a mean-filter window with reflection
/// padded borders. Values lie in [-1, 1].
torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const PhotometricConfig& cfg = {});

/// pe = alpha/2 (1 - SSIM) + (1 - alpha) |a - b|, both terms averaged over
/// channels. Returns B x 1 x H x W.
torch::Tensor photometric_error(const torch::Tensor& a, const torch::Tensor& b,
                                const PhotometricConfig& cfg = {});

struct MinReprojection {
  torch::Tensor loss;    ///< B x 1 x H x W per-pixel minimum.
  torch::Tensor argmin;  ///< B x 1 x H x W int64, lowest index wins ties.
};

/// Per-pixel minimum over one error map per source view.
MinReprojection min_reprojection(const std::vector<torch::Tensor>& error_maps);

/// Per-pixel mean over the error maps (the averaging baseline).
torch::Tensor mean_reprojection(const std::vector<torch::Tensor>& error_maps);

/// Binary auto-mask: true where warped_min + eps < identity_min.
torch::Tensor auto_mask(const torch::Tensor& warped_min, const torch::Tensor& identity_min,
                        double tie_eps = kAutoMaskTieEps);

/// Edge-aware smoothness of the mean-normalized disparity against an image at
/// the same resolution. Returns a scalar tensor.
torch::Tensor smoothness(const torch::Tensor& disparity, const torch::Tensor& image);

struct LossConfig {
  PhotometricConfig photometric;
  double smoothness_weight = 1e-3;
  double d_min = kMinDepth;
  double d_max = kMaxDepth;
  bool use_min_reprojection = true;
  bool use_automask = true;
  double tie_eps = kAutoMaskTieEps;
};

struct LossBreakdown {
  torch::Tensor total;  ///< Differentiable scalar.
  double total_value = 0.0;
  std::vector<int> scales;  ///< Scale index s of each disparity (resolution H / 2^s).
  std::vector<double> per_scale_photometric;
  std::vector<double> per_scale_smoothness;
  std::vector<double> per_scale_mask_fraction;
  double mask_fraction = 0.0;  ///< Fraction of pixels kept at the finest scale given.
  std::vector<int64_t> selected_source_histogram;
  torch::Tensor mask;    ///< Auto-mask at the finest scale given (B x 1 x H x W bool).
  torch::Tensor argmin;  ///< Winning source per pixel at the finest scale given.

  /// Recomputes sum_s (photometric_s + lambda_s smoothness_s) / num_scales.
  double recompose(double smoothness_weight) const;
};

/// Full-resolution multi-scale objective.
///
/// `disparities` holds sigmoid outputs ordered fine to coarse; each is
/// upsampled to the target resolution before warping. `poses[i]` maps target
/// camera points into source i (B x 4 x 4 or 4 x 4). `automask_sources`
/// selects which sources contribute to the identity error of the auto-mask
/// (all of them when empty); with no identity source the mask keeps every pixel.
LossBreakdown multiscale_total(const std::vector<torch::Tensor>& disparities, const torch::Tensor& target,
                               const std::vector<torch::Tensor>& sources, const std::vector<torch::Tensor>& poses,
                               const CameraIntrinsics& K, const LossConfig& cfg = {},
                               const std::vector<bool>& automask_sources = {});

}  // namespace sdepth
