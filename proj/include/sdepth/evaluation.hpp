#pragma once

// Depth and odometry evaluation protocols.

#include <cstddef>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "sdepth/data.hpp"
#include "sdepth/geometry.hpp"
#include "sdepth/networks.hpp"

namespace sdepth {

inline constexpr double kEvalMinDepth = 1e-3;
inline constexpr double kKittiDepthCap = 80.0;
inline constexpr double kMake3dDepthCap = 70.0;

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double d1 = 0.0;  ///< Fraction with max(pred/gt, gt/pred) < 1.25
  double d2 = 0.0;  ///< ... < 1.25^2
  double d3 = 0.0;  ///< ... < 1.25^3
  double log10 = 0.0;
  size_t count = 0;  ///< Pixels (or images, for averages) the values summarize.
};

/// Mean of each field over `items`; count is the number of items.
DepthMetrics average(const std::vector<DepthMetrics>& items);

enum class CropKind { None, Garg, Make3d };

/// Half-open pixel box [top, bottom) x [left, right).
struct CropBox {
  int top = 0, bottom = 0, left = 0, right = 0;
  int height() const { return bottom - top; }
  int width() const { return right - left; }
};

/// Rows 0.40810811-0.99189189, columns 0.03594771-0.96405229 of the image.
CropBox garg_crop(int height, int width);
/// Largest centred box with a 2:1 width:height aspect.
CropBox make3d_crop(int height, int width);
CropBox crop_box(CropKind kind, int height, int width);

/// H x W bool: gt inside (kEvalMinDepth, cap) and inside the crop.
torch::Tensor evaluation_mask(const torch::Tensor& gt, double cap, CropKind crop);

/// Metrics over valid pixels of `gt` (0 marks missing measurements). `pred`
/// must have gt's resolution and is clamped to [kEvalMinDepth, cap].
/// Throws DataError("empty evaluation") when no pixel is valid.
DepthMetrics depth_metrics(const torch::Tensor& pred, const torch::Tensor& gt, double cap = kKittiDepthCap,
                           CropKind crop = CropKind::Garg);

/// Even-count median is the mean of the two central values.
double median(std::vector<double> values);

enum class ScalingMode { PerImage, SingleScale };

struct ScalingReport {
  std::vector<double> per_image_ratios;  ///< median(gt) / median(pred) per image (NaN when skipped).
  double single_scale = 1.0;             ///< Median of the valid ratios.
  double sigma_scale = 0.0;              ///< Population standard deviation of the valid ratios.
  std::vector<size_t> skipped;           ///< Images without any valid overlap.
};

struct ScaledPredictions {
  std::vector<torch::Tensor> predictions;
  ScalingReport report;
};

/// Median ground-truth scaling; ratios use the same validity mask as the metrics.
ScaledPredictions median_scale(const std::vector<torch::Tensor>& preds, const std::vector<torch::Tensor>& gts,
                               ScalingMode mode, double cap = kKittiDepthCap, CropKind crop = CropKind::Garg);

/// Only monocular models are scale-ambiguous.
inline bool needs_median_scaling(TrainingMode mode) { return mode == TrainingMode::Mono; }

/// Blends a prediction with the un-flipped prediction on the mirrored input,
/// taking each map's reliable border and averaging in between.
torch::Tensor post_process(const torch::Tensor& disp, const torch::Tensor& disp_on_flipped);

/// Sigmoid disparity at scale 0 for a 3 x H x W image, optionally post-processed.
torch::Tensor predict_disparity(DepthNet& net, const torch::Tensor& image, bool post_process_output = false);

/// Bilinear resize of a sigmoid disparity map to (height, width), then
/// conversion to depth.
torch::Tensor disparity_to_depth_at(const torch::Tensor& sigma, int height, int width);

struct EvalOptions {
  TrainingMode mode = TrainingMode::Mono;
  bool single_scale = false;
  double cap = kKittiDepthCap;
  CropKind crop = CropKind::Garg;
  double metric_scale = 1.0;  ///< Applied to S / MS predictions.
};

struct EvalResult {
  DepthMetrics metrics;                 ///< Mean over evaluated images.
  std::vector<DepthMetrics> per_image;  ///< Entries of skipped images are left zero.
  std::optional<ScalingReport> scaling;
};

/// Scales (or, for S / MS, multiplies by metric_scale) and scores predicted
/// depth maps against ground truth of the same resolution. Rejects
/// single_scale for S / MS.
EvalResult evaluate_depths(const std::vector<torch::Tensor>& pred_depths, const std::vector<torch::Tensor>& gts,
                           const EvalOptions& options);

/// Centred 2:1 crop, 70 m cap, median scaling for M models, log10 included.
DepthMetrics make3d_eval(const torch::Tensor& pred, const torch::Tensor& gt, TrainingMode mode = TrainingMode::Mono);

struct AteResult {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_window;
};

/// Absolute trajectory error over every overlapping five-frame window.
///
/// `pairwise[i]` maps camera i points into camera i+1; `gt_poses[i]` is the
/// camera-to-world pose of frame i. Each window's chained trajectory is
/// aligned to ground truth by a least-squares scale (or a full similarity
/// transform when `umeyama` is set) and scored by the RMS position error.
AteResult odometry_ate(const std::vector<PoseSE3>& pairwise, const std::vector<PoseSE3>& gt_poses,
                       bool umeyama = false);

/// Mean and population standard deviation of per-window errors.
AteResult summarize_windows(std::vector<double> per_window);

/// Camera centres of a window, expressed in the first camera's frame.
std::vector<Eigen::Vector3d> local_trajectory(const std::vector<PoseSE3>& pairwise, size_t start, size_t frames = 5);

}  // namespace sdepth
