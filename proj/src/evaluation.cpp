#include "sdepth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

#include "sdepth/errors.hpp"

namespace sdepth {

namespace {

void check_map(const torch::Tensor& t, const char* name) {
  if (t.dim() != 2) throw ConfigError(std::string(name) + " must be an H x W depth map");
}

}  // namespace

DepthMetrics average(const std::vector<DepthMetrics>& items) {
  DepthMetrics m;
  if (items.empty()) return m;
  for (const auto& x : items) {
    m.abs_rel += x.abs_rel;
    m.sq_rel += x.sq_rel;
    m.rmse += x.rmse;
    m.rmse_log += x.rmse_log;
    m.d1 += x.d1;
    m.d2 += x.d2;
    m.d3 += x.d3;
    m.log10 += x.log10;
  }
  const double n = static_cast<double>(items.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse /= n;
  m.rmse_log /= n;
  m.d1 /= n;
  m.d2 /= n;
  m.d3 /= n;
  m.log10 /= n;
  m.count = items.size();
  return m;
}

CropBox garg_crop(int height, int width) {
  CropBox b;
  b.top = static_cast<int>(0.40810811 * height);
  b.bottom = static_cast<int>(0.99189189 * height);
  b.left = static_cast<int>(0.03594771 * width);
  b.right = static_cast<int>(0.96405229 * width);
  return b;
}

CropBox make3d_crop(int height, int width) {
  int h = width / 2, w = width;
  if (h > height) {
    h = height;
    w = 2 * height;
  }
  CropBox b;
  b.top = (height - h) / 2;
  b.bottom = b.top + h;
  b.left = (width - w) / 2;
  b.right = b.left + w;
  return b;
}

CropBox crop_box(CropKind kind, int height, int width) {
  switch (kind) {
    case CropKind::Garg: return garg_crop(height, width);
    case CropKind::Make3d: return make3d_crop(height, width);
    case CropKind::None: break;
  }
  return {0, height, 0, width};
}

torch::Tensor evaluation_mask(const torch::Tensor& gt, double cap, CropKind crop) {
  check_map(gt, "gt");
  const auto g = gt.to(torch::kFloat64);
  auto mask = (g > kEvalMinDepth) & (g < cap);
  const CropBox b = crop_box(crop, static_cast<int>(gt.size(0)), static_cast<int>(gt.size(1)));
  auto box = torch::zeros_like(mask);
  box.slice(0, b.top, b.bottom).slice(1, b.left, b.right).fill_(true);
  return mask & box;
}

DepthMetrics depth_metrics(const torch::Tensor& pred, const torch::Tensor& gt, double cap, CropKind crop) {
  check_map(pred, "pred");
  check_map(gt, "gt");
  if (pred.sizes() != gt.sizes()) throw ConfigError("prediction and ground truth resolutions differ");
  const auto mask = evaluation_mask(gt, cap, crop);
  const auto g = gt.to(torch::kFloat64).masked_select(mask);
  if (g.numel() == 0) throw DataError("empty evaluation: no valid ground-truth pixels");
  const auto p = pred.to(torch::kFloat64).masked_select(mask).clamp(kEvalMinDepth, cap);

  DepthMetrics m;
  m.count = static_cast<size_t>(g.numel());
  const auto thresh = torch::max(g / p, p / g);
  m.d1 = (thresh < 1.25).to(torch::kFloat64).mean().item<double>();
  m.d2 = (thresh < 1.25 * 1.25).to(torch::kFloat64).mean().item<double>();
  m.d3 = (thresh < 1.25 * 1.25 * 1.25).to(torch::kFloat64).mean().item<double>();
  const auto diff = g - p;
  m.rmse = std::sqrt(diff.square().mean().item<double>());
  m.rmse_log = std::sqrt((g.log() - p.log()).square().mean().item<double>());
  m.abs_rel = (diff.abs() / g).mean().item<double>();
  m.sq_rel = (diff.square() / g).mean().item<double>();
  m.log10 = (p.log10() - g.log10()).abs().mean().item<double>();
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median of an empty set");
  const size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double upper = v[n / 2];
  if (n % 2) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + n / 2);
  return 0.5 * (lower + upper);
}

namespace {

double tensor_median(const torch::Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous();
  return median(std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel()));
}

}  // namespace

ScaledPredictions median_scale(const std::vector<torch::Tensor>& preds, const std::vector<torch::Tensor>& gts,
                               ScalingMode mode, double cap, CropKind crop) {
  if (preds.size() != gts.size()) throw ConfigError("prediction and ground-truth counts differ");
  ScaledPredictions out;
  auto& r = out.report;
  std::vector<double> valid;
  for (size_t i = 0; i < preds.size(); ++i) {
    check_map(preds[i], "pred");
    if (preds[i].sizes() != gts[i].sizes()) throw ConfigError("prediction and ground truth resolutions differ");
    const auto mask = evaluation_mask(gts[i], cap, crop);
    const auto p = preds[i].masked_select(mask);
    const auto g = gts[i].masked_select(mask);
    double ratio = std::nan("");
    if (g.numel() > 0) {
      const double mp = tensor_median(p);
      if (mp > 0) ratio = tensor_median(g) / mp;
    }
    if (std::isnan(ratio)) {
      r.skipped.push_back(i);
    } else {
      valid.push_back(ratio);
    }
    r.per_image_ratios.push_back(ratio);
  }
  if (!valid.empty()) {
    r.single_scale = median(valid);
    const double mean = std::accumulate(valid.begin(), valid.end(), 0.0) / static_cast<double>(valid.size());
    double var = 0.0;
    for (double x : valid) var += (x - mean) * (x - mean);
    r.sigma_scale = std::sqrt(var / static_cast<double>(valid.size()));
  }
  for (size_t i = 0; i < preds.size(); ++i) {
    const double ratio = r.per_image_ratios[i];
    const double s = mode == ScalingMode::SingleScale ? r.single_scale : (std::isnan(ratio) ? 1.0 : ratio);
    out.predictions.push_back(preds[i] * s);
  }
  return out;
}

torch::Tensor post_process(const torch::Tensor& disp, const torch::Tensor& disp_on_flipped) {
  if (disp.sizes() != disp_on_flipped.sizes()) throw ConfigError("post_process: shape mismatch");
  if (disp.dim() < 2) throw ConfigError("post_process: expected ... x H x W maps");
  const int64_t h = disp.size(-2), w = disp.size(-1);
  const auto r = flip_horizontal(disp_on_flipped);
  const auto mean = 0.5 * (disp + r);
  const auto x = torch::linspace(0, 1, w, disp.options()).expand({h, w});
  const auto l_mask = 1.0 - (20.0 * (x - 0.05)).clamp(0.0, 1.0);
  const auto r_mask = flip_horizontal(l_mask);
  return r_mask * disp + l_mask * r + (1.0 - l_mask - r_mask) * mean;
}

torch::Tensor predict_disparity(DepthNet& net, const torch::Tensor& image, bool post_process_output) {
  torch::NoGradGuard guard;
  net->eval();
  auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (!post_process_output) return net->forward(x)[0][0];
  const auto both = net->forward(torch::cat({x, flip_horizontal(x)}, 0))[0];
  return post_process(both[0], both[1]);
}

torch::Tensor disparity_to_depth_at(const torch::Tensor& sigma, int height, int width) {
  auto s = sigma.to(torch::kFloat64);
  while (s.dim() < 4) s = s.unsqueeze(0);
  const auto scaled = 1.0 / disparity_to_depth(s);
  const auto resized = torch::nn::functional::interpolate(
      scaled, torch::nn::functional::InterpolateFuncOptions()
                  .size(std::vector<int64_t>{height, width})
                  .mode(torch::kBilinear)
                  .align_corners(false));
  return (1.0 / resized)[0][0];
}

EvalResult evaluate_depths(const std::vector<torch::Tensor>& pred_depths, const std::vector<torch::Tensor>& gts,
                           const EvalOptions& opt) {
  if (pred_depths.size() != gts.size()) throw ConfigError("prediction and ground-truth counts differ");
  if (pred_depths.empty()) throw DataError("empty evaluation: no images");
  EvalResult res;
  std::vector<torch::Tensor> preds;
  std::vector<bool> skip(gts.size(), false);
  if (needs_median_scaling(opt.mode)) {
    auto scaled = median_scale(pred_depths, gts, opt.single_scale ? ScalingMode::SingleScale : ScalingMode::PerImage,
                               opt.cap, opt.crop);
    preds = std::move(scaled.predictions);
    for (size_t i : scaled.report.skipped) skip[i] = true;
    res.scaling = std::move(scaled.report);
  } else {
    if (opt.single_scale)
      throw ConfigError("single-scale evaluation needs a monocular model; " + to_string(opt.mode) +
                        " predictions are already metric");
    for (const auto& p : pred_depths) preds.push_back(p * opt.metric_scale);
    for (size_t i = 0; i < gts.size(); ++i) skip[i] = !evaluation_mask(gts[i], opt.cap, opt.crop).any().item<bool>();
  }
  std::vector<DepthMetrics> kept;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (skip[i]) {
      res.per_image.emplace_back();
      continue;
    }
    res.per_image.push_back(depth_metrics(preds[i], gts[i], opt.cap, opt.crop));
    kept.push_back(res.per_image.back());
  }
  if (kept.empty()) throw DataError("empty evaluation: no image has valid ground truth");
  res.metrics = average(kept);
  return res;
}

DepthMetrics make3d_eval(const torch::Tensor& pred, const torch::Tensor& gt, TrainingMode mode) {
  torch::Tensor p = pred;
  if (needs_median_scaling(mode)) {
    auto scaled = median_scale({pred}, {gt}, ScalingMode::PerImage, kMake3dDepthCap, CropKind::Make3d);
    if (!scaled.report.skipped.empty()) throw DataError("empty evaluation: no valid ground-truth pixels");
    p = scaled.predictions[0];
  }
  return depth_metrics(p, gt, kMake3dDepthCap, CropKind::Make3d);
}

std::vector<Eigen::Vector3d> local_trajectory(const std::vector<PoseSE3>& pairwise, size_t start, size_t frames) {
  if (start + frames - 1 > pairwise.size()) throw DataError("trajectory window exceeds the pose sequence");
  std::vector<Eigen::Vector3d> centres{Eigen::Vector3d::Zero()};
  PoseSE3 first_to_k;
  for (size_t k = 1; k < frames; ++k) {
    first_to_k = pairwise[start + k - 1].compose(first_to_k);
    centres.push_back(first_to_k.inverse().translation());
  }
  return centres;
}

AteResult odometry_ate(const std::vector<PoseSE3>& pairwise, const std::vector<PoseSE3>& gt_poses, bool umeyama) {
  constexpr size_t kWindow = 5;
  if (gt_poses.size() < kWindow) throw DataError("odometry evaluation needs at least 5 frames");
  if (pairwise.size() + 1 != gt_poses.size())
    throw ConfigError("expected " + std::to_string(gt_poses.size() - 1) + " pairwise poses, got " +
                      std::to_string(pairwise.size()));
  AteResult res;
  for (size_t start = 0; start + kWindow <= gt_poses.size(); ++start) {
    const auto pred = local_trajectory(pairwise, start, kWindow);
    const PoseSE3 world_to_first = gt_poses[start].inverse();
    std::vector<Eigen::Vector3d> gt;
    for (size_t k = 0; k < kWindow; ++k) gt.push_back(world_to_first.compose(gt_poses[start + k]).translation());

    std::vector<Eigen::Vector3d> aligned(kWindow);
    if (umeyama) {
      Eigen::Matrix<double, 3, Eigen::Dynamic> src(3, kWindow), dst(3, kWindow);
      for (size_t k = 0; k < kWindow; ++k) {
        src.col(k) = pred[k];
        dst.col(k) = gt[k];
      }
      const Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
      for (size_t k = 0; k < kWindow; ++k) aligned[k] = T.topLeftCorner<3, 3>() * pred[k] + T.topRightCorner<3, 1>();
    } else {
      double num = 0.0, den = 0.0;
      for (size_t k = 0; k < kWindow; ++k) {
        num += gt[k].dot(pred[k]);
        den += pred[k].squaredNorm();
      }
      const double s = den > 0 ? num / den : 1.0;
      for (size_t k = 0; k < kWindow; ++k) aligned[k] = s * pred[k];
    }
    double sq = 0.0;
    for (size_t k = 0; k < kWindow; ++k) sq += (aligned[k] - gt[k]).squaredNorm();
    res.per_window.push_back(std::sqrt(sq / kWindow));
  }
  return summarize_windows(std::move(res.per_window));
}

AteResult summarize_windows(std::vector<double> per_window) {
  if (per_window.empty()) throw DataError("no trajectory windows to summarize");
  AteResult res;
  res.per_window = std::move(per_window);
  const double n = static_cast<double>(res.per_window.size());
  res.mean = std::accumulate(res.per_window.begin(), res.per_window.end(), 0.0) / n;
  double var = 0.0;
  for (double e : res.per_window) var += (e - res.mean) * (e - res.mean);
  res.std = std::sqrt(var / n);
  return res;
}

}  // namespace sdepth
