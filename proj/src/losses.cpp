#include "sdepth/losses.hpp"

#include <cmath>
#include <sstream>

#include "sdepth/errors.hpp"

namespace sdepth {

namespace F = torch::nn::functional;

void PhotometricConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("photometric alpha must lie in [0, 1]");
  if (!(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) throw ConfigError("SSIM constants must be positive");
  if (ssim_window < 3 || ssim_window % 2 == 0) throw ConfigError("SSIM window must be odd and >= 3");
}

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream msg;
    msg << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw ConfigError(msg.str());
  }
}

torch::Tensor local_mean(const torch::Tensor& x, int window) {
  const int pad = window / 2;
  const auto padded = F::pad(x, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReflect));
  return F::avg_pool2d(padded, F::AvgPool2dFuncOptions(window).stride(1));
}

int scale_index(int64_t full, int64_t level) {
  if (level <= 0 || full % level != 0) throw ConfigError("disparity resolution must divide the image resolution");
  const int64_t ratio = full / level;
  int s = 0;
  while ((int64_t{1} << s) < ratio) ++s;
  if ((int64_t{1} << s) != ratio) throw ConfigError("disparity scales must be powers of two of the image resolution");
  return s;
}

}  // namespace

torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const PhotometricConfig& cfg) {
  cfg.validate();
  check_same_shape(a, b, "ssim");
  const int w = cfg.ssim_window;
  const auto mu_a = local_mean(a, w);
  const auto mu_b = local_mean(b, w);
  const auto var_a = local_mean(a * a, w) - mu_a * mu_a;
  const auto var_b = local_mean(b * b, w) - mu_b * mu_b;
  const auto cov = local_mean(a * b, w) - mu_a * mu_b;
  const auto num = (2.0 * mu_a * mu_b + cfg.ssim_c1) * (2.0 * cov + cfg.ssim_c2);
  const auto den = (mu_a * mu_a + mu_b * mu_b + cfg.ssim_c1) * (var_a + var_b + cfg.ssim_c2);
  return (num / den).clamp(-1.0, 1.0);
}

torch::Tensor photometric_error(const torch::Tensor& a, const torch::Tensor& b, const PhotometricConfig& cfg) {
  check_same_shape(a, b, "photometric_error");
  const auto l1 = (a - b).abs().mean(1, /*keepdim=*/true);
  if (cfg.alpha == 0.0) return l1;
  const auto dssim = (1.0 - ssim(a, b, cfg)).mean(1, /*keepdim=*/true);
  return 0.5 * cfg.alpha * dssim + (1.0 - cfg.alpha) * l1;
}

MinReprojection min_reprojection(const std::vector<torch::Tensor>& maps) {
  if (maps.empty()) throw ConfigError("min_reprojection needs at least one error map");
  MinReprojection out{maps.front(), torch::zeros(maps.front().sizes(), torch::kLong)};
  for (size_t i = 1; i < maps.size(); ++i) {
    check_same_shape(maps.front(), maps[i], "min_reprojection");
    const auto better = maps[i] < out.loss;
    out.loss = torch::where(better, maps[i], out.loss);
    out.argmin.masked_fill_(better, static_cast<int64_t>(i));
  }
  return out;
}

torch::Tensor mean_reprojection(const std::vector<torch::Tensor>& maps) {
  if (maps.empty()) throw ConfigError("mean_reprojection needs at least one error map");
  auto sum = maps.front();
  for (size_t i = 1; i < maps.size(); ++i) {
    check_same_shape(maps.front(), maps[i], "mean_reprojection");
    sum = sum + maps[i];
  }
  return sum / static_cast<double>(maps.size());
}

torch::Tensor auto_mask(const torch::Tensor& warped_min, const torch::Tensor& identity_min, double tie_eps) {
  check_same_shape(warped_min, identity_min, "auto_mask");
  return (warped_min.detach() + tie_eps) < identity_min.detach();
}

torch::Tensor smoothness(const torch::Tensor& disp, const torch::Tensor& image) {
  if (disp.dim() != 4 || disp.size(1) != 1) throw ConfigError("disparity must be B x 1 x H x W");
  if (image.dim() != 4 || image.size(0) != disp.size(0) || image.size(2) != disp.size(2) ||
      image.size(3) != disp.size(3))
    throw ConfigError("smoothness: image and disparity resolutions differ");

  const auto norm = disp / disp.mean({2, 3}, /*keepdim=*/true);
  const auto h = disp.size(2);
  const auto w = disp.size(3);
  const auto dx_d = (norm.narrow(3, 0, w - 1) - norm.narrow(3, 1, w - 1)).abs();
  const auto dy_d = (norm.narrow(2, 0, h - 1) - norm.narrow(2, 1, h - 1)).abs();
  const auto dx_i = (image.narrow(3, 0, w - 1) - image.narrow(3, 1, w - 1)).abs().mean(1, true);
  const auto dy_i = (image.narrow(2, 0, h - 1) - image.narrow(2, 1, h - 1)).abs().mean(1, true);
  return (dx_d * torch::exp(-dx_i)).mean() + (dy_d * torch::exp(-dy_i)).mean();
}

double LossBreakdown::recompose(double smoothness_weight) const {
  double sum = 0.0;
  for (size_t i = 0; i < scales.size(); ++i)
    sum += per_scale_photometric[i] + smoothness_weight / std::ldexp(1.0, scales[i]) * per_scale_smoothness[i];
  return scales.empty() ? 0.0 : sum / static_cast<double>(scales.size());
}

LossBreakdown multiscale_total(const std::vector<torch::Tensor>& disparities, const torch::Tensor& target,
                               const std::vector<torch::Tensor>& sources, const std::vector<torch::Tensor>& poses,
                               const CameraIntrinsics& K, const LossConfig& cfg,
                               const std::vector<bool>& automask_sources) {
  if (disparities.empty()) throw ConfigError("multiscale_total needs at least one disparity scale");
  if (sources.empty()) throw ConfigError("multiscale_total needs at least one source view");
  if (poses.size() != sources.size()) {
    std::ostringstream msg;
    msg << "pose count " << poses.size() << " does not match source count " << sources.size();
    throw ConfigError(msg.str());
  }
  if (!automask_sources.empty() && automask_sources.size() != sources.size())
    throw ConfigError("automask_sources must have one flag per source");
  for (const auto& s : sources) check_same_shape(target, s, "multiscale_total");

  const auto height = target.size(2);
  const auto width = target.size(3);

  // Identity errors do not depend on the network, so they are shared by all scales.
  std::vector<torch::Tensor> identity_maps;
  for (size_t i = 0; i < sources.size(); ++i)
    if (automask_sources.empty() || automask_sources[i])
      identity_maps.push_back(photometric_error(target, sources[i], cfg.photometric).detach());
  torch::Tensor identity_min;
  if (cfg.use_automask && !identity_maps.empty()) identity_min = min_reprojection(identity_maps).loss;

  LossBreakdown out;
  out.selected_source_histogram.assign(sources.size(), 0);
  torch::Tensor total = torch::zeros({}, target.options());
  for (size_t k = 0; k < disparities.size(); ++k) {
    const auto& disp = disparities[k];
    const int s = scale_index(height, disp.size(2));
    if (scale_index(width, disp.size(3)) != s) throw ConfigError("disparity aspect ratio differs from the image");

    auto full = disp;
    if (s > 0)
      full = F::interpolate(disp, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{height, width})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    const auto depth = disparity_to_depth(full, cfg.d_min, cfg.d_max);
    const auto points = backproject(depth, K);

    std::vector<torch::Tensor> errors;
    errors.reserve(sources.size());
    for (size_t i = 0; i < sources.size(); ++i) {
      const auto warped = bilinear_sample(sources[i], project(points, K, poses[i]));
      errors.push_back(photometric_error(target, warped, cfg.photometric));
    }

    torch::Tensor reprojection;
    torch::Tensor argmin;
    if (cfg.use_min_reprojection) {
      auto m = min_reprojection(errors);
      reprojection = m.loss;
      argmin = m.argmin;
    } else {
      reprojection = mean_reprojection(errors);
    }

    torch::Tensor mask = identity_min.defined() ? auto_mask(reprojection, identity_min, cfg.tie_eps)
                                                : torch::ones_like(reprojection, torch::kBool);
    const auto kept = mask.sum().item<int64_t>();
    torch::Tensor photometric = kept > 0
                                    ? (reprojection * mask.to(reprojection.dtype())).sum() / static_cast<double>(kept)
                                    : reprojection.sum() * 0.0;

    auto image = target;
    if (s > 0)
      image = F::interpolate(target, F::InterpolateFuncOptions()
                                         .size(std::vector<int64_t>{disp.size(2), disp.size(3)})
                                         .mode(torch::kArea));
    const auto smooth = smoothness(disp, image);
    const double lambda_s = cfg.smoothness_weight / std::ldexp(1.0, s);
    total = total + photometric + lambda_s * smooth;

    out.scales.push_back(s);
    out.per_scale_photometric.push_back(photometric.item<double>());
    out.per_scale_smoothness.push_back(smooth.item<double>());
    out.per_scale_mask_fraction.push_back(static_cast<double>(kept) / static_cast<double>(mask.numel()));
    if (k == 0) {
      out.mask = mask;
      out.mask_fraction = out.per_scale_mask_fraction.back();
      if (argmin.defined()) {
        out.argmin = argmin;
        const auto counts = torch::bincount(argmin.flatten(), {}, static_cast<int64_t>(sources.size()));
        for (size_t i = 0; i < sources.size(); ++i) out.selected_source_histogram[i] = counts[i].item<int64_t>();
      }
    }
  }
  out.total = total / static_cast<double>(disparities.size());
  out.total_value = out.total.item<double>();
  return out;
}

}  // namespace sdepth
