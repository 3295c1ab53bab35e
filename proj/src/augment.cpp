#include <algorithm>
#include <numeric>

#include "sdepth/data.hpp"
#include "sdepth/errors.hpp"

namespace sdepth {

TrainingMode parse_mode(const std::string& text) {
  if (text == "M") return TrainingMode::Mono;
  if (text == "S") return TrainingMode::Stereo;
  if (text == "MS") return TrainingMode::MonoStereo;
  throw ConfigError("unknown training mode '" + text + "' (expected M, S or MS)");
}

std::string to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::Mono: return "M";
    case TrainingMode::Stereo: return "S";
    case TrainingMode::MonoStereo: return "MS";
  }
  return "?";
}

int source_count(TrainingMode m) {
  switch (m) {
    case TrainingMode::Mono: return 2;
    case TrainingMode::Stereo: return 1;
    case TrainingMode::MonoStereo: return 3;
  }
  return 0;
}

PoseSE3 stereo_pose(char side, bool flipped, double baseline) {
  if (side != 'l' && side != 'r') throw ConfigError(std::string("stereo side must be 'l' or 'r', got ") + side);
  // Points in the left camera appear shifted by -b in the right camera.
  double tx = side == 'l' ? -baseline : baseline;
  if (flipped) tx = -tx;
  return PoseSE3::translation_only(tx, 0.0, 0.0);
}

void SampleTriplet::validate(TrainingMode mode) const {
  if (sources.size() != kinds.size()) throw ConfigError("every source view needs a kind");
  if (static_cast<int>(sources.size()) != source_count(mode))
    throw ConfigError("mode " + to_string(mode) + " needs " + std::to_string(source_count(mode)) +
                      " source views, sample has " + std::to_string(sources.size()));
  const bool has_stereo = std::find(kinds.begin(), kinds.end(), SourceKind::Stereo) != kinds.end();
  if (has_stereo != uses_stereo(mode)) throw ConfigError("stereo source does not match mode " + to_string(mode));
  if (has_stereo && !stereo_baseline_pose) throw ConfigError("stereo source without a baseline pose");
  for (const auto& s : sources)
    if (s.sizes() != target.sizes()) throw ConfigError("source view differs in shape from the target");
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_train_val(size_t n, double fraction, uint64_t seed) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_val = static_cast<size_t>(std::lround(fraction * static_cast<double>(n)));
  if (n >= 2) n_val = std::clamp<size_t>(n_val, 1, n - 1);
  else n_val = 0;
  std::vector<size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

std::mt19937_64 sample_rng(uint64_t global_seed, uint64_t epoch, uint64_t sample_index) {
  std::seed_seq seq{static_cast<uint32_t>(global_seed), static_cast<uint32_t>(global_seed >> 32),
                    static_cast<uint32_t>(epoch), static_cast<uint32_t>(sample_index),
                    static_cast<uint32_t>(sample_index >> 32)};
  return std::mt19937_64(seq);
}

AugmentationParams draw_augmentation(const AugmentationConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentationParams p;
  p.flip = unit(rng) < cfg.flip_prob;
  p.jitter = unit(rng) < cfg.jitter_prob;
  const double b = 1.0 + cfg.brightness * (2.0 * unit(rng) - 1.0);
  const double c = 1.0 + cfg.contrast * (2.0 * unit(rng) - 1.0);
  const double s = 1.0 + cfg.saturation * (2.0 * unit(rng) - 1.0);
  const double h = cfg.hue * (2.0 * unit(rng) - 1.0);
  if (p.jitter) {
    p.brightness = b;
    p.contrast = c;
    p.saturation = s;
    p.hue = h;
  }
  return p;
}

namespace {

torch::Tensor grayscale(const torch::Tensor& rgb, int64_t channel_dim) {
  const auto r = rgb.select(channel_dim, 0);
  const auto g = rgb.select(channel_dim, 1);
  const auto b = rgb.select(channel_dim, 2);
  return (0.299 * r + 0.587 * g + 0.114 * b).unsqueeze(channel_dim);
}

torch::Tensor shift_hue(const torch::Tensor& rgb, int64_t cd, double shift) {
  const auto r = rgb.select(cd, 0);
  const auto g = rgb.select(cd, 1);
  const auto b = rgb.select(cd, 2);
  const auto maxc = torch::max(torch::max(r, g), b);
  const auto minc = torch::min(torch::min(r, g), b);
  const auto delta = maxc - minc;
  const auto safe_delta = torch::where(delta > 0, delta, torch::ones_like(delta));
  const auto safe_max = torch::where(maxc > 0, maxc, torch::ones_like(maxc));
  const auto sat = torch::where(maxc > 0, delta / safe_max, torch::zeros_like(maxc));

  auto hue = torch::where(maxc == r, torch::remainder((g - b) / safe_delta, 6.0),
                          torch::where(maxc == g, (b - r) / safe_delta + 2.0, (r - g) / safe_delta + 4.0));
  hue = torch::where(delta > 0, hue / 6.0, torch::zeros_like(hue));
  hue = torch::remainder(hue + shift, 1.0);

  const auto h6 = hue * 6.0;
  const auto sector = torch::floor(h6);
  const auto f = h6 - sector;
  const auto idx = torch::remainder(sector, 6.0);
  const auto& v = maxc;
  const auto p = v * (1.0 - sat);
  const auto q = v * (1.0 - sat * f);
  const auto t = v * (1.0 - sat * (1.0 - f));

  auto pick = [&](const torch::Tensor& a0, const torch::Tensor& a1, const torch::Tensor& a2, const torch::Tensor& a3,
                  const torch::Tensor& a4, const torch::Tensor& a5) {
    return torch::where(idx == 0, a0,
           torch::where(idx == 1, a1, torch::where(idx == 2, a2, torch::where(idx == 3, a3, torch::where(idx == 4, a4, a5)))));
  };
  const auto r2 = pick(v, q, p, p, t, v);
  const auto g2 = pick(t, v, v, q, p, p);
  const auto b2 = pick(p, p, t, v, v, q);
  return torch::stack({r2, g2, b2}, cd);
}

}  // namespace

torch::Tensor color_jitter(const torch::Tensor& image, const AugmentationParams& params) {
  if (!params.jitter) return image;
  const int64_t cd = image.dim() == 4 ? 1 : 0;
  if (image.size(cd) != 3) throw ConfigError("color jitter expects RGB images");
  auto x = (image * params.brightness).clamp(0.0, 1.0);
  std::vector<int64_t> spatial = image.dim() == 4 ? std::vector<int64_t>{1, 2, 3} : std::vector<int64_t>{0, 1, 2};
  const auto mean_gray = grayscale(x, cd).mean(spatial, /*keepdim=*/true);
  x = (params.contrast * x + (1.0 - params.contrast) * mean_gray).clamp(0.0, 1.0);
  x = (params.saturation * x + (1.0 - params.saturation) * grayscale(x, cd)).clamp(0.0, 1.0);
  if (params.hue != 0.0) x = shift_hue(x, cd, params.hue);
  return x;
}

AugmentedSample augment(const SampleTriplet& triplet, const AugmentationParams& params) {
  AugmentedSample out;
  out.params = params;
  SampleTriplet loss = triplet;
  if (params.flip) {
    loss.target = flip_horizontal(triplet.target);
    for (auto& s : loss.sources) s = flip_horizontal(s);
    loss.intrinsics = triplet.intrinsics.flipped();
    if (triplet.stereo_baseline_pose) loss.stereo_baseline_pose = triplet.stereo_baseline_pose->mirrored_x();
  }
  SampleTriplet net = loss;
  if (params.jitter) {
    net.target = color_jitter(loss.target, params);
    for (auto& s : net.sources) s = color_jitter(s, params);
  }
  out.network_inputs = std::move(net);
  out.loss_targets = std::move(loss);
  return out;
}

AugmentedSample augment(const SampleTriplet& triplet, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  return augment(triplet, draw_augmentation(cfg, rng));
}

}  // namespace sdepth
