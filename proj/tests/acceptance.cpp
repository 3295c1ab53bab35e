// Acceptance harness: one PASS / FAIL / SKIP line per criterion.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "oracles.hpp"
#include "sdepth/evaluation.hpp"
#include "sdepth/geometry.hpp"
#include "sdepth/losses.hpp"
#include "sdepth/synthetic.hpp"
#include "smoke.hpp"

using namespace sdepth;

namespace {

struct Verdict {
  enum Kind { Pass, Fail, Skip } kind = Fail;
  std::string detail;
};

Verdict check(bool ok, const std::string& detail) { return {ok ? Verdict::Pass : Verdict::Fail, detail}; }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);

PoseSE3 random_pose(std::mt19937_64& rng, double rot, double trans) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {Eigen::Vector3d(n(rng), n(rng), n(rng)) * rot, Eigen::Vector3d(n(rng), n(rng), n(rng)) * trans};
}

// 1 ---------------------------------------------------------------------------

Verdict geometry() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto K = CameraIntrinsics::from_normalized(0.58, 1.92, 64, 32);
  double round_trip = 0.0, oracle_err = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto depth = torch::rand({1, 1, 32, 64}, f64) * 20 + 1;
    const auto pts = backproject(depth, K);
    const auto grid = project(pts, K, torch::eye(4, f64)).coords;
    round_trip = std::max(round_trip, (grid - identity_grid(1, 32, 64, f64)).abs().max().item<double>());

    const auto T = random_pose(rng, 0.02, 0.1);
    const auto moved = project(pts, K, T.to_tensor(f64)).coords;
    for (int k = 0; k < 50; ++k) {
      const int y = static_cast<int>(u(rng) * 32), x = static_cast<int>(u(rng) * 64);
      const auto p = oracle::project_pixel(K.matrix(), T.matrix(), x, y, depth[0][0][y][x].item<double>());
      const double xn = p.x() * 2.0 / 63 - 1, yn = p.y() * 2.0 / 31 - 1;
      oracle_err = std::max({oracle_err, std::abs(moved[0][y][x][0].item<double>() - xn),
                             std::abs(moved[0][y][x][1].item<double>() - yn)});
    }
  }

  double shift_err = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double tx = (u(rng) - 0.5) * 0.4, d = 1.0 + 30.0 * u(rng);
    const auto grid = project(backproject(torch::full({1, 1, 32, 64}, d, f64), K), K,
                              PoseSE3::translation_only(tx, 0, 0).to_tensor(f64))
                          .coords;
    const double x_px = (grid[0][16][32][0].item<double>() + 1) / 2 * 63;
    shift_err = std::max(shift_err, std::abs((x_px - 32) - K.fx * tx / d));
  }

  double ortho = 0.0;
  const auto aa = torch::randn({200, 3}, f64) * 2.0;
  const auto R = axis_angle_to_matrix(aa);
  ortho = (torch::matmul(R.transpose(1, 2), R) - torch::eye(3, f64)).abs().max().item<double>();
  ortho = std::max(ortho, (torch::linalg_det(R) - 1.0).abs().max().item<double>());

  return check(round_trip <= 1e-5 && oracle_err <= 1e-5 && shift_err <= 1e-5 && ortho <= 1e-6,
               fmt("round trip %.2e, vs oracle %.2e, stereo shift %.2e px, orthonormality %.2e", round_trip,
                   oracle_err, shift_err, ortho));
}

// 2 ---------------------------------------------------------------------------

Verdict gradients() {
  torch::manual_seed(2);
  const auto K = CameraIntrinsics::from_normalized(0.9, 0.9, 8, 8);
  int total = 0, good = 0;
  double worst = 0.0;
  for (int instance = 0; instance < 5; ++instance) {
    const auto target = torch::rand({1, 3, 8, 8}, f64);
    const std::vector<torch::Tensor> sources = {torch::rand({1, 3, 8, 8}, f64), torch::rand({1, 3, 8, 8}, f64)};
    const std::vector<torch::Tensor> poses = {
        PoseSE3({0.01, -0.02, 0.005}, {0.05, 0.01, 0.02}).to_tensor(f64),
        PoseSE3({-0.01, 0.01, 0.0}, {-0.04, 0.0, -0.03}).to_tensor(f64)};
    std::vector<torch::Tensor> disp = {torch::rand({1, 1, 8, 8}, f64) * 0.5 + 0.1,
                                       torch::rand({1, 1, 4, 4}, f64) * 0.5 + 0.1};
    LossConfig cfg;
    cfg.smoothness_weight = 0.05;
    for (auto& d : disp) d.requires_grad_(true);
    multiscale_total(disp, target, sources, poses, K, cfg).total.backward();

    torch::NoGradGuard guard;
    const double eps = 1e-6;
    for (auto& d : disp) {
      const auto grad = d.grad().clone();
      auto flat = d.view({-1});
      for (int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + eps;
        const double up = multiscale_total(disp, target, sources, poses, K, cfg).total_value;
        flat[i] = orig - eps;
        const double down = multiscale_total(disp, target, sources, poses, K, cfg).total_value;
        flat[i] = orig;
        const double numeric = (up - down) / (2 * eps);
        const double analytic = grad.view({-1})[i].item<double>();
        const double scale = std::max(std::abs(numeric), std::abs(analytic));
        const double rel = scale < 1e-9 ? 0.0 : std::abs(numeric - analytic) / scale;
        ++total;
        good += rel <= 1e-3;
        worst = std::max(worst, rel);
      }
    }
  }
  const double frac = static_cast<double>(good) / total;
  return check(frac >= 0.99, fmt("%.0f of %.0f entries within 1e-3 relative (%.2f%%), worst %.2e", good, total,
                                 100 * frac, worst));
}

// 3 ---------------------------------------------------------------------------

Verdict min_vs_mean() {
  torch::manual_seed(3);
  std::mt19937_64 rng(3);
  int64_t violations = 0, pixels = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 3);
    const int h = 1 + static_cast<int>(rng() % 8), w = 1 + static_cast<int>(rng() % 8);
    std::vector<torch::Tensor> maps;
    for (int i = 0; i < n; ++i) maps.push_back(torch::rand({2, 1, h, w}, f64) * std::pow(10.0, i - 1.0));
    const auto lo = min_reprojection(maps).loss, avg = mean_reprojection(maps);
    violations += (lo > avg).sum().item<int64_t>();
    pixels += lo.numel();
  }
  return check(violations == 0, fmt("%.0f violations over %.0f pixels in 1000 map sets", violations, pixels));
}

// 4 ---------------------------------------------------------------------------

Verdict automask() {
  torch::manual_seed(4);
  std::mt19937_64 rng(4);
  int64_t kept_duplicates = 0;
  const auto K = CameraIntrinsics::from_normalized(0.58, 1.92, 64, 32);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = torch::rand({2, 3, 32, 64});
    const std::vector<torch::Tensor> disp = {torch::rand({2, 1, 32, 64}), torch::rand({2, 1, 16, 32})};
    const std::vector<torch::Tensor> poses = {random_pose(rng, 0.02, 0.2).to_tensor(),
                                              random_pose(rng, 0.02, 0.2).to_tensor()};
    const auto out = multiscale_total(disp, t, {t.clone(), t.clone()}, poses, K);
    kept_duplicates += out.mask.sum().item<int64_t>();
  }

  const smoke::Params params;
  const auto scene = generate_synthetic_scene(two_plane_spec(params.preset, 77));
  const auto& Ks = scene.spec.intrinsics;
  int64_t kept = 0, interior = 0;
  for (size_t i = 1; i + 1 < scene.size(); ++i) {
    const auto depth = scene.depths[i].unsqueeze(0);
    const auto out = multiscale_total({depth_to_disparity(depth)}, scene.frames[i].unsqueeze(0),
                                      {scene.frames[i - 1].unsqueeze(0), scene.frames[i + 1].unsqueeze(0)},
                                      {scene.relative_pose(i, i - 1).to_tensor(), scene.relative_pose(i, i + 1).to_tensor()},
                                      Ks);
    const auto m = out.mask.index({0, 0, torch::indexing::Slice(4, -4), torch::indexing::Slice(8, -8)});
    kept += m.sum().item<int64_t>();
    interior += m.numel();
  }
  const double frac = static_cast<double>(kept) / static_cast<double>(interior);
  return check(kept_duplicates == 0 && frac >= 0.95,
               fmt("duplicated frames keep %.0f pixels; true geometry keeps %.4f of interior pixels",
                   kept_duplicates, frac));
}

// 5 ---------------------------------------------------------------------------

Verdict metrics() {
  const std::vector<double> g = {2, 4, 10, 30}, p = {2.5, 3.5, 12, 24};
  const auto gt = torch::tensor(g, f64).view({1, 4}), pred = torch::tensor(p, f64).view({1, 4});
  const auto m = depth_metrics(pred, gt, kKittiDepthCap, CropKind::None);
  const auto o = oracle::metrics(g, p);
  double err = 0.0;
  for (auto [a, b] : {std::pair{m.abs_rel, o.abs_rel}, {m.sq_rel, o.sq_rel}, {m.rmse, o.rmse},
                      {m.rmse_log, o.rmse_log}, {m.d1, o.d1}, {m.d2, o.d2}, {m.d3, o.d3}, {m.log10, o.log10}})
    err = std::max(err, std::abs(a - b));
  // Frozen reference values for the four-pixel table.
  const double frozen[] = {0.19374999999999998, 0.446875, 3.181980515339464, 0.19407335718372723, 0.5, 1.0, 1.0,
                           0.08274830476035612};
  const double got[] = {m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.d1, m.d2, m.d3, m.log10};
  for (int i = 0; i < 8; ++i) err = std::max(err, std::abs(frozen[i] - got[i]));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale(0.2, 2.5);
  double id_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto gg = torch::empty({4, 16}, f64).uniform_(1.0, 30.0);
    const double k = scale(rng);
    const auto mk = depth_metrics(gg * k, gg, kKittiDepthCap, CropKind::None);
    id_err = std::max({id_err, std::abs(mk.abs_rel - std::abs(k - 1)), std::abs(mk.rmse_log - std::abs(std::log(k)))});
  }
  return check(err <= 1e-9 && id_err <= 1e-9,
               fmt("table vs oracle and frozen values %.2e, scale identities %.2e", err, id_err));
}

// 6 ---------------------------------------------------------------------------

Verdict smoothness_invariance() {
  torch::manual_seed(6);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = torch::rand({1, 1, 12, 20}, f64) + 0.01;
    const auto im = torch::rand({1, 3, 12, 20}, f64);
    const double k = scale(rng);
    worst = std::max(worst, std::abs(smoothness(k * d, im).item<double>() - smoothness(d, im).item<double>()));
  }
  return check(worst <= 1e-9, fmt("max |L(kd) - L(d)| = %.2e over 100 draws", worst));
}

// 7 and 8 --------------------------------------------------------------------

smoke::Outcome smoke_outcome;
bool smoke_done = false;

Verdict smoke_training() {
  const smoke::Params params;
  smoke_outcome = smoke::run(params);
  smoke_done = true;
  const auto& o = smoke_outcome;
  const double reduction = 1.0 - o.photo_end / o.photo_start;
  return check(reduction >= 0.5 && o.ordering >= 0.9 && o.abs_rel <= 0.25 && o.steps <= 2000 && o.seconds < 1800,
               fmt("photometric reduction %.1f%%, ordering %.4f, median-scaled AbsRel %.4f, %.0f s", 100 * reduction,
                   o.ordering, o.abs_rel, o.seconds));
}

Verdict post_processing() {
  torch::manual_seed(8);
  double fixed = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = torch::rand({1, 1, 24, 80});
    fixed = std::max(fixed, (post_process(a, flip_horizontal(a)) - a).abs().max().item<double>());
  }
  if (!smoke_done) return {Verdict::Fail, "smoke model unavailable"};
  const double delta = smoke_outcome.abs_rel_pp - smoke_outcome.abs_rel;
  return check(fixed <= 1e-6 && delta <= 1e-3,
               fmt("fixed point %.2e, AbsRel %.4f -> %.4f with post-processing", fixed, smoke_outcome.abs_rel,
                   smoke_outcome.abs_rel_pp));
}

// 9 ---------------------------------------------------------------------------

Verdict odometry() {
  std::mt19937_64 rng(9);
  std::vector<PoseSE3> gt{PoseSE3::identity()};
  for (int i = 1; i < 20; ++i) gt.push_back(gt.back().compose(random_pose(rng, 0.05, 0.5)));
  std::vector<PoseSE3> pairwise;
  for (size_t i = 0; i + 1 < gt.size(); ++i) pairwise.push_back(gt[i + 1].inverse().compose(gt[i]));

  const auto exact = odometry_ate(pairwise, gt);
  auto scaled = pairwise;
  for (auto& p : scaled) p = PoseSE3(p.axis_angle(), p.translation() * 2.7);
  const auto aligned = odometry_ate(scaled, gt);

  auto noisy = pairwise;
  for (auto& p : noisy) p = random_pose(rng, 0.01, 0.05).compose(p);
  std::vector<Eigen::Matrix4d> pm, gm;
  for (const auto& p : noisy) pm.push_back(p.matrix());
  for (const auto& g : gt) gm.push_back(g.matrix());
  const auto expected = oracle::ate_windows(pm, gm);
  const auto got = odometry_ate(noisy, gt);
  double oracle_err = expected.size() == got.per_window.size() ? 0.0 : 1.0;
  for (size_t i = 0; i < std::min(expected.size(), got.per_window.size()); ++i)
    oracle_err = std::max(oracle_err, std::abs(expected[i] - got.per_window[i]));

  const double zero = std::max(exact.mean, exact.std);
  return check(zero <= 1e-12 && aligned.mean <= 1e-12 && oracle_err <= 1e-9,
               fmt("ground truth %.2e, scaled ground truth %.2e, noisy vs oracle %.2e (mean ATE %.4f)", zero,
                   aligned.mean, oracle_err, got.mean));
}

}  // namespace

int main() {
  torch::set_num_threads(std::max(1, torch::get_num_threads()));
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"geometry", geometry},
      {"gradient check", gradients},
      {"minimum never above mean", min_vs_mean},
      {"auto-mask behaviour", automask},
      {"depth metrics", metrics},
      {"smoothness scale invariance", smoothness_invariance},
      {"smoke training", smoke_training},
      {"post-processing", post_processing},
      {"odometry ATE", odometry},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = v.kind == Verdict::Pass ? "PASS" : v.kind == Verdict::Skip ? "SKIP" : "FAIL";
    failures += v.kind == Verdict::Fail;
    std::printf("[%s] %zu %s: %s (%.1f s)\n", tag, i + 1, criteria[i].first.c_str(), v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("[SKIP] 10 full-scale KITTI reproduction: needs the KITTI raw dataset and GPU training\n");
  return failures == 0 ? 0 : 1;
}
