#include "sdepth/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sdepth/errors.hpp"

namespace sdepth {

namespace fs = std::filesystem;

namespace {

torch::Tensor as_map(const torch::Tensor& t) {
  auto m = t;
  while (m.dim() > 2 && m.size(0) == 1) m = m.squeeze(0);
  if (m.dim() != 2) throw ConfigError("expected an H x W map");
  return m;
}

void write_mat(const fs::path& path, const cv::Mat& mat) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw DataError("failed to write image: " + path.string());
}

}  // namespace

double percentile(const torch::Tensor& values, double q) {
  auto v = values.to(torch::kFloat64).flatten();
  v = v.masked_select(torch::isfinite(v));
  if (v.numel() == 0) throw ConfigError("no finite values");
  v = std::get<0>(v.sort());
  const double pos = q / 100.0 * static_cast<double>(v.numel() - 1);
  const auto lo = static_cast<int64_t>(std::floor(pos));
  const auto hi = std::min<int64_t>(lo + 1, v.numel() - 1);
  const double a = v[lo].item<double>(), b = v[hi].item<double>();
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

Colormap parse_colormap(const std::string& name) {
  if (name == "magma") return Colormap::Magma;
  if (name == "viridis") return Colormap::Viridis;
  if (name == "gray" || name == "grey") return Colormap::Gray;
  throw ConfigError("unknown colormap '" + name + "' (expected magma, viridis or gray)");
}

torch::Tensor colorize(const torch::Tensor& values, Colormap map) {
  const auto m = as_map(values).to(torch::kFloat64);
  if (!torch::isfinite(m).any().item<bool>()) throw ConfigError("cannot render a map without finite values");
  const double lo = percentile(m, 5.0), hi = percentile(m, 95.0);
  auto n = hi > lo ? (m - lo) / (hi - lo) : torch::full_like(m, 0.5);
  n = torch::where(torch::isfinite(n), n.clamp(0.0, 1.0), torch::zeros_like(n));
  auto bytes = (n * 255.0).round().to(torch::kUInt8).contiguous();

  const int h = static_cast<int>(m.size(0)), w = static_cast<int>(m.size(1));
  cv::Mat gray(h, w, CV_8UC1, bytes.data_ptr<uint8_t>());
  cv::Mat bgr;
  switch (map) {
    case Colormap::Magma: cv::applyColorMap(gray, bgr, cv::COLORMAP_MAGMA); break;
    case Colormap::Viridis: cv::applyColorMap(gray, bgr, cv::COLORMAP_VIRIDIS); break;
    case Colormap::Gray: cv::cvtColor(gray, bgr, cv::COLOR_GRAY2BGR); break;
  }
  return torch::from_blob(bgr.data, {h, w, 3}, torch::kUInt8).clone();
}

void render_depth_png(const fs::path& path, const torch::Tensor& values, Colormap map) {
  auto img = colorize(values, map);
  cv::Mat mat(static_cast<int>(img.size(0)), static_cast<int>(img.size(1)), CV_8UC3, img.data_ptr<uint8_t>());
  write_mat(path, mat);
}

void render_automask_png(const fs::path& path, const torch::Tensor& mask) {
  const auto m = as_map(mask).to(torch::kFloat64);
  if (!((m == 0) | (m == 1)).all().item<bool>()) throw ConfigError("auto-mask image needs a binary mask");
  auto bytes = (m * 255.0).to(torch::kUInt8).contiguous();
  cv::Mat mat(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)), CV_8UC1, bytes.data_ptr<uint8_t>());
  write_mat(path, mat);
}

LogCurve parse_train_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read training log " + path.string());
  LogCurve c;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    bool val = false;
    int64_t step = -1;
    int epoch = -1;
    double loss = std::nan("");
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) {
        if (tok == "val") val = true;
        continue;
      }
      const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      try {
        if (k == "step") step = std::stoll(v);
        else if (k == "epoch") epoch = std::stoi(v);
        else if (k == "loss") loss = std::stod(v);
      } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed field '" + tok + "'");
      }
    }
    if (val && epoch >= 0) {
      c.val_epochs.push_back(epoch);
      c.val_losses.push_back(loss);
    } else if (step >= 0) {
      c.steps.push_back(step);
      c.losses.push_back(loss);
    }
  }
  return c;
}

void render_loss_curve_png(const fs::path& path, const LogCurve& curve, int width, int height) {
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 70, right = 20, top = 20, bottom = 40;
  const cv::Point origin(left, height - bottom);
  cv::line(img, origin, {width - right, height - bottom}, cv::Scalar(0, 0, 0));
  cv::line(img, origin, {left, top}, cv::Scalar(0, 0, 0));

  std::vector<double> all = curve.losses;
  all.insert(all.end(), curve.val_losses.begin(), curve.val_losses.end());
  all.erase(std::remove_if(all.begin(), all.end(), [](double v) { return !std::isfinite(v); }), all.end());
  if (!curve.steps.empty() && !all.empty()) {
    const double ymin = *std::min_element(all.begin(), all.end());
    double ymax = *std::max_element(all.begin(), all.end());
    if (ymax <= ymin) ymax = ymin + 1.0;
    const double xmax = std::max<double>(1.0, static_cast<double>(curve.steps.back() + 1));
    auto to_px = [&](double x, double y) {
      return cv::Point(left + static_cast<int>(std::lround(x / xmax * (width - left - right))),
                       height - bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (height - top - bottom))));
    };
    std::vector<cv::Point> pts;
    for (size_t i = 0; i < curve.steps.size(); ++i)
      if (std::isfinite(curve.losses[i])) pts.push_back(to_px(static_cast<double>(curve.steps[i]), curve.losses[i]));
    cv::polylines(img, pts, false, cv::Scalar(180, 90, 30), 1, cv::LINE_AA);

    if (!curve.val_epochs.empty()) {
      const double steps_per_epoch =
          static_cast<double>(curve.steps.back() + 1) / static_cast<double>(curve.val_epochs.back() + 1);
      for (size_t i = 0; i < curve.val_epochs.size(); ++i)
        if (std::isfinite(curve.val_losses[i]))
          cv::circle(img, to_px((curve.val_epochs[i] + 1) * steps_per_epoch, curve.val_losses[i]), 3,
                     cv::Scalar(40, 40, 200), cv::FILLED, cv::LINE_AA);
    }
    char label[32];
    std::snprintf(label, sizeof(label), "%.4g", ymax);
    cv::putText(img, label, {4, top + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0));
    std::snprintf(label, sizeof(label), "%.4g", ymin);
    cv::putText(img, label, {4, height - bottom}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0));
    std::snprintf(label, sizeof(label), "%lld", static_cast<long long>(curve.steps.back()));
    cv::putText(img, label, {width - right - 40, height - bottom + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(0, 0, 0));
  }
  cv::putText(img, "step", {width / 2, height - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0));
  write_mat(path, img);
}

std::string format_metrics_table(const DepthMetrics& m, bool include_log10) {
  std::vector<std::pair<std::string, double>> cols = {
      {"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel}, {"rmse", m.rmse}, {"rmse_log", m.rmse_log},
      {"d1", m.d1},           {"d2", m.d2},         {"d3", m.d3}};
  if (include_log10) cols.emplace_back("log10", m.log10);
  std::ostringstream head, row;
  for (const auto& [name, value] : cols) {
    head << std::setw(10) << name;
    row << std::setw(10) << std::fixed << std::setprecision(4) << value;
  }
  return head.str() + "\n" + row.str() + "\n";
}

void write_metrics_record(const fs::path& path, const EvalResult& result,
                          const std::vector<std::pair<std::string, std::string>>& info) {
  auto metrics_json = [](const DepthMetrics& m) {
    return nlohmann::ordered_json{{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel}, {"rmse", m.rmse},
                                  {"rmse_log", m.rmse_log}, {"d1", m.d1},       {"d2", m.d2},
                                  {"d3", m.d3},            {"log10", m.log10}, {"count", m.count}};
  };
  nlohmann::ordered_json j;
  for (const auto& [k, v] : info) j["info"][k] = v;
  j["metrics"] = metrics_json(result.metrics);
  j["per_image"] = nlohmann::ordered_json::array();
  for (const auto& m : result.per_image) j["per_image"].push_back(metrics_json(m));
  if (result.scaling) {
    const auto& s = *result.scaling;
    nlohmann::ordered_json ratios = nlohmann::ordered_json::array();
    for (double r : s.per_image_ratios) ratios.push_back(std::isnan(r) ? nlohmann::ordered_json() : nlohmann::ordered_json(r));
    j["scaling"] = {{"single_scale", s.single_scale},
                    {"sigma_scale", s.sigma_scale},
                    {"per_image_ratios", ratios},
                    {"skipped", s.skipped}};
  }
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace sdepth
