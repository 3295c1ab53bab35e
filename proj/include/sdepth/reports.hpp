#pragma once

// Figure-style artifacts: colourized depth, auto-mask images, loss curves and
// metric tables.

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdepth/evaluation.hpp"

namespace sdepth {

/// Linear-interpolated percentile (q in [0, 100]) of the finite entries.
double percentile(const torch::Tensor& values, double q);

enum class Colormap { Magma, Viridis, Gray };
Colormap parse_colormap(const std::string& name);

/// H x W map stretched from its 5th-95th percentile range to [0, 1] and
/// colourized. Non-finite pixels get the lowest colour. Returns H x W x 3
/// uint8 in BGR order (the byte layout written to disk).
torch::Tensor colorize(const torch::Tensor& values, Colormap map = Colormap::Magma);

/// Writes colorize(values) as a PNG. Throws ConfigError when no entry is finite.
void render_depth_png(const std::filesystem::path& path, const torch::Tensor& values, Colormap map = Colormap::Magma);

/// Black where the mask is 0, white where it is 1. Accepts H x W, 1 x H x W or
/// 1 x 1 x H x W; any other value than 0 / 1 is rejected.
void render_automask_png(const std::filesystem::path& path, const torch::Tensor& mask);

struct LogCurve {
  std::vector<int64_t> steps;
  std::vector<double> losses;
  std::vector<int> val_epochs;
  std::vector<double> val_losses;
};

/// Reads "step=... loss=..." and "val epoch=... loss=..." lines.
LogCurve parse_train_log(const std::filesystem::path& path);

/// Training loss (and validation loss, when present, at epoch ends) against step.
void render_loss_curve_png(const std::filesystem::path& path, const LogCurve& curve, int width = 800,
                           int height = 400);

/// Aligned plain-text table with one header row and one value row.
std::string format_metrics_table(const DepthMetrics& m, bool include_log10 = false);

/// JSON record of an evaluation run.
void write_metrics_record(const std::filesystem::path& path, const EvalResult& result,
                          const std::vector<std::pair<std::string, std::string>>& info);

}  // namespace sdepth
