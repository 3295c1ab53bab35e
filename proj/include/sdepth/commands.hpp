#pragma once

// Subcommands behind the `sdepth` executable.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or checkpoint
// error, 3 numeric failure during training.

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdepth/config.hpp"
#include "sdepth/data.hpp"
#include "sdepth/evaluation.hpp"

namespace sdepth {

struct SynthOptions {
  std::string preset = "two-planes";
  std::filesystem::path out;
  uint64_t seed = 0;
  int scenes = 1;
  int frames = 10;
  int height = 64;
  int width = 192;
  bool stereo = false;
};

/// Writes one scene directory per seed (scene_000, scene_001, ...) and returns them.
std::vector<std::filesystem::path> cmd_synth(const SynthOptions& options);

/// Scene directories under `root`: root itself when it holds metadata.json,
/// else every sub-directory that does, in name order.
std::vector<std::filesystem::path> find_synthetic_scenes(const std::filesystem::path& root);

/// Training data described by `run`; `subset` selects the KITTI split file.
std::shared_ptr<const TripletDataset> open_dataset(const RunOptions& run, const TrainConfig& cfg,
                                                   const std::string& subset = "train");

struct TrainOptions {
  std::filesystem::path config;
  std::filesystem::path data_root;  ///< Overrides the config's data_root when set.
  std::filesystem::path out;        ///< Overrides the config's out when set.
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> finetune_from;  ///< Weights-only initialisation.
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::optional<int64_t> max_steps;
  bool quiet = false;
};

/// Returns the path of the final checkpoint.
std::filesystem::path cmd_train(const TrainOptions& options, std::ostream& log);

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_root;
  std::string split = "eigen";  ///< eigen, eigen_full, benchmark, make3d, odometry; ignored for synthetic data.
  std::optional<TrainingMode> mode;  ///< Defaults to the checkpoint's training mode.
  bool post_process = false;
  bool single_scale = false;
  std::optional<double> metric_scale;  ///< S / MS depth multiplier; 5.4 for KITTI, 1 for synthetic.
  bool umeyama = false;
  std::vector<std::string> sequences = {"09", "10"};
  std::filesystem::path out;  ///< metrics.txt and metrics.json when set.
};

struct EvaluateReport {
  std::optional<EvalResult> depth;
  std::optional<AteResult> odometry;
  std::string text;
};

EvaluateReport cmd_evaluate(const EvaluateOptions& options, std::ostream& log);

struct ExportOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_root;
  std::string split = "eigen";
  std::filesystem::path out;
  bool post_process = false;
};

/// Writes <name>.png disparities (round(sigma * 65535), 16 bit) and
/// disparities.json describing the conversion to depth. Returns the count.
size_t cmd_export(const ExportOptions& options);

struct RenderOptions {
  std::string kind = "depth";  ///< depth, disparity, prediction, automask, loss-curve
  std::filesystem::path input;  ///< PNG, image or training log depending on kind.
  std::filesystem::path out;
  std::string colormap = "magma";
  double scale = 256.0;  ///< Divisor of 16-bit depth PNG values.
  std::filesystem::path checkpoint;
  std::filesystem::path data_root;
  size_t index = 0;
};

void cmd_render(const RenderOptions& options);

/// Full command-line entry point; never throws.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace sdepth
