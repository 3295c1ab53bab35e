#pragma once

// Experiment configuration: training keys, run options and evaluation flags.

#include <filesystem>
#include <string>

#include "sdepth/kv_config.hpp"
#include "sdepth/trainer.hpp"

namespace sdepth {

struct EvalFlags {
  bool post_process = false;
  bool single_scale = false;
};

struct ExperimentConfig {
  TrainConfig train;
  RunOptions run;
  EvalFlags eval;

  /// Digest of the canonical training keys; independent of key order,
  /// whitespace, number formatting and non-semantic options.
  std::string config_hash() const { return train.hash(); }

  static ExperimentConfig from_key_values(const KeyValueConfig& kv);
  static ExperimentConfig load(const std::filesystem::path& path);
  KeyValueConfig to_key_values() const;
};

}  // namespace sdepth
