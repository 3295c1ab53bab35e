#pragma once

// Training loop for the M, S and MS self-supervision modes.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdepth/data.hpp"
#include "sdepth/kv_config.hpp"
#include "sdepth/losses.hpp"
#include "sdepth/networks.hpp"

namespace sdepth {

struct TrainConfig {
  TrainingMode mode = TrainingMode::Mono;
  int height = 192;
  int width = 640;
  int batch_size = 12;
  int epochs = 20;
  double lr = 1e-4;
  int lr_drop_epoch = 15;
  double lr_after_drop = 1e-5;
  double lambda_smooth = 1e-3;
  int encoder_depth = 18;
  bool pretrained = false;
  std::string pretrained_weights;  ///< Torchvision-layout archive, required when pretrained.
  int width_divisor = 1;           ///< Reduced-width networks for desk-scale runs.
  uint64_t seed = 0;
  double val_fraction = 0.1;
  double flip_prob = 0.5;
  double jitter_prob = 0.5;
  bool use_automask = true;
  bool use_min_reprojection = true;
  int num_scales = 4;

  /// Resolution divisible by 32, lr_drop_epoch < epochs (when training), sane ranges.
  void validate() const;
  double learning_rate(int epoch) const { return epoch < lr_drop_epoch ? lr : lr_after_drop; }

  LossConfig loss_config() const;
  AugmentationConfig augmentation() const;
  DepthNetOptions net_options() const;

  /// Every key, with canonical number formatting.
  KeyValueConfig to_key_values() const;
  /// Reads known keys from `kv`, leaving defaults for the rest.
  static TrainConfig from_key_values(const KeyValueConfig& kv);
  static const std::vector<std::string>& keys();
  std::string hash() const;
};

/// The three supported training resolutions (height, width).
inline constexpr std::pair<int, int> kResolutions[] = {{128, 416}, {192, 640}, {320, 1024}};

/// Fixed transform between the two cameras of a rectified stereo rig.
struct StereoCalibration {
  double translation_length = kStereoBaseline;  ///< Scene units.
  double metric_scale = kStereoMetricScale;     ///< Metres per scene unit when reporting.

  /// Pure horizontal translation from the `side` camera to its partner.
  PoseSE3 baseline_pose(char side, bool flipped = false) const {
    return stereo_pose(side, flipped, translation_length);
  }
};

/// Options that affect where and how a run executes but not its results.
struct RunOptions {
  std::filesystem::path data_root;
  std::string data_kind = "synthetic";  ///< "synthetic" (scene directories) or "kitti".
  std::string split = "eigen";
  std::filesystem::path out;
  int workers = 0;
  int64_t max_steps = 0;         ///< 0 runs every epoch.
  int64_t checkpoint_every = 0;  ///< Extra checkpoint every N steps; 0 = per epoch only.
  int log_every = 1;
};

struct Batch {
  std::vector<size_t> sample_ids;
  torch::Tensor net_target;                  ///< B x 3 x H x W (jittered)
  std::vector<torch::Tensor> net_sources;
  torch::Tensor loss_target;                 ///< B x 3 x H x W (raw)
  std::vector<torch::Tensor> loss_sources;
  std::vector<SourceKind> kinds;
  CameraIntrinsics intrinsics;
  torch::Tensor stereo_pose;                 ///< B x 4 x 4 when a stereo source is present.
};

/// Stacks augmented samples drawn with sample_rng(seed, epoch, id).
Batch make_batch(const TripletDataset& data, const std::vector<size_t>& ids, uint64_t seed, uint64_t epoch,
                 const AugmentationConfig& aug, bool augment_samples = true);

/// Target-to-source transforms for every source of `batch`: predicted for
/// temporal neighbours (inverted for the previous frame), fixed for stereo.
std::vector<torch::Tensor> predict_source_poses(PoseNet& pose, const Batch& batch);

/// Training objective of one batch.
LossBreakdown batch_loss(DepthNet& depth, PoseNet& pose, const Batch& batch, const TrainConfig& cfg);

struct StepRecord {
  int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;

  /// "step=N epoch=E lr=X loss=X photo=a,b,.. smooth=a,b,.. mask=X"
  std::string log_line() const;
};

/// Training state: networks, optimizer, position in the schedule.
class Trainer {
 public:
  /// `data` is split into train / validation by cfg.val_fraction.
  Trainer(TrainConfig cfg, std::shared_ptr<const TripletDataset> data, RunOptions run = {});

  /// Restores networks, optimizer and schedule position from a checkpoint.
  /// Throws CheckpointError when the checkpoint's config hash differs from cfg.
  static Trainer resume(const std::filesystem::path& checkpoint, TrainConfig cfg,
                        std::shared_ptr<const TripletDataset> data, RunOptions run = {});

  /// Fresh optimizer and schedule, network weights (only) taken from `checkpoint`.
  static Trainer from_weights(const std::filesystem::path& checkpoint, TrainConfig cfg,
                              std::shared_ptr<const TripletDataset> data, RunOptions run = {});

  /// One optimization step on the next batch of the schedule.
  StepRecord step();
  StepRecord step(Batch batch);

  /// Runs until the configured epochs (or run.max_steps) are done. Writes
  /// checkpoints and the text log under run.out when it is set.
  void run();

  /// Mean loss over the validation split, networks in eval mode.
  double validation_loss();

  void save_checkpoint(const std::filesystem::path& path) const;

  /// Source-view transforms (target -> source) for a batch, in source order.
  std::vector<torch::Tensor> source_poses(const Batch& batch);
  Batch batch_for_step(int64_t global_step) const;

  int64_t global_step() const { return global_step_; }
  int epoch() const { return static_cast<int>(global_step_ / steps_per_epoch_); }
  int64_t steps_per_epoch() const { return steps_per_epoch_; }
  int64_t total_steps() const;
  double current_lr() const;
  const TrainConfig& config() const { return cfg_; }
  DepthNet& depth_net() { return depth_; }
  PoseNet& pose_net() { return pose_; }
  const std::vector<StepRecord>& history() const { return history_; }
  const std::vector<double>& validation_history() const { return val_history_; }

  /// Called after every step; used by the CLI for progress output.
  std::function<void(const StepRecord&)> on_step;

 private:
  void build_optimizer();
  std::vector<size_t> epoch_order(int epoch) const;
  void write_log(const std::string& line) const;

  TrainConfig cfg_;
  RunOptions run_;
  std::shared_ptr<const TripletDataset> data_;
  std::vector<size_t> train_ids_;
  std::vector<size_t> val_ids_;
  int64_t steps_per_epoch_ = 1;
  int64_t global_step_ = 0;
  DepthNet depth_{nullptr};
  PoseNet pose_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::vector<StepRecord> history_;
  std::vector<double> val_history_;
};

/// Higher-resolution continuation of `base`: lr 1e-5 throughout, batch 4, 5 epochs.
TrainConfig high_res_finetune_config(TrainConfig base, int height = 320, int width = 1024);

/// Trains `cfg` starting from the weights of `base_checkpoint`; returns the
/// path of the final checkpoint under run.out.
std::filesystem::path high_res_finetune(const std::filesystem::path& base_checkpoint, const TrainConfig& cfg,
                                        std::shared_ptr<const TripletDataset> data, const RunOptions& run);

/// Reads the training configuration stored in a checkpoint.
TrainConfig checkpoint_config(const std::filesystem::path& checkpoint);

/// Depth network restored from a checkpoint (eval mode), at the given input
/// resolution or the trained one when 0.
DepthNet load_depth_net(const std::filesystem::path& checkpoint, int height = 0, int width = 0);
PoseNet load_pose_net(const std::filesystem::path& checkpoint, int height = 0, int width = 0);

}  // namespace sdepth
