#include "sdepth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sdepth/checkpoint.hpp"
#include "sdepth/errors.hpp"

namespace sdepth {

namespace fs = std::filesystem;

namespace {

constexpr int64_t kCheckpointFormat = 1;

std::string join(const std::vector<double>& v) {
  std::ostringstream ss;
  ss << std::setprecision(6);
  for (size_t i = 0; i < v.size(); ++i) ss << (i ? "," : "") << v[i];
  return ss.str();
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (height <= 0 || width <= 0 || height % 32 || width % 32)
    fail("resolution " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by 32");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (epochs > 0 && lr_drop_epoch >= epochs)
    fail("lr_drop_epoch (" + std::to_string(lr_drop_epoch) + ") must be < epochs (" + std::to_string(epochs) + ")");
  if (lr_drop_epoch < 0) fail("lr_drop_epoch must be >= 0");
  if (!(lr > 0) || !(lr_after_drop > 0)) fail("learning rates must be positive");
  if (!(lambda_smooth >= 0)) fail("lambda_smooth must be >= 0");
  if (encoder_depth != 18 && encoder_depth != 50) fail("encoder_depth must be 18 or 50");
  if (width_divisor < 1 || 16 % width_divisor) fail("width_divisor must divide 16");
  if (!(val_fraction >= 0 && val_fraction < 1)) fail("val_fraction must lie in [0, 1)");
  if (!(flip_prob >= 0 && flip_prob <= 1) || !(jitter_prob >= 0 && jitter_prob <= 1))
    fail("augmentation probabilities must lie in [0, 1]");
  if (num_scales < 1 || num_scales > 4) fail("num_scales must lie in [1, 4]");
  if (pretrained && pretrained_weights.empty()) fail("pretrained = true needs pretrained_weights");
}

LossConfig TrainConfig::loss_config() const {
  LossConfig c;
  c.smoothness_weight = lambda_smooth;
  c.use_automask = use_automask;
  c.use_min_reprojection = use_min_reprojection;
  return c;
}

AugmentationConfig TrainConfig::augmentation() const {
  AugmentationConfig a;
  a.flip_prob = flip_prob;
  a.jitter_prob = jitter_prob;
  return a;
}

DepthNetOptions TrainConfig::net_options() const {
  DepthNetOptions o;
  o.encoder_depth = encoder_depth;
  o.width_divisor = width_divisor;
  o.height = height;
  o.width = width;
  if (pretrained) o.pretrained_weights = fs::path(pretrained_weights);
  return o;
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k = {
      "mode",          "height",        "width",         "batch_size",   "epochs",
      "lr",            "lr_drop_epoch", "lr_after_drop", "lambda_smooth", "encoder_depth",
      "pretrained",    "pretrained_weights", "width_divisor", "seed",    "val_fraction",
      "flip_prob",     "jitter_prob",   "use_automask",  "use_min_reprojection", "num_scales"};
  return k;
}

KeyValueConfig TrainConfig::to_key_values() const {
  KeyValueConfig kv;
  kv.set("mode", to_string(mode));
  kv.set("height", std::to_string(height));
  kv.set("width", std::to_string(width));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("lr", format_double(lr));
  kv.set("lr_drop_epoch", std::to_string(lr_drop_epoch));
  kv.set("lr_after_drop", format_double(lr_after_drop));
  kv.set("lambda_smooth", format_double(lambda_smooth));
  kv.set("encoder_depth", std::to_string(encoder_depth));
  kv.set("pretrained", bool_text(pretrained));
  kv.set("pretrained_weights", pretrained_weights);
  kv.set("width_divisor", std::to_string(width_divisor));
  kv.set("seed", std::to_string(seed));
  kv.set("val_fraction", format_double(val_fraction));
  kv.set("flip_prob", format_double(flip_prob));
  kv.set("jitter_prob", format_double(jitter_prob));
  kv.set("use_automask", bool_text(use_automask));
  kv.set("use_min_reprojection", bool_text(use_min_reprojection));
  kv.set("num_scales", std::to_string(num_scales));
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValueConfig& kv) {
  TrainConfig c;
  auto v = [&](const char* key) { return kv.get(key); };
  if (auto s = v("mode")) c.mode = parse_mode(*s);
  if (auto s = v("resolution")) {
    int h = 0, w = 0;
    char sep = 0;
    std::istringstream ss(*s);
    if (!(ss >> h >> sep >> w) || (sep != 'x' && sep != ','))
      throw ConfigError("resolution: expected HxW, got '" + *s + "'");
    c.height = h;
    c.width = w;
  }
  if (auto s = v("height")) c.height = parse_int("height", *s);
  if (auto s = v("width")) c.width = parse_int("width", *s);
  if (auto s = v("batch_size")) c.batch_size = parse_int("batch_size", *s);
  if (auto s = v("epochs")) c.epochs = parse_int("epochs", *s);
  if (auto s = v("lr")) c.lr = parse_double("lr", *s);
  if (auto s = v("lr_drop_epoch")) c.lr_drop_epoch = parse_int("lr_drop_epoch", *s);
  if (auto s = v("lr_after_drop")) c.lr_after_drop = parse_double("lr_after_drop", *s);
  if (auto s = v("lambda_smooth")) c.lambda_smooth = parse_double("lambda_smooth", *s);
  if (auto s = v("encoder_depth")) c.encoder_depth = parse_int("encoder_depth", *s);
  if (auto s = v("pretrained")) c.pretrained = parse_bool("pretrained", *s);
  if (auto s = v("pretrained_weights")) c.pretrained_weights = *s;
  if (auto s = v("width_divisor")) c.width_divisor = parse_int("width_divisor", *s);
  if (auto s = v("seed")) c.seed = parse_uint64("seed", *s);
  if (auto s = v("val_fraction")) c.val_fraction = parse_double("val_fraction", *s);
  if (auto s = v("flip_prob")) c.flip_prob = parse_double("flip_prob", *s);
  if (auto s = v("jitter_prob")) c.jitter_prob = parse_double("jitter_prob", *s);
  if (auto s = v("use_automask")) c.use_automask = parse_bool("use_automask", *s);
  if (auto s = v("use_min_reprojection")) c.use_min_reprojection = parse_bool("use_min_reprojection", *s);
  if (auto s = v("num_scales")) c.num_scales = parse_int("num_scales", *s);
  return c;
}

std::string TrainConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_key_values().canonical())));
  return buf;
}

// ---------------------------------------------------------------------------
// Batches

Batch make_batch(const TripletDataset& data, const std::vector<size_t>& ids, uint64_t seed, uint64_t epoch,
                 const AugmentationConfig& aug, bool augment_samples) {
  if (ids.empty()) throw ConfigError("empty batch");
  Batch b;
  b.sample_ids = ids;
  std::vector<torch::Tensor> nt, lt, poses;
  std::vector<std::vector<torch::Tensor>> ns, ls;
  for (size_t k = 0; k < ids.size(); ++k) {
    SampleTriplet t = data.get(ids[k]);
    t.validate(data.mode());
    AugmentedSample s;
    if (augment_samples) {
      auto rng = sample_rng(seed, epoch, ids[k]);
      s = augment(t, aug, rng);
    } else {
      s = augment(t, AugmentationParams{});
    }
    if (k == 0) {
      b.intrinsics = s.loss_targets.intrinsics;
      b.kinds = s.loss_targets.kinds;
      ns.resize(b.kinds.size());
      ls.resize(b.kinds.size());
    } else if (!(s.loss_targets.intrinsics == b.intrinsics)) {
      throw ConfigError("samples in one batch have different intrinsics (sample " + std::to_string(ids[k]) + ")");
    } else if (s.loss_targets.kinds != b.kinds) {
      throw ConfigError("samples in one batch have different source sets (sample " + std::to_string(ids[k]) + ")");
    }
    nt.push_back(s.network_inputs.target);
    lt.push_back(s.loss_targets.target);
    for (size_t j = 0; j < b.kinds.size(); ++j) {
      ns[j].push_back(s.network_inputs.sources[j]);
      ls[j].push_back(s.loss_targets.sources[j]);
    }
    if (s.loss_targets.stereo_baseline_pose) poses.push_back(s.loss_targets.stereo_baseline_pose->to_tensor());
  }
  b.net_target = torch::stack(nt);
  b.loss_target = torch::stack(lt);
  for (size_t j = 0; j < b.kinds.size(); ++j) {
    b.net_sources.push_back(torch::stack(ns[j]));
    b.loss_sources.push_back(torch::stack(ls[j]));
  }
  if (!poses.empty()) {
    if (poses.size() != ids.size()) throw ConfigError("stereo baseline missing for part of a batch");
    b.stereo_pose = torch::stack(poses);
  }
  return b;
}

std::string StepRecord::log_line() const {
  std::ostringstream ss;
  ss << std::setprecision(8) << "step=" << step << " epoch=" << epoch << " lr=" << lr
     << " loss=" << loss.total_value << " photo=" << join(loss.per_scale_photometric)
     << " smooth=" << join(loss.per_scale_smoothness) << " mask=" << std::setprecision(6) << loss.mask_fraction;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<const TripletDataset> data, RunOptions run)
    : cfg_(std::move(cfg)), run_(std::move(run)), data_(std::move(data)) {
  cfg_.validate();
  if (!data_ || data_->size() == 0) throw DataError("training data is empty");
  if (data_->mode() != cfg_.mode)
    throw ConfigError("data prepared for mode " + to_string(data_->mode()) + " but config trains " +
                      to_string(cfg_.mode));
  const auto K = data_->intrinsics();
  if (K.height != cfg_.height || K.width != cfg_.width)
    throw ConfigError("data resolution " + std::to_string(K.height) + "x" + std::to_string(K.width) +
                      " does not match config " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width));

  std::tie(train_ids_, val_ids_) = split_train_val(data_->size(), cfg_.val_fraction, cfg_.seed);
  if (train_ids_.empty()) throw DataError("no training samples left after the validation split");
  steps_per_epoch_ = std::max<int64_t>(1, static_cast<int64_t>(train_ids_.size()) / cfg_.batch_size);

  torch::manual_seed(cfg_.seed);
  depth_ = build_depth_net(cfg_.net_options());
  pose_ = build_pose_net(cfg_.net_options());
  build_optimizer();
}

void Trainer::build_optimizer() {
  std::vector<torch::Tensor> params = depth_->parameters();
  if (uses_temporal(cfg_.mode)) {
    auto p = pose_->parameters();
    params.insert(params.end(), p.begin(), p.end());
  }
  torch::optim::AdamOptions opt(cfg_.learning_rate(0));
  opt.betas({0.9, 0.999}).eps(1e-8).weight_decay(0);
  optimizer_ = std::make_unique<torch::optim::Adam>(params, opt);
}

int64_t Trainer::total_steps() const {
  int64_t total = steps_per_epoch_ * cfg_.epochs;
  if (run_.max_steps > 0) total = std::min(total, run_.max_steps);
  return total;
}

double Trainer::current_lr() const { return cfg_.learning_rate(epoch()); }

std::vector<size_t> Trainer::epoch_order(int epoch) const {
  std::vector<size_t> order = train_ids_;
  std::seed_seq seq{static_cast<uint32_t>(cfg_.seed), static_cast<uint32_t>(cfg_.seed >> 32),
                    static_cast<uint32_t>(epoch), 0x0e0c4u};
  std::mt19937_64 rng(seq);
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

Batch Trainer::batch_for_step(int64_t global_step) const {
  const int e = static_cast<int>(global_step / steps_per_epoch_);
  const int64_t k = global_step % steps_per_epoch_;
  const auto order = epoch_order(e);
  const size_t bs = std::min<size_t>(cfg_.batch_size, order.size());
  std::vector<size_t> ids(order.begin() + k * bs, order.begin() + (k + 1) * bs);
  return make_batch(*data_, ids, cfg_.seed, static_cast<uint64_t>(e), cfg_.augmentation());
}

std::vector<torch::Tensor> predict_source_poses(PoseNet& pose, const Batch& batch) {
  std::vector<torch::Tensor> poses;
  for (size_t j = 0; j < batch.kinds.size(); ++j) {
    switch (batch.kinds[j]) {
      case SourceKind::Previous:
        poses.push_back(pose->forward(batch.net_sources[j], batch.net_target).matrix(true));
        break;
      case SourceKind::Next:
        poses.push_back(pose->forward(batch.net_target, batch.net_sources[j]).matrix(false));
        break;
      case SourceKind::Stereo:
        if (!batch.stereo_pose.defined()) throw ConfigError("stereo source without a baseline pose");
        poses.push_back(batch.stereo_pose);
        break;
    }
  }
  return poses;
}

LossBreakdown batch_loss(DepthNet& depth, PoseNet& pose, const Batch& batch, const TrainConfig& cfg) {
  auto disps = depth->forward(batch.net_target);
  disps.resize(cfg.num_scales);
  const auto poses = predict_source_poses(pose, batch);
  std::vector<bool> identity_sources;
  for (auto k : batch.kinds) identity_sources.push_back(k != SourceKind::Stereo);
  return multiscale_total(disps, batch.loss_target, batch.loss_sources, poses, batch.intrinsics, cfg.loss_config(),
                          identity_sources);
}

std::vector<torch::Tensor> Trainer::source_poses(const Batch& batch) { return predict_source_poses(pose_, batch); }

StepRecord Trainer::step() { return step(batch_for_step(global_step_)); }

StepRecord Trainer::step(Batch batch) {
  depth_->train();
  pose_->train();
  const double lr = current_lr();
  for (auto& group : optimizer_->param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

  optimizer_->zero_grad();
  StepRecord rec;
  rec.step = global_step_;
  rec.epoch = epoch();
  rec.lr = lr;
  rec.loss = batch_loss(depth_, pose_, batch, cfg_);
  if (!std::isfinite(rec.loss.total_value)) {
    std::ostringstream ss;
    ss << "non-finite loss at step " << global_step_ << " (batch ids:";
    for (auto id : batch.sample_ids) ss << ' ' << id;
    ss << "; photometric per scale: " << join(rec.loss.per_scale_photometric)
       << "; smoothness per scale: " << join(rec.loss.per_scale_smoothness) << ")";
    throw NumericError(ss.str());
  }
  rec.loss.total.backward();
  optimizer_->step();
  ++global_step_;
  rec.loss.total = rec.loss.total.detach();
  history_.push_back(rec);
  if (on_step) on_step(rec);
  return rec;
}

double Trainer::validation_loss() {
  if (val_ids_.empty()) return std::nan("");
  torch::NoGradGuard guard;
  depth_->eval();
  pose_->eval();
  double sum = 0.0;
  size_t count = 0;
  for (size_t start = 0; start < val_ids_.size(); start += cfg_.batch_size) {
    const size_t end = std::min(val_ids_.size(), start + cfg_.batch_size);
    std::vector<size_t> ids(val_ids_.begin() + start, val_ids_.begin() + end);
    const Batch b = make_batch(*data_, ids, cfg_.seed, 0, cfg_.augmentation(), false);
    sum += batch_loss(depth_, pose_, b, cfg_).total_value * static_cast<double>(ids.size());
    count += ids.size();
  }
  depth_->train();
  pose_->train();
  return sum / static_cast<double>(count);
}

void Trainer::write_log(const std::string& line) const {
  if (run_.out.empty()) return;
  std::ofstream log(run_.out / "train_log.txt", std::ios::app);
  log << line << '\n';
}

void Trainer::run() {
  if (!run_.out.empty()) {
    fs::create_directories(run_.out);
    if (global_step_ == 0) std::ofstream(run_.out / "train_log.txt", std::ios::trunc);
  }
  auto save = [&](const std::string& name) {
    if (!run_.out.empty()) save_checkpoint(run_.out / name);
  };
  const int64_t total = total_steps();
  if (total == 0) {
    save("last.ckpt");
    return;
  }

  std::future<Batch> next;
  auto prefetch = [&](int64_t g) {
    if (run_.workers > 0 && g < total)
      next = std::async(std::launch::async, [this, g] { return batch_for_step(g); });
  };
  prefetch(global_step_);
  while (global_step_ < total) {
    Batch batch = next.valid() ? next.get() : batch_for_step(global_step_);
    prefetch(global_step_ + 1);
    const StepRecord rec = step(std::move(batch));
    if (run_.log_every > 0 && rec.step % run_.log_every == 0) write_log(rec.log_line());

    if (global_step_ % steps_per_epoch_ == 0) {
      const int finished = static_cast<int>(global_step_ / steps_per_epoch_) - 1;
      const double val = validation_loss();
      if (!std::isnan(val)) {
        val_history_.push_back(val);
        std::ostringstream ss;
        ss << std::setprecision(8) << "val epoch=" << finished << " loss=" << val;
        write_log(ss.str());
      }
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.ckpt", finished);
      save(name);
      save("last.ckpt");
    } else if (run_.checkpoint_every > 0 && global_step_ % run_.checkpoint_every == 0) {
      save("last.ckpt");
    }
  }
  save("last.ckpt");
}

void Trainer::save_checkpoint(const fs::path& path) const {
  TensorArchive ar;
  ar.put_module("depth_encoder", *depth_->encoder);
  ar.put_module("depth_decoder", *depth_->decoder);
  ar.put_module("pose_encoder", *pose_->encoder);
  ar.put_module("pose_decoder", *pose_->decoder);
  const auto& state = optimizer_->state();
  int64_t i = 0;
  for (const auto& group : optimizer_->param_groups()) {
    for (const auto& p : group.params()) {
      auto it = state.find(p.unsafeGetTensorImpl());
      if (it != state.end()) {
        const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
        const std::string key = "optim." + std::to_string(i);
        ar.put(key + ".exp_avg", s.exp_avg());
        ar.put(key + ".exp_avg_sq", s.exp_avg_sq());
        ar.put_int(key + ".step", s.step());
      }
      ++i;
    }
  }
  ar.put_int("meta.format_version", kCheckpointFormat);
  ar.put_int("meta.global_step", global_step_);
  ar.put_int("meta.epoch", epoch());
  ar.put_string("meta.config_hash", cfg_.hash());
  ar.put_string("meta.config", cfg_.to_key_values().canonical());
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  ar.save(path);
}

namespace {

void load_weights(const TensorArchive& ar, DepthNet& depth, PoseNet& pose) {
  ar.load_module("depth_encoder", *depth->encoder);
  ar.load_module("depth_decoder", *depth->decoder);
  ar.load_module("pose_encoder", *pose->encoder);
  ar.load_module("pose_decoder", *pose->decoder);
}

TrainConfig config_of(const TensorArchive& ar) {
  if (!ar.contains("meta.config")) throw CheckpointError("checkpoint has no stored configuration");
  return TrainConfig::from_key_values(KeyValueConfig::parse(ar.get_string("meta.config")));
}

}  // namespace

Trainer Trainer::resume(const fs::path& checkpoint, TrainConfig cfg, std::shared_ptr<const TripletDataset> data,
                        RunOptions run) {
  const TensorArchive ar = TensorArchive::load(checkpoint);
  if (!ar.contains("meta.config_hash") || !ar.contains("meta.global_step"))
    throw CheckpointError("not a training checkpoint: " + checkpoint.string());
  const std::string stored = ar.get_string("meta.config_hash");
  if (stored != cfg.hash())
    throw CheckpointError("config hash mismatch: checkpoint " + stored + ", requested " + cfg.hash());

  Trainer t(std::move(cfg), std::move(data), std::move(run));
  load_weights(ar, t.depth_, t.pose_);
  auto& state = t.optimizer_->state();
  int64_t i = 0;
  for (const auto& group : t.optimizer_->param_groups()) {
    for (const auto& p : group.params()) {
      const std::string key = "optim." + std::to_string(i++);
      if (!ar.contains(key + ".step")) continue;
      auto s = std::make_unique<torch::optim::AdamParamState>();
      s->step(ar.get_int(key + ".step"));
      const auto& m = ar.get(key + ".exp_avg");
      const auto& v = ar.get(key + ".exp_avg_sq");
      if (m.sizes() != p.sizes() || v.sizes() != p.sizes())
        throw CheckpointError("optimizer state shape mismatch for parameter " + std::to_string(i - 1));
      s->exp_avg(m.clone());
      s->exp_avg_sq(v.clone());
      state[p.unsafeGetTensorImpl()] = std::move(s);
    }
  }
  t.global_step_ = ar.get_int("meta.global_step");
  return t;
}

Trainer Trainer::from_weights(const fs::path& checkpoint, TrainConfig cfg, std::shared_ptr<const TripletDataset> data,
                              RunOptions run) {
  const TensorArchive ar = TensorArchive::load(checkpoint);
  const TrainConfig base = config_of(ar);
  if (base.encoder_depth != cfg.encoder_depth || base.width_divisor != cfg.width_divisor)
    throw CheckpointError("checkpoint network (encoder " + std::to_string(base.encoder_depth) + ", divisor " +
                          std::to_string(base.width_divisor) + ") does not match the config");
  cfg.pretrained = false;
  Trainer t(std::move(cfg), std::move(data), std::move(run));
  load_weights(ar, t.depth_, t.pose_);
  return t;
}

TrainConfig high_res_finetune_config(TrainConfig base, int height, int width) {
  base.height = height;
  base.width = width;
  base.lr = 1e-5;
  base.lr_after_drop = 1e-5;
  base.lr_drop_epoch = 0;
  base.batch_size = 4;
  base.epochs = 5;
  base.pretrained = false;
  base.pretrained_weights.clear();
  return base;
}

fs::path high_res_finetune(const fs::path& base_checkpoint, const TrainConfig& cfg,
                           std::shared_ptr<const TripletDataset> data, const RunOptions& run) {
  if (!fs::exists(base_checkpoint)) throw CheckpointError("base checkpoint not found: " + base_checkpoint.string());
  Trainer t = Trainer::from_weights(base_checkpoint, cfg, std::move(data), run);
  t.run();
  return run.out / "last.ckpt";
}

TrainConfig checkpoint_config(const fs::path& checkpoint) { return config_of(TensorArchive::load(checkpoint)); }

DepthNet load_depth_net(const fs::path& checkpoint, int height, int width) {
  const TensorArchive ar = TensorArchive::load(checkpoint);
  auto opts = config_of(ar).net_options();
  opts.pretrained_weights.reset();
  if (height > 0) opts.height = height;
  if (width > 0) opts.width = width;
  DepthNet net = build_depth_net(opts);
  ar.load_module("depth_encoder", *net->encoder);
  ar.load_module("depth_decoder", *net->decoder);
  net->eval();
  return net;
}

PoseNet load_pose_net(const fs::path& checkpoint, int height, int width) {
  const TensorArchive ar = TensorArchive::load(checkpoint);
  auto opts = config_of(ar).net_options();
  opts.pretrained_weights.reset();
  if (height > 0) opts.height = height;
  if (width > 0) opts.width = width;
  PoseNet net = build_pose_net(opts);
  ar.load_module("pose_encoder", *net->encoder);
  ar.load_module("pose_decoder", *net->decoder);
  net->eval();
  return net;
}

}  // namespace sdepth
