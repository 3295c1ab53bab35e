#include "sdepth/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdepth/errors.hpp"
#include "sdepth/image_io.hpp"
#include "sdepth/kitti.hpp"
#include "sdepth/reports.hpp"
#include "sdepth/synthetic.hpp"
#include "sdepth/trainer.hpp"

namespace sdepth {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// synth

std::vector<fs::path> cmd_synth(const SynthOptions& o) {
  if (o.out.empty()) throw ConfigError("synth needs --out");
  if (o.scenes < 1) throw ConfigError("--scenes must be >= 1");
  TwoPlanePreset sizes;
  sizes.height = o.height;
  sizes.width = o.width;
  sizes.frames = o.frames;
  std::vector<fs::path> dirs;
  for (int i = 0; i < o.scenes; ++i) {
    auto spec = preset_spec(o.preset, o.seed + static_cast<uint64_t>(i), sizes);
    spec.render_stereo = o.stereo;
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", i);
    const fs::path dir = o.scenes == 1 ? o.out : o.out / name;
    save_synthetic_scene(generate_synthetic_scene(spec), dir);
    dirs.push_back(dir);
  }
  return dirs;
}

std::vector<fs::path> find_synthetic_scenes(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("data root does not exist: " + root.string());
  if (fs::exists(root / "metadata.json")) return {root};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "metadata.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no synthetic scenes (metadata.json) under " + root.string());
  return out;
}

namespace {

std::vector<LoadedSyntheticScene> load_scenes(const fs::path& root) {
  std::vector<LoadedSyntheticScene> scenes;
  for (const auto& d : find_synthetic_scenes(root)) scenes.push_back(load_synthetic_scene(d));
  return scenes;
}

bool is_synthetic_root(const fs::path& root) {
  try {
    find_synthetic_scenes(root);
    return true;
  } catch (const DataError&) {
    return false;
  }
}

}  // namespace

std::shared_ptr<const TripletDataset> open_dataset(const RunOptions& run, const TrainConfig& cfg,
                                                   const std::string& subset) {
  if (run.data_root.empty()) throw ConfigError("no data root given (--data-root or data_root)");
  if (run.data_kind == "synthetic")
    return std::make_shared<SyntheticDataset>(load_scenes(run.data_root), cfg.mode);
  KittiLoadOptions lo;
  lo.subset = subset;
  lo.height = cfg.height;
  lo.width = cfg.width;
  auto desc = load_kitti_split(run.data_root, parse_split(run.split), cfg.mode, lo);
  if (desc.empty()) throw DataError("split '" + run.split + "' has no usable samples under " + run.data_root.string());
  return std::make_shared<KittiDataset>(std::move(desc), cfg.mode, cfg.height, cfg.width);
}

// ---------------------------------------------------------------------------
// train

fs::path cmd_train(const TrainOptions& o, std::ostream& log) {
  ExperimentConfig exp = o.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(o.config);
  if (!o.data_root.empty()) exp.run.data_root = o.data_root;
  if (!o.out.empty()) exp.run.out = o.out;
  if (o.seed) exp.train.seed = *o.seed;
  if (o.workers) exp.run.workers = *o.workers;
  if (o.max_steps) exp.run.max_steps = *o.max_steps;
  if (exp.run.out.empty()) throw ConfigError("train needs --out");
  if (o.resume && o.finetune_from) throw ConfigError("--resume and --finetune-from are exclusive");
  exp.train.validate();

  auto data = open_dataset(exp.run, exp.train);
  fs::create_directories(exp.run.out);
  {
    std::ofstream cfg_out(exp.run.out / "config.txt");
    cfg_out << exp.train.to_key_values().canonical();
  }
  auto trainer = o.resume         ? Trainer::resume(*o.resume, exp.train, data, exp.run)
                 : o.finetune_from ? Trainer::from_weights(*o.finetune_from, exp.train, data, exp.run)
                                   : Trainer(exp.train, data, exp.run);
  if (!o.quiet) {
    log << "config hash " << exp.train.hash() << ", " << data->size() << " samples, " << trainer.steps_per_epoch()
        << " steps per epoch, " << trainer.total_steps() << " steps total\n";
    trainer.on_step = [&log](const StepRecord& r) {
      if (r.step % 50 == 0) log << r.log_line() << '\n';
    };
  }
  trainer.run();
  return exp.run.out / "last.ckpt";
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

struct EvalSample {
  std::string name;
  torch::Tensor image;  ///< 3 x H x W at network resolution.
  torch::Tensor gt;     ///< H x W at ground-truth resolution.
};

std::vector<EvalSample> synthetic_samples(const std::vector<LoadedSyntheticScene>& scenes) {
  std::vector<EvalSample> out;
  for (size_t s = 0; s < scenes.size(); ++s)
    for (size_t i = 0; i < scenes[s].frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%03zu_%06zu", s, i);
      out.push_back({name, scenes[s].frames[i], scenes[s].depths[i][0]});
    }
  return out;
}

torch::Tensor read_depth_png(const fs::path& p, double scale = 256.0) {
  if (!fs::exists(p)) throw DataError("ground-truth depth not found: " + p.string());
  return read_png16(p).to(torch::kFloat64) / scale;
}

std::vector<EvalSample> kitti_samples(const fs::path& root, const std::string& split, int h, int w) {
  const auto sp = parse_split(split);
  const fs::path dir = root / "splits" / to_string(sp);
  const auto entries = read_split_file(dir / "test_files.txt");
  std::vector<EvalSample> out;
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto img = kitti_image_path(root, sp, e.folder, e.frame, e.side);
    if (img.empty()) throw DataError("test image missing for '" + e.folder + " " + std::to_string(e.frame) + "'");
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu", i);
    out.push_back({name, read_rgb(img, std::pair{h, w}), read_depth_png(dir / "gt_depths" / (std::string(name) + ".png"))});
  }
  return out;
}

std::vector<EvalSample> make3d_samples(const fs::path& root, int h, int w) {
  const fs::path dir = root / "make3d";
  std::ifstream in(dir / "test_files.txt");
  if (!in) throw DataError("Make3D list not found: " + (dir / "test_files.txt").string());
  std::vector<EvalSample> out;
  std::string name;
  while (in >> name) {
    const fs::path stem = fs::path(name).stem();
    out.push_back({stem.string(), read_rgb(dir / "images" / name, std::pair{h, w}),
                   read_depth_png(dir / "depths" / (stem.string() + ".png"))});
  }
  if (out.empty()) throw DataError("Make3D list is empty");
  return out;
}

std::vector<PoseSE3> read_kitti_poses(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("pose file not found: " + p.string());
  std::vector<PoseSE3> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    int n = 0;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c)
        if (ss >> m(r, c)) ++n;
    if (n == 0) continue;
    if (n != 12) throw DataError(p.string() + ": expected 12 values per line");
    out.push_back(PoseSE3::from_matrix(m));
  }
  return out;
}

std::vector<PoseSE3> predict_pairwise(PoseNet& net, const std::vector<torch::Tensor>& frames) {
  torch::NoGradGuard guard;
  net->eval();
  std::vector<PoseSE3> out;
  for (size_t i = 0; i + 1 < frames.size(); ++i) {
    const auto p = net->forward(frames[i].unsqueeze(0), frames[i + 1].unsqueeze(0));
    const auto aa = p.axis_angle[0].to(torch::kFloat64).contiguous();
    const auto t = p.translation[0].to(torch::kFloat64).contiguous();
    out.emplace_back(Eigen::Vector3d(aa.data_ptr<double>()), Eigen::Vector3d(t.data_ptr<double>()));
  }
  return out;
}

std::string format_ate(const AteResult& a) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << "ATE " << a.mean << " +/- " << a.std << " (" << a.per_window.size()
     << " windows)\n";
  return ss.str();
}

}  // namespace

EvaluateReport cmd_evaluate(const EvaluateOptions& o, std::ostream& log) {
  if (o.checkpoint.empty()) throw ConfigError("evaluate needs --ckpt");
  const TrainConfig cfg = checkpoint_config(o.checkpoint);
  const TrainingMode mode = o.mode.value_or(cfg.mode);
  if (o.single_scale && !needs_median_scaling(mode))
    throw ConfigError("--single-scale applies only to monocular (M) models; " + to_string(mode) +
                      " predictions are not median scaled");

  const bool synthetic = is_synthetic_root(o.data_root);
  EvaluateReport report;
  std::vector<std::pair<std::string, std::string>> info = {
      {"checkpoint", o.checkpoint.string()}, {"mode", to_string(mode)}, {"post_process", o.post_process ? "true" : "false"},
      {"single_scale", o.single_scale ? "true" : "false"}};

  if (!synthetic && o.split == "odometry") {
    auto net = load_pose_net(o.checkpoint);
    AteResult total;
    for (const auto& seq : o.sequences) {
      std::vector<fs::path> paths;
      for (const auto& e : fs::directory_iterator(o.data_root / "sequences" / seq / "image_2"))
        paths.push_back(e.path());
      std::sort(paths.begin(), paths.end());
      std::vector<torch::Tensor> frames;
      for (const auto& p : paths) frames.push_back(read_rgb(p, std::pair{cfg.height, cfg.width}));
      const auto res = odometry_ate(predict_pairwise(net, frames), read_kitti_poses(o.data_root / "poses" / (seq + ".txt")),
                                    o.umeyama);
      report.text += "sequence " + seq + ": " + format_ate(res);
      total.per_window.insert(total.per_window.end(), res.per_window.begin(), res.per_window.end());
    }
    report.odometry = summarize_windows(total.per_window);
    log << report.text;
    return report;
  }

  std::vector<EvalSample> samples;
  std::vector<LoadedSyntheticScene> scenes;
  EvalOptions eo;
  eo.mode = mode;
  eo.single_scale = o.single_scale;
  bool make3d = false;
  if (synthetic) {
    scenes = load_scenes(o.data_root);
    samples = synthetic_samples(scenes);
    eo.crop = CropKind::None;
    eo.metric_scale = o.metric_scale.value_or(1.0);
    info.emplace_back("data", "synthetic");
  } else if (o.split == "make3d") {
    samples = make3d_samples(o.data_root, cfg.height, cfg.width);
    make3d = true;
    info.emplace_back("data", "make3d");
  } else {
    samples = kitti_samples(o.data_root, o.split, cfg.height, cfg.width);
    eo.crop = parse_split(o.split) == KittiSplit::Benchmark ? CropKind::None : CropKind::Garg;
    eo.metric_scale = o.metric_scale.value_or(kStereoMetricScale);
    info.emplace_back("split", o.split);
  }
  if (samples.empty()) throw DataError("no evaluation samples");

  const int h = static_cast<int>(samples.front().image.size(1)), w = static_cast<int>(samples.front().image.size(2));
  auto depth = load_depth_net(o.checkpoint, h, w);
  std::vector<torch::Tensor> preds, gts;
  for (const auto& s : samples) {
    const auto sigma = predict_disparity(depth, s.image, o.post_process);
    preds.push_back(disparity_to_depth_at(sigma, static_cast<int>(s.gt.size(0)), static_cast<int>(s.gt.size(1))));
    gts.push_back(s.gt.to(torch::kFloat64));
  }

  if (make3d) {
    std::vector<DepthMetrics> per;
    EvalResult r;
    for (size_t i = 0; i < preds.size(); ++i) {
      const auto p = needs_median_scaling(mode) ? preds[i] : preds[i] * o.metric_scale.value_or(kStereoMetricScale);
      per.push_back(make3d_eval(p, gts[i], mode));
    }
    r.per_image = per;
    r.metrics = average(per);
    report.depth = r;
    report.text = format_metrics_table(r.metrics, true);
  } else {
    report.depth = evaluate_depths(preds, gts, eo);
    report.text = format_metrics_table(report.depth->metrics);
    if (report.depth->scaling) {
      std::ostringstream ss;
      ss << std::fixed << std::setprecision(4) << "median scale " << report.depth->scaling->single_scale
         << ", sigma_scale " << report.depth->scaling->sigma_scale << ", skipped "
         << report.depth->scaling->skipped.size() << '\n';
      report.text += ss.str();
    }
  }

  if (synthetic && uses_temporal(cfg.mode)) {
    auto pose = load_pose_net(o.checkpoint, h, w);
    std::vector<double> windows;
    for (const auto& sc : scenes)
      if (sc.frames.size() >= 5) {
        const auto res = odometry_ate(predict_pairwise(pose, sc.frames), sc.trajectory, o.umeyama);
        windows.insert(windows.end(), res.per_window.begin(), res.per_window.end());
      }
    if (!windows.empty()) {
      report.odometry = summarize_windows(windows);
      report.text += format_ate(*report.odometry);
    }
  }

  log << report.text;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream(o.out / "metrics.txt") << report.text;
    write_metrics_record(o.out / "metrics.json", *report.depth, info);
  }
  return report;
}

// ---------------------------------------------------------------------------
// export-depths

size_t cmd_export(const ExportOptions& o) {
  if (o.out.empty()) throw ConfigError("export-depths needs --out");
  const TrainConfig cfg = checkpoint_config(o.checkpoint);
  std::vector<std::pair<std::string, torch::Tensor>> images;
  if (is_synthetic_root(o.data_root)) {
    for (const auto& s : synthetic_samples(load_scenes(o.data_root))) images.emplace_back(s.name, s.image);
  } else {
    const auto sp = parse_split(o.split);
    const auto entries = read_split_file(o.data_root / "splits" / to_string(sp) / "test_files.txt");
    for (size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      const auto p = kitti_image_path(o.data_root, sp, e.folder, e.frame, e.side);
      if (p.empty()) throw DataError("test image missing for '" + e.folder + " " + std::to_string(e.frame) + "'");
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu", i);
      images.emplace_back(name, read_rgb(p, std::pair{cfg.height, cfg.width}));
    }
  }
  if (images.empty()) throw DataError("nothing to export");
  const int h = static_cast<int>(images.front().second.size(1)), w = static_cast<int>(images.front().second.size(2));
  auto net = load_depth_net(o.checkpoint, h, w);
  fs::create_directories(o.out);
  nlohmann::ordered_json side;
  side["format"] = "sdepth-disparity";
  side["version"] = 1;
  side["encoding"] = "png16 value = round(sigma * 65535)";
  side["depth"] = "1 / (a * sigma + b)";
  side["a"] = 1.0 / kMinDepth - 1.0 / kMaxDepth;
  side["b"] = 1.0 / kMaxDepth;
  side["mode"] = to_string(cfg.mode);
  side["metric_scale"] = uses_stereo(cfg.mode) ? kStereoMetricScale : 1.0;
  side["post_process"] = o.post_process;
  side["files"] = nlohmann::ordered_json::array();
  for (const auto& [name, img] : images) {
    const auto sigma = predict_disparity(net, img, o.post_process)[0];
    write_png16(o.out / (name + ".png"), (sigma.to(torch::kFloat64).clamp(0, 1) * 65535.0).round());
    side["files"].push_back(name + ".png");
  }
  std::ofstream(o.out / "disparities.json") << side.dump(2) << '\n';
  return images.size();
}

// ---------------------------------------------------------------------------
// render

void cmd_render(const RenderOptions& o) {
  if (o.out.empty()) throw ConfigError("render needs --out");
  const Colormap cmap = parse_colormap(o.colormap);
  if (o.kind == "depth" || o.kind == "disparity") {
    if (!fs::exists(o.input)) throw DataError("input not found: " + o.input.string());
    auto v = read_png16(o.input).to(torch::kFloat64);
    if (o.kind == "depth") {
      v = v / o.scale;
      v = torch::where(v > 0, 1.0 / v, torch::full_like(v, std::nan("")));
    } else {
      v = v / 65535.0;
    }
    if (!torch::isfinite(v).any().item<bool>()) throw ConfigError("input has no valid pixels");
    render_depth_png(o.out, v, cmap);
  } else if (o.kind == "prediction") {
    const TrainConfig cfg = checkpoint_config(o.checkpoint);
    auto net = load_depth_net(o.checkpoint);
    render_depth_png(o.out, predict_disparity(net, read_rgb(o.input, std::pair{cfg.height, cfg.width}))[0], cmap);
  } else if (o.kind == "automask") {
    const TrainConfig cfg = checkpoint_config(o.checkpoint);
    RunOptions run;
    run.data_root = o.data_root;
    auto data = open_dataset(run, cfg);
    if (o.index >= data->size()) throw ConfigError("--index out of range");
    auto depth = load_depth_net(o.checkpoint);
    auto pose = load_pose_net(o.checkpoint);
    torch::NoGradGuard guard;
    const Batch b = make_batch(*data, {o.index}, cfg.seed, 0, cfg.augmentation(), false);
    const auto loss = batch_loss(depth, pose, b, cfg);
    render_automask_png(o.out, loss.mask[0][0]);
  } else if (o.kind == "loss-curve") {
    render_loss_curve_png(o.out, parse_train_log(o.input));
  } else {
    throw ConfigError("unknown render kind '" + o.kind + "'");
  }
}

// ---------------------------------------------------------------------------
// command line

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised monocular depth: training, evaluation and figures"};
  app.require_subcommand(1);
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  fs::path out_dir;
  app.add_option("--seed", seed, "Global random seed");
  app.add_option("--workers", workers, "Data loading threads (0 = inline, reproducible)");
  app.add_option("--out", out_dir, "Output directory");

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate synthetic plane scenes");
  synth->add_option("--preset", so.preset, "two-planes or single-plane")->capture_default_str();
  synth->add_option("--scenes", so.scenes, "Number of scenes")->capture_default_str();
  synth->add_option("--frames", so.frames, "Frames per scene")->capture_default_str();
  synth->add_option("--height", so.height)->capture_default_str();
  synth->add_option("--width", so.width)->capture_default_str();
  synth->add_flag("--stereo", so.stereo, "Also render the right camera");

  TrainOptions to;
  std::string resume, finetune;
  int64_t max_steps = 0;
  auto* train = app.add_subcommand("train", "Train depth and pose networks");
  train->add_option("--config", to.config, "key = value configuration file");
  train->add_option("--data-root", to.data_root);
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->add_option("--finetune-from", finetune, "Initialise weights from a checkpoint");
  train->add_option("--max-steps", max_steps, "Stop after this global step");
  train->add_flag("--quiet", to.quiet);

  EvaluateOptions eo;
  std::string mode_text;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  evaluate->add_option("--ckpt", eo.checkpoint)->required();
  evaluate->add_option("--data-root", eo.data_root)->required();
  evaluate->add_option("--split", eo.split, "eigen, eigen_full, benchmark, make3d or odometry")->capture_default_str();
  evaluate->add_option("--mode", mode_text, "M, S or MS (default: from checkpoint)");
  evaluate->add_flag("--pp", eo.post_process, "Flip post-processing");
  evaluate->add_flag("--single-scale", eo.single_scale, "One median scale for all images");
  evaluate->add_flag("--umeyama", eo.umeyama, "Similarity alignment for odometry");
  evaluate->add_option("--metric-scale", eo.metric_scale, "Depth multiplier for S / MS models");

  ExportOptions xo;
  auto* exportc = app.add_subcommand("export-depths", "Write predicted disparities as 16-bit PNGs");
  exportc->add_option("--ckpt", xo.checkpoint)->required();
  exportc->add_option("--data-root", xo.data_root)->required();
  exportc->add_option("--split", xo.split)->capture_default_str();
  exportc->add_flag("--pp", xo.post_process);

  RenderOptions ro;
  auto* render = app.add_subcommand("render", "Render depth maps, auto-masks and loss curves");
  render->add_option("--kind", ro.kind, "depth, disparity, prediction, automask or loss-curve")->capture_default_str();
  render->add_option("--input", ro.input);
  render->add_option("--colormap", ro.colormap)->capture_default_str();
  render->add_option("--scale", ro.scale, "Divisor of 16-bit depth values")->capture_default_str();
  render->add_option("--ckpt", ro.checkpoint);
  render->add_option("--data-root", ro.data_root);
  render->add_option("--index", ro.index);

  for (auto* sub : {synth, train, evaluate, exportc, render}) {
    sub->add_option("--seed", seed, "Global random seed");
    sub->add_option("--workers", workers, "Data loading threads");
    sub->add_option("--out", out_dir, "Output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      so.out = out_dir;
      if (seed) so.seed = *seed;
      for (const auto& d : cmd_synth(so)) out << d.string() << '\n';
    } else if (train->parsed()) {
      to.out = out_dir;
      to.seed = seed;
      to.workers = workers;
      if (max_steps > 0) to.max_steps = max_steps;
      if (!resume.empty()) to.resume = resume;
      if (!finetune.empty()) to.finetune_from = finetune;
      out << cmd_train(to, out).string() << '\n';
    } else if (evaluate->parsed()) {
      eo.out = out_dir;
      if (!mode_text.empty()) eo.mode = parse_mode(mode_text);
      cmd_evaluate(eo, out);
    } else if (exportc->parsed()) {
      xo.out = out_dir;
      out << cmd_export(xo) << " disparity maps written to " << xo.out.string() << '\n';
    } else if (render->parsed()) {
      ro.out = out_dir;
      cmd_render(ro);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace sdepth
