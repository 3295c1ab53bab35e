#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <unistd.h>

#include "sdepth/commands.hpp"
#include "sdepth/config.hpp"
#include "sdepth/errors.hpp"
#include "sdepth/image_io.hpp"
#include "sdepth/reports.hpp"

using namespace sdepth;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("sdepth_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sdepth");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(KeyValue, ParsesCommentsAndRejectsMalformedLines) {
  const auto kv = KeyValueConfig::parse("# comment\n\n  batch_size =  4 \nmode=MS\n");
  EXPECT_EQ(kv.get("batch_size"), "4");
  EXPECT_EQ(kv.get("mode"), "MS");
  EXPECT_FALSE(kv.get("lr").has_value());
  EXPECT_THROW(KeyValueConfig::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("just text\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse(" = 3\n"), ConfigError);
  EXPECT_EQ(KeyValueConfig::parse("b = 2\na = 1\n").canonical(), "a = 1\nb = 2\n");
}

TEST(KeyValue, TypedReadersNameTheKey) {
  EXPECT_EQ(parse_int("epochs", "20"), 20);
  EXPECT_EQ(parse_double("lr", "1e-4"), 1e-4);
  EXPECT_TRUE(parse_bool("pretrained", "yes"));
  try {
    parse_int("epochs", "twenty");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos);
  }
  EXPECT_THROW(parse_double("lr", "0.1x"), ConfigError);
  EXPECT_THROW(parse_bool("b", "maybe"), ConfigError);
  EXPECT_EQ(format_double(1e-4), format_double(0.0001));
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(ConfigHash, StableUnderFormattingAndNonSemanticKeys) {
  const auto a = ExperimentConfig::from_key_values(
      KeyValueConfig::parse("mode = M\nlr = 1e-4\nbatch_size = 12\nout = /tmp/a\nworkers = 0\n"));
  const auto b = ExperimentConfig::from_key_values(
      KeyValueConfig::parse("workers = 4\nout = /elsewhere\n batch_size=12\nlr = 0.0001\n"));
  EXPECT_EQ(a.config_hash(), b.config_hash());
  EXPECT_EQ(a.config_hash(), TrainConfig{}.hash());
  EXPECT_EQ(a.config_hash().size(), 16u);
  EXPECT_EQ(a.config_hash().find_first_not_of("0123456789abcdef"), std::string::npos);

  const auto c = ExperimentConfig::from_key_values(KeyValueConfig::parse("batch_size = 6\n"));
  EXPECT_NE(a.config_hash(), c.config_hash());
  const auto r = ExperimentConfig::from_key_values(KeyValueConfig::parse("resolution = 128x416\nlr_drop_epoch=3\n"));
  EXPECT_EQ(r.train.height, 128);
  EXPECT_EQ(r.train.width, 416);
}

TEST(ConfigHash, RoundTripAndRejections) {
  TrainConfig t;
  t.mode = TrainingMode::MonoStereo;
  t.lr = 3e-4;
  t.width_divisor = 4;
  const auto back = TrainConfig::from_key_values(t.to_key_values());
  EXPECT_EQ(back.hash(), t.hash());
  EXPECT_EQ(back.lr, 3e-4);
  EXPECT_THROW(ExperimentConfig::from_key_values(KeyValueConfig::parse("batchsize = 3\n")), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_key_values(KeyValueConfig::parse("height = 100\n")), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_key_values(KeyValueConfig::parse("data_kind = nyu\n")), ConfigError);
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/config.txt"), ConfigError);
}

TEST(Reports, PercentileInterpolates) {
  const auto v = torch::tensor({4.0, 1.0, 3.0, 2.0, std::nan("")});
  EXPECT_EQ(percentile(v, 0), 1.0);
  EXPECT_EQ(percentile(v, 100), 4.0);
  EXPECT_NEAR(percentile(v, 50), 2.5, 1e-12);
  EXPECT_THROW(percentile(torch::tensor({std::nan("")}), 50), ConfigError);
}

TEST(Reports, ColorizeIsDeterministicAndHandlesDegenerateMaps) {
  const auto m = torch::rand({12, 20}) * 50 + 1;
  const auto a = colorize(m), b = colorize(m.clone());
  EXPECT_TRUE(torch::equal(a, b));
  EXPECT_EQ(a.sizes(), (std::vector<int64_t>{12, 20, 3}));
  EXPECT_FALSE(torch::equal(colorize(m, Colormap::Viridis), a));
  const auto flat = colorize(torch::full({4, 4}, 3.0), Colormap::Gray);
  EXPECT_EQ(flat[0][0][0].item<int>(), 128);
  EXPECT_THROW(colorize(torch::full({2, 2}, std::nan(""))), ConfigError);
  EXPECT_THROW(parse_colormap("jet"), ConfigError);
}

TEST(Reports, RenderedFilesAreByteIdentical) {
  const auto dir = temp_dir("render");
  const auto m = torch::rand({16, 24}) + 0.5;
  render_depth_png(dir / "a.png", m);
  render_depth_png(dir / "b.png", m);
  EXPECT_EQ(read_bytes(dir / "a.png"), read_bytes(dir / "b.png"));
  render_automask_png(dir / "mask.png", torch::rand({1, 16, 24}) > 0.5);
  EXPECT_TRUE(fs::exists(dir / "mask.png"));
  EXPECT_THROW(render_automask_png(dir / "bad.png", torch::rand({16, 24})), ConfigError);
  fs::remove_all(dir);
}

TEST(Reports, TrainLogParsingAndCurve) {
  const auto dir = temp_dir("log");
  std::ofstream(dir / "train_log.txt") << "step=0 epoch=0 lr=0.0001 loss=0.5 photo=0.4 smooth=0.1 mask=0.9\n"
                                       << "step=1 epoch=0 lr=0.0001 loss=0.25 photo=0.2 smooth=0.1 mask=0.9\n"
                                       << "val epoch=0 loss=0.3\n";
  const auto c = parse_train_log(dir / "train_log.txt");
  EXPECT_EQ(c.steps, (std::vector<int64_t>{0, 1}));
  EXPECT_EQ(c.losses, (std::vector<double>{0.5, 0.25}));
  EXPECT_EQ(c.val_epochs, (std::vector<int>{0}));
  render_loss_curve_png(dir / "curve.png", c);
  const auto img = read_rgb(dir / "curve.png");
  EXPECT_EQ(img.size(2), 800);
  EXPECT_THROW(parse_train_log(dir / "missing.txt"), DataError);
  fs::remove_all(dir);
}

TEST(Reports, MetricsTableAndRecord) {
  DepthMetrics m;
  m.abs_rel = 0.115;
  m.d1 = 0.877;
  const auto table = format_metrics_table(m, true);
  EXPECT_NE(table.find("abs_rel"), std::string::npos);
  EXPECT_NE(table.find("0.115"), std::string::npos);
  EXPECT_NE(table.find("log10"), std::string::npos);
  EXPECT_EQ(format_metrics_table(m).find("log10"), std::string::npos);
  const auto dir = temp_dir("record");
  EvalResult r;
  r.metrics = m;
  write_metrics_record(dir / "m.json", r, {{"split", "eigen"}});
  const auto text = read_bytes(dir / "m.json");
  EXPECT_NE(text.find("\"split\""), std::string::npos);
  EXPECT_NE(text.find("abs_rel"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"evaluate", "--data-root", "/tmp"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"render", "--kind", "hologram", "--input", "x", "--out", "/tmp/y.png"}).code, 1);
}

TEST(Cli, DataAndCheckpointErrorsExitWithTwo) {
  const auto dir = temp_dir("cli_bad");
  std::ofstream(dir / "bad.ckpt") << "garbage";
  const auto r = cli({"evaluate", "--ckpt", (dir / "bad.ckpt").string(), "--data-root", dir.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
  EXPECT_EQ(cli({"train", "--data-root", "/nonexistent/data", "--out", (dir / "run").string()}).code, 2);
  fs::remove_all(dir);
}

TEST(Cli, SynthTrainEvaluateExportRender) {
  const auto dir = temp_dir("cli_flow");
  ASSERT_EQ(cli({"synth", "--scenes", "2", "--frames", "5", "--stereo", "--seed", "3", "--out",
                 (dir / "data").string()})
                .code,
            0);
  std::ofstream(dir / "cfg.txt") << "mode = MS\nresolution = 64x192\nbatch_size = 2\nepochs = 1\nlr_drop_epoch = 0\n"
                                 << "width_divisor = 8\nval_fraction = 0.2\n";
  const auto t = cli({"train", "--config", (dir / "cfg.txt").string(), "--data-root", (dir / "data").string(),
                      "--out", (dir / "run").string(), "--quiet"});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto ckpt = (dir / "run" / "last.ckpt").string();
  ASSERT_TRUE(fs::exists(ckpt));
  EXPECT_NE(read_bytes(dir / "run" / "config.txt").find("mode = MS"), std::string::npos);

  const auto e = cli({"evaluate", "--ckpt", ckpt, "--data-root", (dir / "data").string(), "--out",
                      (dir / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(fs::exists(dir / "eval" / "metrics.json"));
  EXPECT_EQ(cli({"evaluate", "--ckpt", ckpt, "--data-root", (dir / "data").string(), "--single-scale"}).code, 1);

  const auto x = cli({"export-depths", "--ckpt", ckpt, "--data-root", (dir / "data").string(), "--out",
                      (dir / "export").string()});
  ASSERT_EQ(x.code, 0) << x.err;
  EXPECT_TRUE(fs::exists(dir / "export" / "disparities.json"));

  EXPECT_EQ(cli({"render", "--kind", "loss-curve", "--input", (dir / "run" / "train_log.txt").string(), "--out",
                 (dir / "curve.png").string()})
                .code,
            0);
  EXPECT_EQ(cli({"render", "--kind", "depth", "--input", (dir / "data" / "scene_000" / "depth" / "000000.png").string(),
                 "--out", (dir / "depth.png").string()})
                .code,
            0);
  EXPECT_TRUE(fs::exists(dir / "curve.png"));
  fs::remove_all(dir);
}
