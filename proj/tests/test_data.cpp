#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include <unistd.h>

#include "sdepth/data.hpp"
#include "sdepth/errors.hpp"
#include "sdepth/image_io.hpp"
#include "sdepth/kitti.hpp"

using namespace sdepth;
namespace fs = std::filesystem;

namespace {

SampleTriplet stereo_triplet() {
  SampleTriplet t;
  t.target = torch::rand({3, 8, 16});
  t.sources = {torch::rand({3, 8, 16}), torch::rand({3, 8, 16}), torch::rand({3, 8, 16})};
  t.kinds = {SourceKind::Previous, SourceKind::Next, SourceKind::Stereo};
  t.intrinsics = CameraIntrinsics::from_normalized(0.58, 1.92, 16, 8);
  t.stereo_baseline_pose = stereo_pose('l');
  return t;
}

class KittiFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("sdepth_kitti_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    const std::string drive = "2011_09_26/2011_09_26_drive_0001_sync";
    for (const char* cam : {"image_02", "image_03"}) {
      fs::create_directories(root_ / drive / cam / "data");
      for (int f = 0; f < 5; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "%010d.png", f);
        // Frame 2 repeats frame 1 and 3 to make a static triplet.
        const int content = f == 2 ? 1 : f;
        torch::manual_seed(content * 10 + (cam[7] == '3'));
        write_rgb(root_ / drive / cam / "data" / name, torch::rand({3, 20, 40}));
      }
    }
    fs::copy_file(root_ / drive / "image_02/data/0000000001.png", root_ / drive / "image_02/data/0000000003.png",
                  fs::copy_options::overwrite_existing);
    fs::create_directories(root_ / "splits/eigen");
    std::ofstream(root_ / "splits/eigen/train_files.txt")
        << drive << " 0 l\n" << drive << " 1 l\n" << drive << " 2 l\n" << drive << " 3 r\n" << drive << " 9 l\n";
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

}  // namespace

TEST(Modes, ParseAndSourceCounts) {
  EXPECT_EQ(parse_mode("M"), TrainingMode::Mono);
  EXPECT_EQ(parse_mode("S"), TrainingMode::Stereo);
  EXPECT_EQ(parse_mode("MS"), TrainingMode::MonoStereo);
  EXPECT_THROW(parse_mode("X"), ConfigError);
  EXPECT_EQ(source_count(TrainingMode::Mono), 2);
  EXPECT_EQ(source_count(TrainingMode::Stereo), 1);
  EXPECT_EQ(source_count(TrainingMode::MonoStereo), 3);
}

TEST(StereoPose, FixedBaselineSignedBySideAndFlip) {
  EXPECT_EQ(stereo_pose('l').translation(), Eigen::Vector3d(-0.1, 0, 0));
  EXPECT_EQ(stereo_pose('r').translation(), Eigen::Vector3d(0.1, 0, 0));
  EXPECT_EQ(stereo_pose('l', true).translation(), Eigen::Vector3d(0.1, 0, 0));
  EXPECT_EQ(stereo_pose('l').axis_angle(), Eigen::Vector3d::Zero());
  EXPECT_THROW(stereo_pose('x'), ConfigError);
}

TEST(Triplet, ValidateChecksModeConsistency) {
  auto t = stereo_triplet();
  EXPECT_NO_THROW(t.validate(TrainingMode::MonoStereo));
  EXPECT_THROW(t.validate(TrainingMode::Mono), ConfigError);
  t.stereo_baseline_pose.reset();
  EXPECT_THROW(t.validate(TrainingMode::MonoStereo), ConfigError);
}

TEST(Split, DeterministicDisjointAndComplete) {
  const auto [train, val] = split_train_val(100, 0.1, 7);
  EXPECT_EQ(val.size(), 10u);
  EXPECT_EQ(train.size(), 90u);
  std::set<size_t> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(split_train_val(100, 0.1, 7), split_train_val(100, 0.1, 7));
  EXPECT_NE(split_train_val(100, 0.1, 7).second, split_train_val(100, 0.1, 8).second);
  EXPECT_EQ(split_train_val(1, 0.5, 0).second.size(), 0u);
}

TEST(Augmentation, DrawsDependOnlyOnSeedEpochAndIndex) {
  AugmentationConfig cfg;
  auto a = sample_rng(3, 1, 42), b = sample_rng(3, 1, 42);
  EXPECT_EQ(draw_augmentation(cfg, a), draw_augmentation(cfg, b));
  int differing = 0;
  for (uint64_t i = 0; i < 20; ++i) {
    auto r1 = sample_rng(3, 1, i), r2 = sample_rng(3, 2, i);
    differing += !(draw_augmentation(cfg, r1) == draw_augmentation(cfg, r2));
  }
  EXPECT_GT(differing, 15);
}

TEST(Augmentation, ProbabilitiesAndRanges) {
  AugmentationConfig cfg;
  int flips = 0, jitters = 0;
  for (uint64_t i = 0; i < 2000; ++i) {
    auto rng = sample_rng(0, 0, i);
    const auto p = draw_augmentation(cfg, rng);
    flips += p.flip;
    jitters += p.jitter;
    if (p.jitter) {
      EXPECT_GE(p.brightness, 0.8);
      EXPECT_LE(p.brightness, 1.2);
      EXPECT_LE(std::abs(p.hue), 0.1);
    } else {
      EXPECT_EQ(p.brightness, 1.0);
    }
  }
  EXPECT_NEAR(flips / 2000.0, 0.5, 0.05);
  EXPECT_NEAR(jitters / 2000.0, 0.5, 0.05);
  cfg.flip_prob = 0.0;
  cfg.jitter_prob = 0.0;
  auto rng = sample_rng(0, 0, 0);
  EXPECT_EQ(draw_augmentation(cfg, rng), AugmentationParams{});
}

TEST(Augmentation, JitterOnlyReachesNetworkInputs) {
  const auto t = stereo_triplet();
  AugmentationParams p;
  p.jitter = true;
  p.brightness = 1.15;
  p.contrast = 0.9;
  p.saturation = 1.1;
  p.hue = 0.05;
  const auto out = augment(t, p);
  EXPECT_TRUE(torch::equal(out.loss_targets.target, t.target));
  for (size_t i = 0; i < t.sources.size(); ++i) EXPECT_TRUE(torch::equal(out.loss_targets.sources[i], t.sources[i]));
  EXPECT_FALSE(torch::allclose(out.network_inputs.target, t.target));
  EXPECT_TRUE(torch::allclose(out.network_inputs.target, color_jitter(t.target, p)));
}

TEST(Augmentation, FlipMirrorsImagesIntrinsicsAndBaseline) {
  const auto t = stereo_triplet();
  AugmentationParams p;
  p.flip = true;
  const auto out = augment(t, p);
  EXPECT_TRUE(torch::equal(out.loss_targets.target, t.target.flip({-1})));
  EXPECT_TRUE(torch::equal(out.network_inputs.sources[2], t.sources[2].flip({-1})));
  EXPECT_EQ(out.loss_targets.intrinsics, t.intrinsics.flipped());
  EXPECT_EQ(out.loss_targets.stereo_baseline_pose->translation(), Eigen::Vector3d(0.1, 0, 0));
}

TEST(Augmentation, IdentityParametersLeaveColoursAlone) {
  const auto x = torch::rand({2, 3, 5, 7});
  AugmentationParams p;
  p.jitter = true;
  EXPECT_TRUE(torch::allclose(color_jitter(x, p), x, 1e-6, 1e-6));
  p.hue = 1e-9;
  EXPECT_TRUE(torch::allclose(color_jitter(x, p), x, 1e-5, 1e-5));
}

TEST_F(KittiFixture, BuildsTripletsAndDropsIncompleteOrStaticOnes) {
  KittiLoadOptions opt;
  opt.height = 32;
  opt.width = 64;
  const auto mono = load_kitti_split(root_, KittiSplit::Eigen, TrainingMode::Mono, opt);
  // Frame 0 lacks a predecessor, 2 is static, 9 is missing.
  ASSERT_EQ(mono.size(), 2u);
  EXPECT_EQ(mono[0].entry.frame, 1);
  EXPECT_EQ(mono[1].entry.frame, 3);
  EXPECT_EQ(mono[1].entry.side, 'r');

  const auto stereo = load_kitti_split(root_, KittiSplit::Eigen, TrainingMode::Stereo, opt);
  EXPECT_EQ(stereo.size(), 4u);

  KittiDataset ds(mono, TrainingMode::Mono, 32, 64);
  const auto s = ds.get(0);
  EXPECT_EQ(s.target.sizes(), (std::vector<int64_t>{3, 32, 64}));
  EXPECT_NO_THROW(s.validate(TrainingMode::Mono));
  EXPECT_EQ(ds.intrinsics().width, 64);

  KittiDataset ms(load_kitti_split(root_, KittiSplit::Eigen, TrainingMode::MonoStereo, opt), TrainingMode::MonoStereo,
                  32, 64);
  const auto r = ms.get(1);
  EXPECT_EQ(r.stereo_baseline_pose->translation().x(), 0.1);
}

TEST_F(KittiFixture, StaticListOverridesTheHeuristic) {
  std::ofstream(root_ / "splits/eigen/static_frames.txt") << "2011_09_26 2011_09_26_drive_0001_sync 1\n";
  const auto mono = load_kitti_split(root_, KittiSplit::Eigen, TrainingMode::Mono);
  ASSERT_EQ(mono.size(), 2u);
  EXPECT_EQ(mono[0].entry.frame, 2);
}

TEST(Kitti, MissingInputsAreDataErrors) {
  EXPECT_THROW(load_kitti_split("/nonexistent/kitti", KittiSplit::Eigen, TrainingMode::Mono), DataError);
  EXPECT_THROW(read_split_file("/nonexistent/split.txt"), DataError);
  EXPECT_THROW(parse_split("nope"), ConfigError);
}
