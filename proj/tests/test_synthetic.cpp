#include <gtest/gtest.h>

#include <unistd.h>

#include "sdepth/errors.hpp"
#include "sdepth/losses.hpp"
#include "sdepth/synthetic.hpp"

using namespace sdepth;
namespace fs = std::filesystem;

namespace {

TwoPlanePreset small_preset() {
  TwoPlanePreset p;
  p.height = 64;
  p.width = 192;
  p.frames = 5;
  return p;
}

torch::Tensor warp_with_truth(const SyntheticScene& sc, size_t target, size_t source) {
  const auto T = sc.relative_pose(target, source).to_tensor();
  return warp_image(sc.frames[source].unsqueeze(0), sc.depths[target].unsqueeze(0), sc.spec.intrinsics, T);
}

}  // namespace

TEST(Synthetic, DepthMatchesPlaneGeometry) {
  const auto sc = generate_synthetic_scene(two_plane_spec(small_preset(), 4));
  for (size_t i = 0; i < sc.size(); ++i) {
    const double cam_z = sc.spec.trajectory[i].translation().z();
    const auto ids = sc.layer_ids[i];
    const auto d = sc.depths[i][0];
    for (int layer = 0; layer < 2; ++layer) {
      const auto sel = ids == layer;
      ASSERT_TRUE(sel.any().item<bool>());
      const auto vals = d.masked_select(sel);
      EXPECT_NEAR(vals.min().item<double>(), sc.spec.layers[layer].depth - cam_z, 1e-5);
      EXPECT_NEAR(vals.max().item<double>(), sc.spec.layers[layer].depth - cam_z, 1e-5);
    }
  }
}

TEST(Synthetic, TrueGeometryReachesThePhotometricFloor) {
  const auto sc = generate_synthetic_scene(two_plane_spec(small_preset(), 11));
  for (size_t i = 1; i + 1 < sc.size(); ++i) {
    const auto target = sc.frames[i].unsqueeze(0);
    const auto pe = min_reprojection({photometric_error(warp_with_truth(sc, i, i - 1), target),
                                      photometric_error(warp_with_truth(sc, i, i + 1), target)})
                        .loss;
    const auto interior = pe.index({0, 0, torch::indexing::Slice(4, -4), torch::indexing::Slice(8, -8)});
    EXPECT_LT(interior.median().item<double>(), 1e-3) << "frame " << i;
    EXPECT_GT((interior < 1e-2).to(torch::kFloat64).mean().item<double>(), 0.95) << "frame " << i;
  }
}

TEST(Synthetic, WarpingCommutesWithHorizontalFlip) {
  const auto sc = generate_synthetic_scene(two_plane_spec(small_preset(), 2));
  const auto K = sc.spec.intrinsics;
  const auto pose = sc.relative_pose(2, 3);
  const auto src = sc.frames[3].unsqueeze(0), depth = sc.depths[2].unsqueeze(0);
  const auto warped = warp_image(src, depth, K, pose.to_tensor());
  const auto warped_flipped =
      warp_image(flip_horizontal(src), flip_horizontal(depth), K.flipped(), pose.mirrored_x().to_tensor());
  EXPECT_LT((flip_horizontal(warped_flipped) - warped).abs().max().item<double>(), 1e-4);
}

TEST(Synthetic, StereoRendersMatchTheBaselineWarp) {
  auto spec = two_plane_spec(small_preset(), 5);
  spec.render_stereo = true;
  const auto sc = generate_synthetic_scene(spec);
  ASSERT_EQ(sc.stereo_frames.size(), sc.size());
  const auto T = stereo_pose('l', false, spec.stereo_baseline).to_tensor();
  const auto warped = warp_image(sc.stereo_frames[2].unsqueeze(0), sc.depths[2].unsqueeze(0), spec.intrinsics, T);
  const auto pe = photometric_error(warped, sc.frames[2].unsqueeze(0));
  // Occlusion bands beside the near plane stay unmatched.
  const auto interior = pe.index({0, 0, torch::indexing::Slice(4, -4), torch::indexing::Slice(24, -8)});
  EXPECT_LT(interior.median().item<double>(), 1e-3);
  EXPECT_GT((interior < 1e-2).to(torch::kFloat64).mean().item<double>(), 0.95);
}

TEST(Synthetic, GenerationIsDeterministicPerSeed) {
  const auto a = generate_synthetic_scene(two_plane_spec(small_preset(), 9));
  const auto b = generate_synthetic_scene(two_plane_spec(small_preset(), 9));
  const auto c = generate_synthetic_scene(two_plane_spec(small_preset(), 10));
  EXPECT_TRUE(torch::equal(a.frames[0], b.frames[0]));
  EXPECT_FALSE(torch::equal(a.frames[0], c.frames[0]));
}

TEST(Synthetic, RejectsInvalidSpecs) {
  auto spec = two_plane_spec(small_preset(), 1);
  spec.layers[0].depth = 60.0;
  EXPECT_THROW(generate_synthetic_scene(spec), ConfigError);
  auto fast = small_preset();
  fast.step_x = 3.0;
  EXPECT_THROW(generate_synthetic_scene(two_plane_spec(fast, 1)), ConfigError);
  EXPECT_THROW(preset_spec("cube", 0), ConfigError);
}

TEST(Synthetic, SaveLoadRoundTrip) {
  auto spec = two_plane_spec(small_preset(), 3);
  spec.render_stereo = true;
  const auto sc = generate_synthetic_scene(spec);
  const auto dir = fs::temp_directory_path() / ("sdepth_scene_" + std::to_string(::getpid()));
  save_synthetic_scene(sc, dir);
  const auto loaded = load_synthetic_scene(dir);
  EXPECT_EQ(loaded.intrinsics, sc.spec.intrinsics);
  ASSERT_EQ(loaded.frames.size(), sc.size());
  ASSERT_EQ(loaded.stereo_frames.size(), sc.size());
  EXPECT_LE((loaded.frames[1] - sc.frames[1]).abs().max().item<double>(), 0.5 / 255 + 1e-6);
  EXPECT_LE((loaded.depths[1] - sc.depths[1]).abs().max().item<double>(), 0.5 / 256 + 1e-6);
  EXPECT_TRUE(loaded.trajectory[4].matrix().isApprox(sc.spec.trajectory[4].matrix(), 1e-12));
  fs::remove(dir / "metadata.json");
  EXPECT_THROW(load_synthetic_scene(dir), DataError);
  fs::remove_all(dir);
}

TEST(Synthetic, DatasetTripletsPerMode) {
  auto preset = small_preset();
  const auto scenes = two_plane_family(preset, 2, 20, true);
  const auto mono = SyntheticDataset::from_scenes(scenes, TrainingMode::Mono);
  EXPECT_EQ(mono.size(), 2u * (preset.frames - 2));
  const auto stereo = SyntheticDataset::from_scenes(scenes, TrainingMode::Stereo);
  EXPECT_EQ(stereo.size(), 2u * preset.frames);
  const auto ms = SyntheticDataset::from_scenes(scenes, TrainingMode::MonoStereo);
  const auto t = ms.get(0);
  EXPECT_NO_THROW(t.validate(TrainingMode::MonoStereo));
  EXPECT_TRUE(torch::equal(t.target, scenes[0].frames[1]));
  EXPECT_TRUE(torch::equal(t.sources[0], scenes[0].frames[0]));
  EXPECT_TRUE(torch::equal(ms.target_depth(0), scenes[0].depths[1]));
  EXPECT_THROW(SyntheticDataset::from_scenes(two_plane_family(preset, 1, 0, false), TrainingMode::Stereo), DataError);
}
