#include <gtest/gtest.h>

#include "sdepth/checkpoint.hpp"
#include "sdepth/errors.hpp"
#include "sdepth/networks.hpp"

using namespace sdepth;

namespace {

DepthNetOptions tiny(int depth = 18) {
  DepthNetOptions o;
  o.encoder_depth = depth;
  o.width_divisor = 8;
  o.height = 64;
  o.width = 96;
  return o;
}

}  // namespace

TEST(DepthNet, FourSigmoidScales) {
  torch::manual_seed(1);
  auto net = build_depth_net(tiny());
  const auto out = net->forward(torch::rand({2, 3, 64, 96}));
  ASSERT_EQ(out.size(), 4u);
  for (int s = 0; s < 4; ++s) {
    EXPECT_EQ(out[s].sizes(), (std::vector<int64_t>{2, 1, 64 >> s, 96 >> s}));
    EXPECT_GE(out[s].min().item<double>(), 0.0);
    EXPECT_LE(out[s].max().item<double>(), 1.0);
  }
}

TEST(DepthNet, EncoderStagesHaveExpectedStrides) {
  auto enc = ResnetEncoder(EncoderOptions{18, 1, 8});
  const auto feats = enc->forward(torch::rand({1, 3, 64, 96}));
  ASSERT_EQ(feats.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(feats[i].size(2), 64 >> (i + 1));
    EXPECT_EQ(feats[i].size(1), enc->channels()[i]);
  }
  EXPECT_EQ(enc->channels(), (std::vector<int64_t>{8, 8, 16, 32, 64}));
  auto deep = ResnetEncoder(EncoderOptions{50, 1, 8});
  EXPECT_EQ(deep->channels(), (std::vector<int64_t>{8, 32, 64, 128, 256}));
}

TEST(DepthNet, StandardResnet18ParameterCount) {
  auto enc = ResnetEncoder(EncoderOptions{});
  // torchvision resnet18 without the classifier head.
  EXPECT_EQ(count_parameters(*enc), 11689512 - 513000);
}

TEST(DepthNet, RejectsBadConfigurations) {
  auto o = tiny();
  o.height = 70;
  EXPECT_THROW(build_depth_net(o), ConfigError);
  o = tiny(34);
  EXPECT_THROW(build_depth_net(o), ConfigError);
}

TEST(PoseNet, OutputsSmallTransforms) {
  torch::manual_seed(2);
  auto net = build_pose_net(tiny());
  const auto a = torch::rand({3, 3, 64, 96}), b = torch::rand({3, 3, 64, 96});
  const auto out = net->forward(a, b);
  EXPECT_EQ(out.axis_angle.sizes(), (std::vector<int64_t>{3, 3}));
  EXPECT_EQ(out.translation.sizes(), (std::vector<int64_t>{3, 3}));
  const auto T = out.matrix(), Ti = out.matrix(true);
  EXPECT_EQ(T.sizes(), (std::vector<int64_t>{3, 4, 4}));
  EXPECT_LT((torch::matmul(T, Ti) - torch::eye(4)).abs().max().item<double>(), 1e-5);
}

TEST(PoseNet, PairFilterExpansionPreservesDuplicatedInputResponse) {
  const auto w = torch::randn({4, 3, 7, 7}, torch::kFloat64);
  const auto w2 = expand_filter_for_pair(w);
  ASSERT_EQ(w2.sizes(), (std::vector<int64_t>{4, 6, 7, 7}));
  const auto x = torch::rand({1, 3, 16, 16}, torch::kFloat64);
  const auto y1 = torch::conv2d(x, w);
  const auto y2 = torch::conv2d(torch::cat({x, x}, 1), w2);
  EXPECT_LT((y1 - y2).abs().max().item<double>(), 1e-12);
}

TEST(PoseNet, LoadsTorchvisionLayoutWeights) {
  torch::manual_seed(3);
  auto src = ResnetEncoder(EncoderOptions{18, 1, 8});
  TensorArchive ar;
  for (const auto& p : src->named_parameters()) ar.put(p.key(), p.value());
  for (const auto& b : src->named_buffers()) ar.put(b.key(), b.value());
  const auto path = std::filesystem::temp_directory_path() / "sdepth_test_weights.bin";
  ar.save(path);

  auto pair = ResnetEncoder(EncoderOptions{18, 2, 8});
  load_pretrained_encoder(pair, path);
  EXPECT_TRUE(torch::allclose(pair->conv1->weight, expand_filter_for_pair(src->conv1->weight)));

  auto single = ResnetEncoder(EncoderOptions{18, 1, 8});
  load_pretrained_encoder(single, path);
  single->eval();
  src->eval();
  const auto x = torch::rand({1, 3, 64, 96});
  EXPECT_TRUE(torch::allclose(single->forward(x).back(), src->forward(x).back()));

  auto wrong = ResnetEncoder(EncoderOptions{18, 1, 4});
  EXPECT_THROW(load_pretrained_encoder(wrong, path), CheckpointError);
  std::filesystem::remove(path);
}
