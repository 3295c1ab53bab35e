#pragma once

// Depth encoder-decoder and pose network.
//
// The encoder is a ResNet (18 or 50 layers) whose five stage outputs
// econv1..econv5 (strides 2, 4, 8, 16, 32) feed a U-Net style decoder:
//
//   layer    k  chns  input                 activation
//   upconvN  3  c_N   previous              ELU
//   iconvN   3  c_N   up(upconvN), econvN-1 ELU
//   dispN    3  1     iconvN                sigmoid
//
// with c = (256, 128, 64, 32, 16) from coarse to fine, 2x nearest-neighbour
// upsampling and reflection padding on every decoder convolution.
//
// Module and parameter names follow the torchvision ResNet layout
// ("conv1.weight", "layer1.0.conv1.weight", ...), so ImageNet weights exported
// from torchvision load without renaming.

#include <filesystem>
#include <optional>
#include <vector>

#include <torch/torch.h>

namespace sdepth {

struct EncoderOptions {
  int num_layers = 18;     ///< 18 or 50.
  int input_images = 1;    ///< 1 for depth, 2 for the pose encoder (6 channels).
  int width_divisor = 1;   ///< Divides every channel count; 1 is the standard network.
};

class ResnetEncoderImpl : public torch::nn::Module {
 public:
  explicit ResnetEncoderImpl(const EncoderOptions& options = {});

  /// Input in [0, 1]; returns econv1..econv5.
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

  const std::vector<int64_t>& channels() const { return channels_; }
  const EncoderOptions& options() const { return options_; }

  torch::nn::Conv2d conv1{nullptr};

 private:
  EncoderOptions options_;
  std::vector<int64_t> channels_;
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::MaxPool2d maxpool{nullptr};
  torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr}, layer4{nullptr};
};
TORCH_MODULE(ResnetEncoder);

/// 3x3 convolution with one pixel of reflection padding.
class ReflectConvImpl : public torch::nn::Module {
 public:
  ReflectConvImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(ReflectConv);

class DepthDecoderImpl : public torch::nn::Module {
 public:
  DepthDecoderImpl(std::vector<int64_t> encoder_channels, int width_divisor = 1);

  /// Returns sigmoid disparities for scales 0..3 (resolution H / 2^s).
  std::vector<torch::Tensor> forward(const std::vector<torch::Tensor>& features);

  /// Disparity head of scale s (0..3).
  ReflectConv disp_head(int s) const { return disp_[s]; }

 private:
  std::vector<int64_t> encoder_channels_;
  std::vector<int64_t> decoder_channels_;
  std::vector<ReflectConv> upconv_;  // index i: layer upconv(i+1)
  std::vector<ReflectConv> iconv_;
  std::vector<ReflectConv> disp_;
};
TORCH_MODULE(DepthDecoder);

struct PoseOutput {
  torch::Tensor axis_angle;   ///< B x 3, already scaled by 0.01.
  torch::Tensor translation;  ///< B x 3, already scaled by 0.01.

  /// B x 4 x 4 transform, optionally inverted.
  torch::Tensor matrix(bool invert = false) const;
};

class PoseDecoderImpl : public torch::nn::Module {
 public:
  PoseDecoderImpl(int64_t encoder_channels, int width_divisor = 1);
  PoseOutput forward(const torch::Tensor& econv5);

  torch::nn::Conv2d pconv0{nullptr}, pconv1{nullptr}, pconv2{nullptr}, pconv3{nullptr};
};
TORCH_MODULE(PoseDecoder);

struct DepthNetOptions {
  int encoder_depth = 18;
  int width_divisor = 1;
  int height = 192;
  int width = 640;
  /// Optional torchvision-layout ResNet weights archive.
  std::optional<std::filesystem::path> pretrained_weights;
};

class DepthNetImpl : public torch::nn::Module {
 public:
  explicit DepthNetImpl(const DepthNetOptions& options);
  std::vector<torch::Tensor> forward(const torch::Tensor& image);

  const DepthNetOptions& options() const { return options_; }
  ResnetEncoder encoder{nullptr};
  DepthDecoder decoder{nullptr};

 private:
  DepthNetOptions options_;
};
TORCH_MODULE(DepthNet);

class PoseNetImpl : public torch::nn::Module {
 public:
  explicit PoseNetImpl(const DepthNetOptions& options);
  /// Frames are given in temporal order; the output maps frame_a camera
  /// points into frame_b.
  PoseOutput forward(const torch::Tensor& frame_a, const torch::Tensor& frame_b);

  ResnetEncoder encoder{nullptr};
  PoseDecoder decoder{nullptr};
};
TORCH_MODULE(PoseNet);

/// Builds the depth network; throws ConfigError when the resolution is not
/// divisible by 32 or the encoder depth is unsupported.
DepthNet build_depth_net(const DepthNetOptions& options);
PoseNet build_pose_net(const DepthNetOptions& options);

/// Duplicates a 3-channel first-layer filter along the input channels and
/// halves it, so that a duplicated input pair reproduces the original response.
torch::Tensor expand_filter_for_pair(const torch::Tensor& weight);

/// Loads torchvision-layout weights into `encoder`, expanding the first
/// filter when the encoder takes an image pair.
void load_pretrained_encoder(ResnetEncoder& encoder, const std::filesystem::path& path);

int64_t count_parameters(const torch::nn::Module& module);

}  // namespace sdepth
