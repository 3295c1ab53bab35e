#include "sdepth/networks.hpp"

#include <sstream>

#include "sdepth/checkpoint.hpp"
#include "sdepth/errors.hpp"
#include "sdepth/geometry.hpp"

namespace sdepth {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1, int64_t pad = 0, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(bias));
}

class BasicBlockImpl : public nn::Module {
 public:
  static constexpr int64_t kExpansion = 1;

  BasicBlockImpl(int64_t in, int64_t planes, int64_t stride) {
    conv1 = register_module("conv1", conv(in, planes, 3, stride, 1));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", conv(planes, planes, 3, 1, 1));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    if (stride != 1 || in != planes) {
      downsample = register_module("downsample", nn::Sequential(conv(in, planes, 1, stride), nn::BatchNorm2d(planes)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = bn2(conv2(out));
    return torch::relu(out + (downsample ? downsample->forward(x) : x));
  }

  nn::Conv2d conv1{nullptr}, conv2{nullptr};
  nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class BottleneckImpl : public nn::Module {
 public:
  static constexpr int64_t kExpansion = 4;

  BottleneckImpl(int64_t in, int64_t planes, int64_t stride) {
    conv1 = register_module("conv1", conv(in, planes, 1));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", conv(planes, planes, 3, stride, 1));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    conv3 = register_module("conv3", conv(planes, planes * kExpansion, 1));
    bn3 = register_module("bn3", nn::BatchNorm2d(planes * kExpansion));
    if (stride != 1 || in != planes * kExpansion) {
      downsample = register_module(
          "downsample", nn::Sequential(conv(in, planes * kExpansion, 1, stride), nn::BatchNorm2d(planes * kExpansion)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = torch::relu(bn2(conv2(out)));
    out = bn3(conv3(out));
    return torch::relu(out + (downsample ? downsample->forward(x) : x));
  }

  nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

template <typename Block>
nn::Sequential make_layer(int64_t& in, int64_t planes, int blocks, int64_t stride) {
  nn::Sequential seq;
  seq->push_back(Block(in, planes, stride));
  in = planes * Block::Impl::kExpansion;
  for (int i = 1; i < blocks; ++i) seq->push_back(Block(in, planes, 1));
  return seq;
}

void check_divisor(int width_divisor) {
  if (width_divisor < 1 || 64 % width_divisor != 0)
    throw ConfigError("width_divisor must divide 64 (got " + std::to_string(width_divisor) + ")");
}

}  // namespace

ResnetEncoderImpl::ResnetEncoderImpl(const EncoderOptions& options) : options_(options) {
  check_divisor(options.width_divisor);
  if (options.input_images < 1) throw ConfigError("encoder needs at least one input image");
  const int64_t base = 64 / options.width_divisor;
  conv1 = register_module("conv1", conv(3 * options.input_images, base, 7, 2, 3));
  bn1 = register_module("bn1", nn::BatchNorm2d(base));
  maxpool = register_module("maxpool", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));

  int64_t in = base;
  if (options.num_layers == 18) {
    layer1 = register_module("layer1", make_layer<BasicBlock>(in, base, 2, 1));
    layer2 = register_module("layer2", make_layer<BasicBlock>(in, base * 2, 2, 2));
    layer3 = register_module("layer3", make_layer<BasicBlock>(in, base * 4, 2, 2));
    layer4 = register_module("layer4", make_layer<BasicBlock>(in, base * 8, 2, 2));
    channels_ = {base, base, base * 2, base * 4, base * 8};
  } else if (options.num_layers == 50) {
    layer1 = register_module("layer1", make_layer<Bottleneck>(in, base, 3, 1));
    layer2 = register_module("layer2", make_layer<Bottleneck>(in, base * 2, 4, 2));
    layer3 = register_module("layer3", make_layer<Bottleneck>(in, base * 4, 6, 2));
    layer4 = register_module("layer4", make_layer<Bottleneck>(in, base * 8, 3, 2));
    channels_ = {base, base * 4, base * 8, base * 16, base * 32};
  } else {
    throw ConfigError("encoder depth must be 18 or 50 (got " + std::to_string(options.num_layers) + ")");
  }

  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* c = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
    } else if (auto* b = m->as<nn::BatchNorm2d>()) {
      nn::init::ones_(b->weight);
      nn::init::zeros_(b->bias);
    }
  }
}

std::vector<torch::Tensor> ResnetEncoderImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> features;
  features.reserve(5);
  auto h = (x - 0.45) / 0.225;
  features.push_back(torch::relu(bn1(conv1(h))));
  features.push_back(layer1->forward(maxpool(features.back())));
  features.push_back(layer2->forward(features.back()));
  features.push_back(layer3->forward(features.back()));
  features.push_back(layer4->forward(features.back()));
  return features;
}

ReflectConvImpl::ReflectConvImpl(int64_t in, int64_t out) {
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 3)));
}

torch::Tensor ReflectConvImpl::forward(const torch::Tensor& x) {
  return conv(F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect)));
}

DepthDecoderImpl::DepthDecoderImpl(std::vector<int64_t> encoder_channels, int width_divisor)
    : encoder_channels_(std::move(encoder_channels)) {
  check_divisor(width_divisor);
  if (encoder_channels_.size() != 5) throw ConfigError("depth decoder expects five encoder feature maps");
  for (int64_t c : {16, 32, 64, 128, 256}) decoder_channels_.push_back(std::max<int64_t>(c / width_divisor, 1));

  upconv_.resize(5, nullptr);
  iconv_.resize(5, nullptr);
  disp_.resize(4, nullptr);
  for (int i = 4; i >= 0; --i) {
    const int64_t in = i == 4 ? encoder_channels_[4] : decoder_channels_[i + 1];
    upconv_[i] = register_module("upconv" + std::to_string(i + 1), ReflectConv(in, decoder_channels_[i]));
    const int64_t skip = i > 0 ? encoder_channels_[i - 1] : 0;
    iconv_[i] = register_module("iconv" + std::to_string(i + 1),
                                ReflectConv(decoder_channels_[i] + skip, decoder_channels_[i]));
    if (i < 4) disp_[i] = register_module("disp" + std::to_string(i + 1), ReflectConv(decoder_channels_[i], 1));
  }
}

std::vector<torch::Tensor> DepthDecoderImpl::forward(const std::vector<torch::Tensor>& features) {
  if (features.size() != 5) throw ConfigError("depth decoder expects five encoder feature maps");
  std::vector<torch::Tensor> disps(4);
  auto x = features[4];
  for (int i = 4; i >= 0; --i) {
    x = F::elu(upconv_[i]->forward(x));
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    if (i > 0) x = torch::cat({x, features[i - 1]}, 1);
    x = F::elu(iconv_[i]->forward(x));
    if (i < 4) disps[i] = torch::sigmoid(disp_[i]->forward(x));
  }
  return disps;
}

torch::Tensor PoseOutput::matrix(bool invert) const { return pose_to_matrix(axis_angle, translation, invert); }

PoseDecoderImpl::PoseDecoderImpl(int64_t encoder_channels, int width_divisor) {
  check_divisor(width_divisor);
  const int64_t c = 256 / width_divisor;
  pconv0 = register_module("pconv0", conv(encoder_channels, c, 1, 1, 0, true));
  pconv1 = register_module("pconv1", conv(c, c, 3, 1, 1, true));
  pconv2 = register_module("pconv2", conv(c, c, 3, 1, 1, true));
  pconv3 = register_module("pconv3", conv(c, 6, 1, 1, 0, true));
}

PoseOutput PoseDecoderImpl::forward(const torch::Tensor& econv5) {
  auto x = torch::relu(pconv0(econv5));
  x = torch::relu(pconv1(x));
  x = torch::relu(pconv2(x));
  x = pconv3(x).mean({2, 3}) * 0.01;
  return {x.narrow(1, 0, 3), x.narrow(1, 3, 3)};
}

namespace {

void check_options(const DepthNetOptions& o) {
  if (o.height <= 0 || o.width <= 0 || o.height % 32 != 0 || o.width % 32 != 0) {
    std::ostringstream msg;
    msg << "input resolution " << o.height << "x" << o.width << " must be divisible by 32";
    throw ConfigError(msg.str());
  }
  if (o.encoder_depth != 18 && o.encoder_depth != 50)
    throw ConfigError("encoder depth must be 18 or 50 (got " + std::to_string(o.encoder_depth) + ")");
  check_divisor(o.width_divisor);
}

void check_input(const torch::Tensor& image, const DepthNetOptions& o, int channels) {
  if (image.dim() != 4 || image.size(1) != channels || image.size(2) != o.height || image.size(3) != o.width) {
    std::ostringstream msg;
    msg << "network built for " << channels << " x " << o.height << " x " << o.width << " input, got "
        << image.sizes();
    throw ConfigError(msg.str());
  }
}

}  // namespace

DepthNetImpl::DepthNetImpl(const DepthNetOptions& options) : options_(options) {
  check_options(options);
  encoder = register_module("encoder", ResnetEncoder(EncoderOptions{options.encoder_depth, 1, options.width_divisor}));
  decoder = register_module("decoder", DepthDecoder(encoder->channels(), options.width_divisor));
  if (options.pretrained_weights) load_pretrained_encoder(encoder, *options.pretrained_weights);
}

std::vector<torch::Tensor> DepthNetImpl::forward(const torch::Tensor& image) {
  check_input(image, options_, 3);
  return decoder->forward(encoder->forward(image));
}

PoseNetImpl::PoseNetImpl(const DepthNetOptions& options) {
  check_options(options);
  encoder = register_module("encoder", ResnetEncoder(EncoderOptions{options.encoder_depth, 2, options.width_divisor}));
  decoder = register_module("decoder", PoseDecoder(encoder->channels().back(), options.width_divisor));
  if (options.pretrained_weights) load_pretrained_encoder(encoder, *options.pretrained_weights);
}

PoseOutput PoseNetImpl::forward(const torch::Tensor& frame_a, const torch::Tensor& frame_b) {
  if (frame_a.sizes() != frame_b.sizes()) throw ConfigError("pose network frames differ in shape");
  if (frame_a.dim() != 4 || frame_a.size(1) != 3) throw ConfigError("pose network expects B x 3 x H x W frames");
  return decoder->forward(encoder->forward(torch::cat({frame_a, frame_b}, 1)).back());
}

DepthNet build_depth_net(const DepthNetOptions& options) { return DepthNet(options); }
PoseNet build_pose_net(const DepthNetOptions& options) { return PoseNet(options); }

torch::Tensor expand_filter_for_pair(const torch::Tensor& weight) {
  if (weight.dim() != 4 || weight.size(1) != 3) throw ConfigError("expected an out x 3 x k x k filter");
  return torch::cat({weight, weight}, 1) / 2.0;
}

void load_pretrained_encoder(ResnetEncoder& encoder, const std::filesystem::path& path) {
  const auto archive = TensorArchive::load(path);
  torch::NoGradGuard no_grad;
  for (auto& p : encoder->named_parameters()) {
    auto src = archive.get(p.key());
    if (p.key() == "conv1.weight" && encoder->options().input_images == 2) src = expand_filter_for_pair(src);
    if (src.sizes() != p.value().sizes())
      throw CheckpointError("pretrained weight shape mismatch for " + p.key());
    p.value().copy_(src);
  }
  for (auto& b : encoder->named_buffers()) {
    if (archive.contains(b.key())) b.value().copy_(archive.get(b.key()));
  }
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace sdepth
