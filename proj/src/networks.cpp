#include "fcd/networks.hpp"

#include <cstring>

#include "fcd/raster.hpp"

namespace fcd {

namespace nn = torch::nn;

torch::Tensor append_condition(const torch::Tensor& images, const torch::Tensor& labels) {
  if (images.dim() != 4) throw Error("append_condition: images must be [B, C, H, W]");
  if (labels.dim() != 1 || labels.size(0) != images.size(0))
    throw Error("append_condition: labels must hold one value per batch item");
  auto plane = labels.to(images.dtype()).view({-1, 1, 1, 1}).expand({images.size(0), 1, images.size(2), images.size(3)});
  return torch::cat({images, plane}, 1);
}

namespace {

nn::InstanceNorm2d instance_norm(int width) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(width).affine(true).track_running_stats(false));
}

nn::Conv2d conv(int in, int out, int kernel, int stride, int padding, bool bias = true) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(bias));
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int width) {
  body_ = register_module("body", nn::Sequential(conv(width, width, 3, 1, 1, false), instance_norm(width), nn::ReLU(),
                                                 conv(width, width, 3, 1, 1, false), instance_norm(width)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

GeneratorImpl::GeneratorImpl(const GeneratorOptions& options) : options_(options) {
  if (options.channels < 1 || options.base_width < 1 || options.down_blocks < 0 || options.res_blocks < 0)
    throw Error("generator: invalid architecture options");
  nn::Sequential net;
  int width = options.base_width;
  net->push_back(conv(options.channels + 1, width, 7, 1, 3, false));
  net->push_back(instance_norm(width));
  net->push_back(nn::ReLU());
  for (int i = 0; i < options.down_blocks; ++i) {
    net->push_back(conv(width, width * 2, 4, 2, 1, false));
    net->push_back(instance_norm(width * 2));
    net->push_back(nn::ReLU());
    width *= 2;
  }
  for (int i = 0; i < options.res_blocks; ++i) net->push_back(ResidualBlock(width));
  for (int i = 0; i < options.down_blocks; ++i) {
    net->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width, width / 2, 4).stride(2).padding(1).bias(false)));
    net->push_back(instance_norm(width / 2));
    net->push_back(nn::ReLU());
    width /= 2;
  }
  net->push_back(conv(width, options.channels, 7, 1, 3, false));
  net->push_back(nn::Tanh());
  net_ = register_module("net", net);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& images, const torch::Tensor& labels) {
  if (images.dim() != 4 || images.size(1) != options_.channels)
    throw Error("generator: expected [B, " + std::to_string(options_.channels) + ", P, P] input");
  const int stride = 1 << options_.down_blocks;
  if (images.size(2) % stride != 0 || images.size(3) % stride != 0)
    throw Error("generator: patch size must be divisible by " + std::to_string(stride));
  return net_->forward(append_condition(images, labels));
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorOptions& options) : options_(options) {
  if (options.layers < 1 || options.patch_size % (1 << options.layers) != 0)
    throw Error("discriminator: patch_size must be divisible by 2^layers");
  nn::Sequential trunk;
  int in = options.channels;
  int width = options.base_width;
  for (int i = 0; i < options.layers; ++i) {
    trunk->push_back(conv(in, width, 4, 2, 1));
    trunk->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.01)));
    in = width;
    width *= 2;
  }
  trunk_ = register_module("trunk", trunk);
  const int final_size = options.patch_size >> options.layers;
  adv_head_ = register_module("adv_head", conv(in, 1, 3, 1, 1, false));
  cls_head_ = register_module("cls_head", conv(in, 1, final_size, 1, 0, false));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != options_.channels || images.size(2) != options_.patch_size ||
      images.size(3) != options_.patch_size)
    throw Error("discriminator: expected [B, " + std::to_string(options_.channels) + ", " +
                std::to_string(options_.patch_size) + ", " + std::to_string(options_.patch_size) + "] input");
  auto h = trunk_->forward(images);
  return {adv_head_->forward(h), cls_head_->forward(h).view({-1})};
}

PatchClassifierImpl::PatchClassifierImpl(const ClassifierOptions& options) : options_(options) {
  if (options.channels < 1 || options.width < 1 || options.stages < 0) throw Error("classifier: invalid options");
  nn::Sequential trunk;
  int width = options.width;
  trunk->push_back(conv(options.channels, width, 3, 1, 1));
  trunk->push_back(nn::ReLU());
  for (int s = 0; s < options.stages; ++s) {
    trunk->push_back(ResidualBlock(width));
    trunk->push_back(conv(width, width * 2, 3, 2, 1));
    trunk->push_back(nn::ReLU());
    width *= 2;
  }
  trunk->push_back(ResidualBlock(width));
  trunk->push_back(nn::ReLU());
  trunk_ = register_module("trunk", trunk);
  fc_ = register_module("fc", nn::Linear(width, 1));
}

torch::Tensor PatchClassifierImpl::features(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != options_.channels) throw Error("classifier: bad input shape");
  return trunk_->forward(images);
}

torch::Tensor PatchClassifierImpl::head(const torch::Tensor& features) {
  return fc_->forward(features.mean({2, 3})).view({-1});
}

torch::Tensor PatchClassifierImpl::head_weights() const { return fc_->weight.view({-1}); }

namespace {

nn::Sequential double_conv(int in, int out) {
  return nn::Sequential(conv(in, out, 3, 1, 1, false), nn::BatchNorm2d(out), nn::ReLU(), conv(out, out, 3, 1, 1, false),
                        nn::BatchNorm2d(out), nn::ReLU());
}

}  // namespace

SegNetImpl::SegNetImpl(const SegNetOptions& options) : options_(options) {
  if (options.depth < 2 || options.width < 1 || options.channels < 1) throw Error("segnet: invalid options");
  int in = options.channels;
  for (int d = 0; d < options.depth; ++d) {
    const int out = options.width << d;
    encoder_.push_back(register_module("enc" + std::to_string(d), double_conv(in, out)));
    in = out;
  }
  for (int d = options.depth - 2; d >= 0; --d) {
    const int out = options.width << d;
    up_.push_back(register_module("up" + std::to_string(d),
                                  nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 2).stride(2))));
    decoder_.push_back(register_module("dec" + std::to_string(d), double_conv(out * 2, out)));
    in = out;
  }
  pixel_head_ = register_module("pixel_head", conv(in, 1, 1, 1, 0));
  image_head_ = register_module("image_head", nn::Linear(options.width << (options.depth - 1), 1));
}

SegOutput SegNetImpl::forward(const torch::Tensor& images) {
  const int stride = 1 << (options_.depth - 1);
  if (images.dim() != 4 || images.size(1) != options_.channels || images.size(2) % stride != 0 ||
      images.size(3) % stride != 0)
    throw Error("segnet: expected [B, " + std::to_string(options_.channels) + ", P, P] with P divisible by " +
                std::to_string(stride));
  std::vector<torch::Tensor> skips;
  auto h = images;
  for (std::size_t d = 0; d < encoder_.size(); ++d) {
    if (d > 0) h = torch::max_pool2d(h, 2);
    h = encoder_[d]->forward(h);
    skips.push_back(h);
  }
  auto image_logit = image_head_->forward(h.mean({2, 3})).view({-1});
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    h = up_[i]->forward(h);
    h = decoder_[i]->forward(torch::cat({h, skips[skips.size() - 2 - i]}, 1));
  }
  return {pixel_head_->forward(h), image_logit};
}

std::vector<torch::Tensor> SegNetImpl::encoder_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& stage : encoder_)
    for (const auto& p : stage->parameters()) out.push_back(p);
  return out;
}

std::vector<torch::Tensor> SegNetImpl::trainable_non_encoder_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& m : up_)
    for (const auto& p : m->parameters()) out.push_back(p);
  for (const auto& m : decoder_)
    for (const auto& p : m->parameters()) out.push_back(p);
  for (const auto& p : pixel_head_->parameters()) out.push_back(p);
  for (const auto& p : image_head_->parameters()) out.push_back(p);
  return out;
}

void SegNetImpl::freeze_encoder() {
  encoder_frozen_ = true;
  for (auto& stage : encoder_) {
    stage->eval();
    for (auto& p : stage->parameters()) p.set_requires_grad(false);
  }
}

void SegNetImpl::train(bool on) {
  torch::nn::Module::train(on);
  if (encoder_frozen_)
    for (auto& stage : encoder_) stage->eval();
}

StateDict snapshot_state(const torch::nn::Module& module) {
  torch::NoGradGuard guard;
  StateDict out;
  for (const auto& item : module.named_parameters()) out.emplace_back(item.key(), item.value().detach().clone());
  for (const auto& item : module.named_buffers()) out.emplace_back(item.key(), item.value().detach().clone());
  return out;
}

void restore_state(torch::nn::Module& module, const StateDict& state) {
  torch::NoGradGuard guard;
  auto params = module.named_parameters();
  auto buffers = module.named_buffers();
  std::size_t matched = 0;
  for (const auto& [name, value] : state) {
    torch::Tensor* target = params.find(name);
    if (target == nullptr) target = buffers.find(name);
    if (target == nullptr) throw Error("restore_state: unknown tensor '" + name + "'");
    if (!target->sizes().equals(value.sizes())) throw Error("restore_state: shape mismatch for '" + name + "'");
    target->copy_(value);
    ++matched;
  }
  if (matched != params.size() + buffers.size()) throw Error("restore_state: state does not cover every tensor");
}

std::uint64_t tensor_checksum(const std::vector<torch::Tensor>& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) {
    const auto c = t.detach().contiguous().cpu();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace fcd
