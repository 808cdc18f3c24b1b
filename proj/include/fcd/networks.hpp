#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace fcd {

struct GeneratorOptions {
  int channels = 10;
  int base_width = 64;
  int down_blocks = 2;
  int res_blocks = 6;
};

/// Append the domain label as one spatially replicated constant channel.
/// `labels` holds one 0/1 value per batch item.
torch::Tensor append_condition(const torch::Tensor& images, const torch::Tensor& labels);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int width);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Conditional encoder / residual / decoder translator G(x, c). Output goes
/// through tanh, so it always lies in [-1, 1].
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorOptions& options);
  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& labels);
  const GeneratorOptions& options() const { return options_; }

 private:
  GeneratorOptions options_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminatorOptions {
  int channels = 10;
  int patch_size = 128;
  int base_width = 64;
  int layers = 6;
};

struct DiscriminatorOutput {
  torch::Tensor adv;  // [B, 1, h, w] realness logits (raw critic scores for the gradient-penalty variant)
  torch::Tensor cls;  // [B] cloudy-domain logit
};

/// Shared strided trunk with a per-receptive-field realness head and a
/// domain classification head.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorOptions& options);
  DiscriminatorOutput forward(const torch::Tensor& images);
  const DiscriminatorOptions& options() const { return options_; }

 private:
  DiscriminatorOptions options_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d adv_head_{nullptr};
  torch::nn::Conv2d cls_head_{nullptr};
};
TORCH_MODULE(Discriminator);

struct ClassifierOptions {
  int channels = 10;
  int width = 16;
  int stages = 2;  // each stage halves the resolution
};

/// Small residual CNN with global average pooling and a linear cloudy head.
class PatchClassifierImpl : public torch::nn::Module {
 public:
  explicit PatchClassifierImpl(const ClassifierOptions& options);
  /// Last convolutional feature maps [B, K, h, w].
  torch::Tensor features(const torch::Tensor& images);
  /// Cloudy logit from feature maps.
  torch::Tensor head(const torch::Tensor& features);
  torch::Tensor forward(const torch::Tensor& images) { return head(features(images)); }
  /// Cloudy-class weights of the linear head, [K].
  torch::Tensor head_weights() const;
  const ClassifierOptions& options() const { return options_; }
  int feature_stride() const { return 1 << options_.stages; }

 private:
  ClassifierOptions options_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(PatchClassifier);

struct SegNetOptions {
  int channels = 10;
  int width = 16;
  int depth = 3;  // encoder stages including the bottleneck
};

struct SegOutput {
  torch::Tensor pixel;  // [B, 1, P, P] cloud logits
  torch::Tensor image;  // [B] auxiliary cloudy logit
};

/// U-Net style encoder-decoder with skip connections and an auxiliary
/// image-level head on the deepest encoder features.
class SegNetImpl : public torch::nn::Module {
 public:
  explicit SegNetImpl(const SegNetOptions& options);
  SegOutput forward(const torch::Tensor& images);
  std::vector<torch::Tensor> encoder_parameters() const;
  std::vector<torch::Tensor> trainable_non_encoder_parameters() const;
  /// Puts the encoder in eval mode so normalization statistics stay frozen.
  void freeze_encoder();
  bool encoder_frozen() const { return encoder_frozen_; }
  /// Keeps a frozen encoder in eval mode.
  void train(bool on = true) override;
  const SegNetOptions& options() const { return options_; }

 private:
  SegNetOptions options_;
  std::vector<torch::nn::Sequential> encoder_;
  std::vector<torch::nn::ConvTranspose2d> up_;
  std::vector<torch::nn::Sequential> decoder_;
  torch::nn::Conv2d pixel_head_{nullptr};
  torch::nn::Linear image_head_{nullptr};
  bool encoder_frozen_ = false;
};
TORCH_MODULE(SegNet);

/// Deep copy of parameters and buffers, keyed by name.
using StateDict = std::vector<std::pair<std::string, torch::Tensor>>;
StateDict snapshot_state(const torch::nn::Module& module);
void restore_state(torch::nn::Module& module, const StateDict& state);

/// Order-sensitive FNV hash of the raw bytes of the given tensors.
std::uint64_t tensor_checksum(const std::vector<torch::Tensor>& tensors);

std::int64_t count_parameters(const torch::nn::Module& module);

}  // namespace fcd
