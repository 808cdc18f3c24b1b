#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fcd/checkpoint.hpp"
#include "fcd/masks.hpp"
#include "fcd/networks.hpp"

namespace fcd {

enum class CamMethod { Cam, GradCam, GradCamPP };

std::string to_string(CamMethod method);
CamMethod cam_method_from_string(const std::string& name);
inline const std::vector<CamMethod>& all_cam_methods() {
  static const std::vector<CamMethod> methods{CamMethod::Cam, CamMethod::GradCam, CamMethod::GradCamPP};
  return methods;
}

struct ClassifierTrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

void validate(const ClassifierTrainConfig& config);
nlohmann::json to_json(const ClassifierTrainConfig& config);

struct ClassifierEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  bool operator==(const ClassifierEpoch&) const = default;
};

struct ClassifierTrainResult {
  PatchClassifier classifier{nullptr};
  Checkpoint best;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<ClassifierEpoch> history;
};

/// Binary cross-entropy on image-level labels; the epoch with the best
/// validation accuracy is kept (epoch 0 is the untrained network).
ClassifierTrainResult train_classifier(const PatchRefs& train_patches, const PatchRefs& val_patches,
                                       const ClassifierTrainConfig& config, const ClassifierOptions& options);

/// Fraction of patches whose thresholded logit matches the image label.
double classifier_accuracy(PatchClassifier& classifier, const PatchRefs& patches);

// Raw (pre-normalization) localization maps from feature maps A [B, K, h, w].

/// sum_k w_k A_k.
torch::Tensor cam_weighted_sum(const torch::Tensor& features, const torch::Tensor& weights);
/// relu(sum_k mean(dS/dA_k) A_k).
torch::Tensor gradcam_weighted_sum(const torch::Tensor& features, const torch::Tensor& gradients);
/// relu(sum_k w_k A_k) with w_k = sum_ij alpha_kij relu(g_kij),
/// alpha = g^2 / (2 g^2 + sum_ab A_kab g^3), and 0 where g = 0.
torch::Tensor gradcampp_weighted_sum(const torch::Tensor& features, const torch::Tensor& gradients);

/// Bilinear upsampling of [B, h, w] to [B, P, P] followed by per-map min-max
/// normalization; constant maps become zeros.
torch::Tensor finalize_activation(const torch::Tensor& raw, int patch_size);

/// Normalized activation maps [B, P, P] for a batch of images.
torch::Tensor activation_maps(PatchClassifier& classifier, const torch::Tensor& images, CamMethod method);

ScoreMap cam_map(PatchClassifier& classifier, const Image& x);
ScoreMap gradcam_map(PatchClassifier& classifier, const Image& x);
ScoreMap gradcampp_map(PatchClassifier& classifier, const Image& x);

std::vector<ScoreMap> activation_maps(PatchClassifier& classifier, const PatchRefs& patches, CamMethod method,
                                      int batch_size = 64);

struct CamMasks {
  ThresholdSelection selection;
  std::vector<Mask> masks;  // aligned with the input patches
};

/// Threshold chosen on validation cloudy patches, then applied to `patches`
/// (clear-labelled patches get all-zero masks when use_image_labels is set).
CamMasks cam_pseudo_masks(PatchClassifier& classifier, const PatchRefs& patches, const PatchRefs& val_patches,
                          CamMethod method, bool use_image_labels = true, int grid_points = 256);

}  // namespace fcd
