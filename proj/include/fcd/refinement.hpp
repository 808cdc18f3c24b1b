#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "fcd/checkpoint.hpp"
#include "fcd/data.hpp"
#include "fcd/networks.hpp"
#include "fcd/tensors.hpp"

namespace fcd {

struct RefineConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-4;
  int patience = 3;
  double drop_factor = 10.0;
  double aux_weight = 1.0;
  std::uint64_t seed = 0;
};

struct FinetuneConfig {
  double label_fraction = 0.01;
  double lr = 1e-5;
  bool freeze_encoder = true;
  int epochs = 30;
  int batch_size = 64;
  int patience = 3;
  double drop_factor = 10.0;
  double aux_weight = 1.0;
  std::uint64_t seed = 0;
};

void validate(const RefineConfig& config);
void validate(const FinetuneConfig& config);
nlohmann::json to_json(const RefineConfig& config);
nlohmann::json to_json(const FinetuneConfig& config);

struct SegEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double aux_loss = 0.0;
  double val_f1 = 0.0;
  double lr = 0.0;
  bool operator==(const SegEpoch&) const = default;
};

/// CSV with columns epoch, train_loss, aux_loss, val_f1, lr.
std::string epoch_metrics_csv(const std::vector<SegEpoch>& epochs);

struct SegTrainResult {
  SegNet net{nullptr};
  Checkpoint best;
  int best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<SegEpoch> history;
};

/// Copies of `patches` whose pixel masks are replaced by the given targets,
/// so training never touches the real labels. Missing targets are reported
/// together by patch id.
std::vector<Patch> with_targets(const PatchRefs& patches, const std::map<std::string, Mask>& targets);

/// Pixel-pooled F1 of (probability > 0.5) against the real masks.
double segmentation_f1(SegNet& net, const PatchRefs& patches);

/// Segmentation training on pseudo masks keyed by Patch::id(). The best
/// validation-F1 epoch is kept; the learning rate drops by drop_factor after
/// `patience` epochs without improvement.
SegTrainResult train_fcdplus(const PatchRefs& train_patches, const std::map<std::string, Mask>& pseudo_masks,
                             const PatchRefs& val_patches, const RefineConfig& config, const SegNetOptions& options);

/// Stratified (image label x biome) sample of ceil(fraction * N) patches,
/// returned in input order.
PatchRefs select_labeled_fraction(const PatchRefs& patches, double fraction, std::uint64_t seed);

/// Fine-tunes a copy of `checkpoint` on the real masks of `labeled`. The
/// starting weights are evaluated as epoch 0 and stay selected unless an
/// epoch beats them.
SegTrainResult finetune(const Checkpoint& checkpoint, const PatchRefs& labeled, const PatchRefs& val_patches,
                        const FinetuneConfig& config);

/// Per-pixel cloud probability for a normalized scene.
ScoreMap predict_scene_probability(SegNet& net, const Scene& scene, int patch_size);
/// predict_scene_probability thresholded at 0.5.
Mask predict_scene(SegNet& net, const Scene& scene, int patch_size);

}  // namespace fcd
