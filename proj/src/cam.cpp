#include "fcd/cam.hpp"

#include <algorithm>
#include <numeric>

#include "fcd/rng.hpp"

namespace fcd {

using nlohmann::json;

std::string to_string(CamMethod method) {
  switch (method) {
    case CamMethod::Cam:
      return "cam";
    case CamMethod::GradCam:
      return "gradcam";
    case CamMethod::GradCamPP:
      return "gradcampp";
  }
  return "?";
}

CamMethod cam_method_from_string(const std::string& name) {
  for (auto m : all_cam_methods())
    if (to_string(m) == name) return m;
  throw Error("unknown CAM method '" + name + "' (expected cam, gradcam or gradcampp)");
}

void validate(const ClassifierTrainConfig& c) {
  if (c.epochs < 0) throw Error("classifier: epochs must be >= 0");
  if (c.batch_size < 1) throw Error("classifier: batch_size must be positive");
  if (!(c.lr >= 0.0)) throw Error("classifier: lr must be non-negative");
}

json to_json(const ClassifierTrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"seed", c.seed}};
}

double classifier_accuracy(PatchClassifier& classifier, const PatchRefs& patches) {
  if (patches.empty()) throw Error("classifier_accuracy: no patches");
  const bool was_training = classifier->is_training();
  classifier->eval();
  torch::NoGradGuard no_grad;
  std::int64_t correct = 0;
  for (std::size_t start = 0; start < patches.size(); start += 256) {
    const PatchRefs chunk(patches.begin() + static_cast<long>(start),
                          patches.begin() + static_cast<long>(std::min(patches.size(), start + 256)));
    const auto pred = (classifier->forward(stack_images(chunk)) > 0).to(torch::kFloat32);
    correct += pred.eq(stack_labels(chunk)).sum().item<std::int64_t>();
  }
  if (was_training) classifier->train();
  return static_cast<double>(correct) / static_cast<double>(patches.size());
}

ClassifierTrainResult train_classifier(const PatchRefs& train_patches, const PatchRefs& val_patches,
                                       const ClassifierTrainConfig& config, const ClassifierOptions& options) {
  validate(config);
  if (train_patches.empty()) throw Error("train_classifier: no training patches");
  if (val_patches.empty()) throw Error("train_classifier: no validation patches");
  const auto first = train_patches.front()->image_label;
  if (std::all_of(train_patches.begin(), train_patches.end(), [&](const Patch* p) { return p->image_label == first; }))
    throw Error("train_classifier: training set holds a single class");

  torch::manual_seed(derive_seed(config.seed, "cam/init"));
  PatchClassifier net(options);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.lr));
  Rng rng(derive_seed(config.seed, "cam/batches"));
  const json echo = {{"architecture", to_json(options)}, {"training", to_json(config)}};

  ClassifierTrainResult result;
  const auto keep = [&](int epoch, double acc) {
    result.best_epoch = epoch;
    result.best_val_accuracy = acc;
    result.best.kind = "classifier";
    result.best.config = echo;
    result.best.iteration = epoch;
    result.best.val_f1.reset();
    result.best.extra = {{"val_accuracy", acc}};
    result.best.tensors = snapshot_state(*net);
  };
  const double initial = classifier_accuracy(net, val_patches);
  result.history.push_back({0, 0.0, initial});
  keep(0, initial);

  std::vector<std::size_t> order(train_patches.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    net->train();
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      PatchRefs batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(train_patches[order[i]]);
      opt.zero_grad();
      auto loss = torch::binary_cross_entropy_with_logits(net->forward(stack_images(batch)), stack_labels(batch));
      loss.backward();
      opt.step();
      loss_sum += loss.item<double>();
      ++batches;
    }
    const double acc = classifier_accuracy(net, val_patches);
    result.history.push_back({epoch, loss_sum / batches, acc});
    if (acc > result.best_val_accuracy) keep(epoch, acc);
  }
  result.classifier = load_classifier(result.best);
  return result;
}

torch::Tensor cam_weighted_sum(const torch::Tensor& features, const torch::Tensor& weights) {
  if (features.dim() != 4 || weights.dim() != 1 || weights.size(0) != features.size(1))
    throw Error("cam: expected features [B, K, h, w] and weights [K]");
  return (features * weights.view({1, -1, 1, 1})).sum(1);
}

torch::Tensor gradcam_weighted_sum(const torch::Tensor& features, const torch::Tensor& gradients) {
  if (!features.sizes().equals(gradients.sizes()) || features.dim() != 4)
    throw Error("gradcam: features and gradients must both be [B, K, h, w]");
  const auto w = gradients.mean({2, 3}, true);
  return torch::relu((w * features).sum(1));
}

torch::Tensor gradcampp_weighted_sum(const torch::Tensor& features, const torch::Tensor& gradients) {
  if (!features.sizes().equals(gradients.sizes()) || features.dim() != 4)
    throw Error("gradcampp: features and gradients must both be [B, K, h, w]");
  const auto g2 = gradients.pow(2);
  const auto g3 = gradients.pow(3);
  const auto sum_a = features.sum({2, 3}, true);
  const auto denom = 2 * g2 + sum_a * g3;
  const auto alpha = torch::where(gradients != 0, g2 / torch::where(denom != 0, denom, torch::ones_like(denom)),
                                  torch::zeros_like(g2));
  const auto w = (alpha * torch::relu(gradients)).sum({2, 3}, true);
  return torch::relu((w * features).sum(1));
}

torch::Tensor finalize_activation(const torch::Tensor& raw, int patch_size) {
  if (raw.dim() != 3) throw Error("finalize_activation: expected [B, h, w]");
  auto up = torch::nn::functional::interpolate(
                raw.unsqueeze(1).to(torch::kFloat32),
                torch::nn::functional::InterpolateFuncOptions()
                    .size(std::vector<std::int64_t>{patch_size, patch_size})
                    .mode(torch::kBilinear)
                    .align_corners(false))
                .squeeze(1);
  const auto flat = up.flatten(1);
  const auto lo = std::get<0>(flat.min(1, true)).unsqueeze(2);
  const auto hi = std::get<0>(flat.max(1, true)).unsqueeze(2);
  const auto range = hi - lo;
  return torch::where(range > 0, (up - lo) / torch::where(range > 0, range, torch::ones_like(range)),
                      torch::zeros_like(up));
}

torch::Tensor activation_maps(PatchClassifier& classifier, const torch::Tensor& images, CamMethod method) {
  const bool was_training = classifier->is_training();
  classifier->eval();
  torch::Tensor raw;
  if (method == CamMethod::Cam) {
    torch::NoGradGuard no_grad;
    raw = cam_weighted_sum(classifier->features(images), classifier->head_weights().detach());
  } else {
    torch::AutoGradMode grad_on(true);
    auto features = classifier->features(images).detach().requires_grad_(true);
    // Each item's logit depends on its own features only, so one backward
    // pass of the sum yields per-item gradients.
    const auto logits = classifier->head(features);
    const auto grads = torch::autograd::grad({logits.sum()}, {features})[0];
    torch::NoGradGuard no_grad;
    raw = method == CamMethod::GradCam ? gradcam_weighted_sum(features.detach(), grads)
                                       : gradcampp_weighted_sum(features.detach(), grads);
  }
  if (was_training) classifier->train();
  return finalize_activation(raw.detach(), static_cast<int>(images.size(2)));
}

namespace {

ScoreMap single_map(PatchClassifier& classifier, const Image& x, CamMethod method) {
  return score_map_from_tensor(activation_maps(classifier, to_tensor(x).unsqueeze(0), method)[0]);
}

}  // namespace

ScoreMap cam_map(PatchClassifier& classifier, const Image& x) { return single_map(classifier, x, CamMethod::Cam); }
ScoreMap gradcam_map(PatchClassifier& classifier, const Image& x) {
  return single_map(classifier, x, CamMethod::GradCam);
}
ScoreMap gradcampp_map(PatchClassifier& classifier, const Image& x) {
  return single_map(classifier, x, CamMethod::GradCamPP);
}

std::vector<ScoreMap> activation_maps(PatchClassifier& classifier, const PatchRefs& patches, CamMethod method,
                                      int batch_size) {
  std::vector<ScoreMap> out;
  out.reserve(patches.size());
  for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(batch_size)) {
    const PatchRefs chunk(patches.begin() + static_cast<long>(start),
                          patches.begin() + static_cast<long>(std::min(patches.size(), start + batch_size)));
    const auto maps = activation_maps(classifier, stack_images(chunk), method);
    for (long i = 0; i < maps.size(0); ++i) out.push_back(score_map_from_tensor(maps[i]));
  }
  return out;
}

CamMasks cam_pseudo_masks(PatchClassifier& classifier, const PatchRefs& patches, const PatchRefs& val_patches,
                          CamMethod method, bool use_image_labels, int grid_points) {
  const PatchRefs cloudy = cloudy_validation_patches(val_patches);
  CamMasks out;
  out.selection = select_threshold_on_maps(activation_maps(classifier, cloudy, method), cloudy, {}, grid_points);

  out.masks.resize(patches.size());
  PatchRefs routed;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (use_image_labels && patches[i]->image_label == DomainLabel::Clear) {
      out.masks[i] = Mask(patches[i]->patch_size(), patches[i]->patch_size(), 0);
    } else {
      routed.push_back(patches[i]);
      slots.push_back(i);
    }
  }
  const auto maps = activation_maps(classifier, routed, method);
  for (std::size_t j = 0; j < maps.size(); ++j) out.masks[slots[j]] = binarize(maps[j], out.selection.threshold);
  return out;
}

}  // namespace fcd
