#include "fcd/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "fcd/masks.hpp"
#include "fcd/metrics.hpp"
#include "fcd/rng.hpp"

namespace fcd {

using nlohmann::json;

void validate(const RefineConfig& c) {
  if (c.epochs < 1) throw Error("refine: epochs must be positive");
  if (c.batch_size < 1) throw Error("refine: batch_size must be positive");
  if (!(c.lr >= 0.0)) throw Error("refine: lr must be non-negative");
  if (c.patience < 1) throw Error("refine: patience must be positive");
  if (!(c.drop_factor >= 1.0)) throw Error("refine: drop_factor must be >= 1");
  if (!(c.aux_weight >= 0.0)) throw Error("refine: aux_weight must be non-negative");
}

void validate(const FinetuneConfig& c) {
  if (!(c.label_fraction > 0.0 && c.label_fraction <= 1.0)) throw Error("finetune: label_fraction must lie in (0, 1]");
  if (c.epochs < 0) throw Error("finetune: epochs must be >= 0");
  if (c.batch_size < 1) throw Error("finetune: batch_size must be positive");
  if (!(c.lr >= 0.0)) throw Error("finetune: lr must be non-negative");
  if (c.patience < 1) throw Error("finetune: patience must be positive");
  if (!(c.drop_factor >= 1.0)) throw Error("finetune: drop_factor must be >= 1");
  if (!(c.aux_weight >= 0.0)) throw Error("finetune: aux_weight must be non-negative");
}

json to_json(const RefineConfig& c) {
  return {{"epochs", c.epochs},   {"batch_size", c.batch_size},   {"lr", c.lr},
          {"patience", c.patience}, {"drop_factor", c.drop_factor}, {"aux_weight", c.aux_weight},
          {"seed", c.seed}};
}

json to_json(const FinetuneConfig& c) {
  return {{"label_fraction", c.label_fraction},
          {"lr", c.lr},
          {"freeze_encoder", c.freeze_encoder},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"drop_factor", c.drop_factor},
          {"aux_weight", c.aux_weight},
          {"seed", c.seed}};
}

std::string epoch_metrics_csv(const std::vector<SegEpoch>& epochs) {
  std::ostringstream out;
  out << "epoch,train_loss,aux_loss,val_f1,lr\n";
  char line[256];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.aux_loss, e.val_f1, e.lr);
    out << line;
  }
  return out.str();
}

std::vector<Patch> with_targets(const PatchRefs& patches, const std::map<std::string, Mask>& targets) {
  std::vector<Patch> out;
  out.reserve(patches.size());
  std::string missing;
  for (const Patch* p : patches) {
    const auto it = targets.find(p->id());
    if (it == targets.end()) {
      missing += " " + p->id();
      continue;
    }
    if (it->second.height != p->patch_size() || it->second.width != p->patch_size())
      throw Error("pseudo mask for " + p->id() + " does not match the patch size");
    Patch copy;
    copy.scene_id = p->scene_id;
    copy.origin = p->origin;
    copy.data = p->data;
    copy.image_label = p->image_label;
    copy.biome = p->biome;
    copy.pad_rows = p->pad_rows;
    copy.pad_cols = p->pad_cols;
    copy.nodata_fraction = p->nodata_fraction;
    copy.pixel_mask = it->second;
    out.push_back(std::move(copy));
  }
  if (!missing.empty()) throw Error("missing pseudo masks for patches:" + missing);
  return out;
}

double segmentation_f1(SegNet& net, const PatchRefs& patches) {
  if (patches.empty()) throw Error("segmentation_f1: no patches");
  const bool was_training = net->is_training();
  net->eval();
  torch::NoGradGuard no_grad;
  Confusion total;
  for (std::size_t start = 0; start < patches.size(); start += 256) {
    const PatchRefs chunk(patches.begin() + static_cast<long>(start),
                          patches.begin() + static_cast<long>(std::min(patches.size(), start + 256)));
    const auto pred = (net->forward(stack_images(chunk)).pixel > 0).to(torch::kUInt8);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (!chunk[i]->pixel_mask) throw Error("segmentation_f1: patch " + chunk[i]->id() + " has no ground truth");
      total += confusion(mask_from_tensor(pred[static_cast<long>(i)][0]), *chunk[i]->pixel_mask);
    }
  }
  if (was_training) net->train();
  return f1_accuracy(total).f1;
}

namespace {

struct FitSettings {
  int epochs;
  int batch_size;
  double lr;
  int patience;
  double drop_factor;
  double aux_weight;
  std::uint64_t seed;
  bool initial_candidate;
};

// Shared epoch loop: `samples` carry the training targets in pixel_mask.
SegTrainResult fit(SegNet net, std::vector<torch::Tensor> params, const PatchRefs& samples, const PatchRefs& val,
                   const FitSettings& s, const json& echo) {
  if (samples.empty()) throw Error("segmentation training: no training patches");
  if (val.empty()) throw Error("segmentation training: no validation patches");
  torch::optim::Adam opt(params, torch::optim::AdamOptions(s.lr));
  Rng rng(derive_seed(s.seed, "seg/batches"));
  double lr = s.lr;

  SegTrainResult result;
  bool have_best = false;
  int stale = 0;
  const auto consider = [&](int epoch, double f1) {
    if (have_best && !(f1 > result.best_val_f1)) return false;
    have_best = true;
    result.best_epoch = epoch;
    result.best_val_f1 = f1;
    result.best.kind = "segnet";
    result.best.config = echo;
    result.best.iteration = epoch;
    result.best.val_f1 = f1;
    result.best.tensors = snapshot_state(*net);
    return true;
  };
  if (s.initial_candidate) {
    const double f1 = segmentation_f1(net, val);
    result.history.push_back({0, 0.0, 0.0, f1, lr});
    consider(0, f1);
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= s.epochs; ++epoch) {
    net->train();
    rng.shuffle(std::span<std::size_t>(order));
    double pixel_sum = 0.0, aux_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(s.batch_size)) {
      PatchRefs batch;
      for (std::size_t i = start; i < std::min(order.size(), start + s.batch_size); ++i)
        batch.push_back(samples[order[i]]);
      opt.zero_grad();
      const auto out = net->forward(stack_images(batch));
      const auto pixel = torch::binary_cross_entropy_with_logits(out.pixel, stack_masks(batch));
      const auto aux = torch::binary_cross_entropy_with_logits(out.image, stack_labels(batch));
      const auto loss = pixel + s.aux_weight * aux;
      if (!std::isfinite(loss.item<double>()))
        throw Error("segmentation training: non-finite loss at epoch " + std::to_string(epoch));
      loss.backward();
      opt.step();
      pixel_sum += pixel.item<double>();
      aux_sum += aux.item<double>();
      ++batches;
    }
    const double f1 = segmentation_f1(net, val);
    result.history.push_back({epoch, pixel_sum / batches, aux_sum / batches, f1, lr});
    if (consider(epoch, f1)) {
      stale = 0;
    } else if (++stale >= s.patience) {
      lr /= s.drop_factor;
      for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
      stale = 0;
    }
  }
  result.net = load_segnet(result.best);
  return result;
}

}  // namespace

SegTrainResult train_fcdplus(const PatchRefs& train_patches, const std::map<std::string, Mask>& pseudo_masks,
                             const PatchRefs& val_patches, const RefineConfig& config, const SegNetOptions& options) {
  validate(config);
  const std::vector<Patch> samples = with_targets(train_patches, pseudo_masks);
  torch::manual_seed(derive_seed(config.seed, "seg/init"));
  SegNet net(options);
  const json echo = {{"architecture", to_json(options)}, {"training", to_json(config)}};
  return fit(net, net->parameters(), refs(samples), val_patches,
             {config.epochs, config.batch_size, config.lr, config.patience, config.drop_factor, config.aux_weight,
              config.seed, false},
             echo);
}

PatchRefs select_labeled_fraction(const PatchRefs& patches, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("select_labeled_fraction: fraction must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(patches.size()) - 1e-9));
  if (n == 0) throw Error("select_labeled_fraction: fraction selects no patches");

  std::map<std::pair<int, std::string>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < patches.size(); ++i)
    strata[{to_int(patches[i]->image_label), patches[i]->biome.value_or("")}].push_back(i);

  // Largest-remainder allocation of n across strata.
  std::vector<std::pair<std::size_t, double>> quota;
  std::size_t assigned = 0;
  for (const auto& [key, members] : strata) {
    const double exact = static_cast<double>(n) * members.size() / patches.size();
    const auto base = static_cast<std::size_t>(std::floor(exact));
    quota.emplace_back(base, exact - base);
    assigned += base;
  }
  std::vector<std::size_t> rank(quota.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return quota[a].second > quota[b].second; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++quota[rank[k % rank.size()]].first;

  Rng rng(derive_seed(seed, "labeled-fraction"));
  std::vector<std::size_t> chosen;
  std::size_t s = 0;
  for (auto& [key, members] : strata) {
    rng.shuffle(std::span<std::size_t>(members));
    const std::size_t take = std::min(quota[s++].first, members.size());
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<long>(take));
  }
  std::sort(chosen.begin(), chosen.end());
  PatchRefs out;
  for (auto i : chosen) out.push_back(patches[i]);
  return out;
}

SegTrainResult finetune(const Checkpoint& checkpoint, const PatchRefs& labeled, const PatchRefs& val_patches,
                        const FinetuneConfig& config) {
  validate(config);
  if (labeled.empty()) throw Error("finetune: empty labeled subset");
  for (const Patch* p : labeled)
    if (!p->pixel_mask) throw Error("finetune: labeled patch " + p->id() + " has no pixel mask");
  SegNet net = load_segnet(checkpoint);
  std::vector<torch::Tensor> params;
  if (config.freeze_encoder) {
    net->freeze_encoder();
    params = net->trainable_non_encoder_parameters();
  } else {
    params = net->parameters();
  }
  json echo = checkpoint.config;
  echo["finetune"] = to_json(config);
  echo["parent"] = checkpoint_id(checkpoint);
  return fit(net, params, labeled, val_patches,
             {config.epochs, config.batch_size, config.lr, config.patience, config.drop_factor, config.aux_weight,
              config.seed, true},
             echo);
}

ScoreMap predict_scene_probability(SegNet& net, const Scene& scene, int patch_size) {
  const TiledScene tiled = tile_scene(scene, patch_size, 1.0);
  const bool was_training = net->is_training();
  net->eval();
  torch::NoGradGuard no_grad;
  std::vector<Placed<float>> tiles;
  const PatchRefs all = refs(tiled.patches);
  for (std::size_t start = 0; start < all.size(); start += 64) {
    const PatchRefs chunk(all.begin() + static_cast<long>(start),
                          all.begin() + static_cast<long>(std::min(all.size(), start + 64)));
    const auto prob = torch::sigmoid(net->forward(stack_images(chunk)).pixel);
    for (std::size_t i = 0; i < chunk.size(); ++i)
      tiles.push_back({chunk[i]->origin, score_map_from_tensor(prob[static_cast<long>(i)][0])});
  }
  if (was_training) net->train();
  return stitch_scores(tiles, tiled.grid);
}

Mask predict_scene(SegNet& net, const Scene& scene, int patch_size) {
  return binarize(predict_scene_probability(net, scene, patch_size), 0.5f);
}

}  // namespace fcd
