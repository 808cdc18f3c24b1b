#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "fcd/checkpoint.hpp"
#include "fcd/losses.hpp"
#include "fcd/masks.hpp"
#include "fcd/networks.hpp"
#include "fcd/rng.hpp"

namespace fcd {

enum class AdversarialVariant { Logistic, GradientPenalty };
enum class GeneratorAdversarialForm { NonSaturating, Saturating };

struct GanTrainConfig {
  std::int64_t iterations = 200000;
  int batch_size = 16;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int d_steps_per_g_step = 5;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 10000;
  AdversarialVariant adversarial_variant = AdversarialVariant::Logistic;
  GeneratorAdversarialForm generator_form = GeneratorAdversarialForm::NonSaturating;
  LossWeights weights;
  double lambda_gp = 10.0;
  /// Learning rates decay linearly to 0 from this fraction of training on.
  double decay_start_fraction = 0.5;
  int threshold_grid_points = 256;
  /// Cap on validation cloudy patches used for model selection (0 = all).
  int max_val_patches = 0;
};

void validate(const GanTrainConfig& config);
nlohmann::json to_json(const GanTrainConfig& config);

/// Linear decay from decay_start_fraction * total to 0 at `total`.
double scheduled_lr(double base, std::int64_t iteration, std::int64_t total, double decay_start_fraction);

struct LossRecord {
  std::int64_t iteration = 0;
  double adv = 0.0;
  double cls_r = 0.0;
  double cls_f = 0.0;
  double cyc = 0.0;
  double id = 0.0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  bool operator==(const LossRecord&) const = default;
};

/// CSV with columns iteration, adv, cls_r, cls_f, cyc, id, L_D, L_G.
std::string loss_trace_csv(const std::vector<LossRecord>& records);

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::int64_t iteration, std::string component);
  std::int64_t iteration() const { return iteration_; }
  const std::string& component() const { return component_; }

 private:
  std::int64_t iteration_;
  std::string component_;
};

using DiscriminatorFn = std::function<DiscriminatorOutput(const torch::Tensor& images)>;

struct GeneratorTerms {
  torch::Tensor adv;
  torch::Tensor cls_fake;
  torch::Tensor cycle;
  torch::Tensor identity;
  torch::Tensor total;
};

/// Generator objective on one batch. `c_x` are the source labels and
/// `c_y` the sampled targets, both [B] with 0/1 values.
GeneratorTerms generator_terms(const GeneratorFn& g, const DiscriminatorFn& d, const torch::Tensor& x,
                               const torch::Tensor& c_x, const torch::Tensor& c_y, const GanTrainConfig& config);

struct DiscriminatorTerms {
  torch::Tensor adv;
  torch::Tensor cls_real;
  torch::Tensor penalty;
  torch::Tensor total;
};

/// Discriminator objective on real images and detached translations.
/// `gp_mix` holds per-item interpolation weights (gradient-penalty variant only).
DiscriminatorTerms discriminator_terms(const DiscriminatorFn& d, const torch::Tensor& x, const torch::Tensor& c_x,
                                       const torch::Tensor& fake_same, const torch::Tensor& fake_cross,
                                       const GanTrainConfig& config, const torch::Tensor& gp_mix = {});

struct GanBatch {
  torch::Tensor images;  // [B, C, P, P]
  torch::Tensor labels;  // [B] source domain
};

/// Owns the optimizers; the only writer of the generator and discriminator parameters.
class GanTrainer {
 public:
  GanTrainer(Generator generator, Discriminator discriminator, const GanTrainConfig& config);

  /// d_steps_per_g_step discriminator updates, then one generator update.
  /// Targets c_y are drawn uniformly from {0, 1} per item.
  LossRecord train_step(const GanBatch& batch);
  LossRecord train_step(const GanBatch& batch, const torch::Tensor& targets);

  /// Sets the learning rates for the given (0-based) iteration.
  void set_iteration(std::int64_t iteration);

  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }

 private:
  Generator generator_;
  Discriminator discriminator_;
  GanTrainConfig config_;
  torch::optim::Adam opt_g_;
  torch::optim::Adam opt_d_;
  Rng rng_;
  std::int64_t iteration_ = 0;
};

/// Draws batches with equal shares of clear and cloudy patches when both
/// classes are present; each class is walked in reshuffled epochs.
class BalancedSampler {
 public:
  BalancedSampler(const PatchRefs& patches, std::uint64_t seed);
  PatchRefs next(int batch_size);

 private:
  const Patch* draw(std::vector<const Patch*>& pool, std::size_t& cursor);

  std::vector<const Patch*> clear_;
  std::vector<const Patch*> cloudy_;
  std::size_t clear_cursor_ = 0;
  std::size_t cloudy_cursor_ = 0;
  Rng rng_;
};

struct FcdArchitecture {
  GeneratorOptions generator;
  DiscriminatorOptions discriminator;
};

struct EvalRecord {
  std::int64_t iteration = 0;
  double val_f1 = 0.0;
  float threshold = 0.0f;
  bool operator==(const EvalRecord&) const = default;
};

struct FcdTrainResult {
  Generator generator{nullptr};
  Checkpoint best;
  std::int64_t best_iteration = 0;
  double best_val_f1 = 0.0;
  float best_threshold = 0.0f;
  std::vector<LossRecord> losses;
  std::vector<EvalRecord> evaluations;
};

/// Deterministic subset of cloudy validation patches used for selection.
PatchRefs selection_patches(const PatchRefs& val_patches, int max_patches);

/// Full adversarial training loop with validation pseudo-mask F1 model
/// selection every checkpoint_every iterations and at the last iteration.
/// The best checkpoint is written to `checkpoint_file` whenever it changes.
FcdTrainResult train_fcd(const PatchRefs& train_patches, const PatchRefs& val_patches, const GanTrainConfig& config,
                         const FcdArchitecture& architecture, const std::filesystem::path& checkpoint_file = {},
                         const std::function<void(const LossRecord&)>& progress = {});

}  // namespace fcd
