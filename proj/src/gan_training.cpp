#include "fcd/gan_training.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace fcd {

using nlohmann::json;

void validate(const GanTrainConfig& c) {
  if (c.iterations < 1) throw Error("gan: iterations must be positive");
  if (c.batch_size < 1) throw Error("gan: batch_size must be positive");
  if (!(c.lr_g >= 0.0) || !(c.lr_d >= 0.0)) throw Error("gan: learning rates must be non-negative");
  if (c.d_steps_per_g_step < 1) throw Error("gan: d_steps_per_g_step must be positive");
  if (c.checkpoint_every < 1) throw Error("gan: checkpoint_every must be positive");
  if (!(c.decay_start_fraction >= 0.0 && c.decay_start_fraction <= 1.0))
    throw Error("gan: decay_start_fraction must lie in [0, 1]");
  if (c.threshold_grid_points < 1) throw Error("gan: threshold_grid_points must be positive");
  if (c.max_val_patches < 0) throw Error("gan: max_val_patches must be >= 0");
  validate(c.weights);
}

json to_json(const GanTrainConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"lr_g", c.lr_g},
          {"lr_d", c.lr_d},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"d_steps_per_g_step", c.d_steps_per_g_step},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"adversarial_variant",
           c.adversarial_variant == AdversarialVariant::Logistic ? "logistic" : "gradient-penalty"},
          {"generator_form",
           c.generator_form == GeneratorAdversarialForm::NonSaturating ? "non-saturating" : "saturating"},
          {"lambda_cls", c.weights.lambda_cls},
          {"lambda_cyc", c.weights.lambda_cyc},
          {"lambda_id", c.weights.lambda_id},
          {"lambda_gp", c.lambda_gp},
          {"decay_start_fraction", c.decay_start_fraction},
          {"threshold_grid_points", c.threshold_grid_points},
          {"max_val_patches", c.max_val_patches}};
}

double scheduled_lr(double base, std::int64_t iteration, std::int64_t total, double decay_start_fraction) {
  const auto start = static_cast<std::int64_t>(std::llround(decay_start_fraction * static_cast<double>(total)));
  if (iteration < start || total <= start) return base;
  return base * static_cast<double>(total - iteration) / static_cast<double>(total - start);
}

std::string loss_trace_csv(const std::vector<LossRecord>& records) {
  std::ostringstream out;
  out << "iteration,adv,cls_r,cls_f,cyc,id,L_D,L_G\n";
  char line[512];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.iteration),
                  r.adv, r.cls_r, r.cls_f, r.cyc, r.id, r.loss_d, r.loss_g);
    out << line;
  }
  return out.str();
}

NonFiniteLoss::NonFiniteLoss(std::int64_t iteration, std::string component)
    : Error("non-finite loss component '" + component + "' at iteration " + std::to_string(iteration)),
      iteration_(iteration),
      component_(std::move(component)) {}

namespace {

// Per-item realness probability: mean of the sigmoid score map.
torch::Tensor realness(const torch::Tensor& adv_logits) { return torch::sigmoid(adv_logits).mean({1, 2, 3}); }

}  // namespace

GeneratorTerms generator_terms(const GeneratorFn& g, const DiscriminatorFn& d, const torch::Tensor& x,
                               const torch::Tensor& c_x, const torch::Tensor& c_y, const GanTrainConfig& config) {
  const auto fake_cross = g(x, c_y);
  const auto fake_same = g(x, c_x);
  const auto recon_cross = g(fake_cross, c_x);
  const auto recon_same = g(fake_same, c_x);
  const auto out_cross = d(fake_cross);
  const auto out_same = d(fake_same);

  GeneratorTerms t;
  if (config.adversarial_variant == AdversarialVariant::Logistic) {
    const auto d_same = realness(out_same.adv);
    const auto d_cross = realness(out_cross.adv);
    t.adv = config.generator_form == GeneratorAdversarialForm::NonSaturating
                ? generator_adversarial_non_saturating(d_same, d_cross)
                : generator_adversarial_saturating(d_same, d_cross);
  } else {
    t.adv = -(out_same.adv.mean() + out_cross.adv.mean());
  }
  t.cls_fake = domain_cls_loss_fake(label_probability(torch::sigmoid(out_cross.cls), c_y),
                                    label_probability(torch::sigmoid(out_same.cls), c_x));
  t.cycle = cycle_consistency_loss(x, recon_cross, recon_same);
  t.identity = conditional_identity_loss(x, fake_same);
  t.total = generator_objective(t.adv, t.cls_fake, t.cycle, t.identity, config.weights);
  return t;
}

DiscriminatorTerms discriminator_terms(const DiscriminatorFn& d, const torch::Tensor& x, const torch::Tensor& c_x,
                                       const torch::Tensor& fake_same, const torch::Tensor& fake_cross,
                                       const GanTrainConfig& config, const torch::Tensor& gp_mix) {
  const auto out_real = d(x);
  const auto out_same = d(fake_same.detach());
  const auto out_cross = d(fake_cross.detach());

  DiscriminatorTerms t;
  t.cls_real = domain_cls_loss_real(label_probability(torch::sigmoid(out_real.cls), c_x));
  if (config.adversarial_variant == AdversarialVariant::Logistic) {
    t.adv = adversarial_loss(realness(out_real.adv), realness(out_same.adv), realness(out_cross.adv));
    t.penalty = torch::zeros({}, x.options());
    t.total = discriminator_objective(t.adv, t.cls_real, config.weights.lambda_cls);
  } else {
    t.adv = out_real.adv.mean() - 0.5 * (out_same.adv.mean() + out_cross.adv.mean());
    const auto mix = gp_mix.defined() ? gp_mix : torch::rand({x.size(0)}, x.options());
    t.penalty = gradient_penalty([&d](const torch::Tensor& im) { return d(im).adv; }, x, fake_cross, mix);
    t.total = discriminator_objective(t.adv, t.cls_real, config.weights.lambda_cls) + config.lambda_gp * t.penalty;
  }
  return t;
}

GanTrainer::GanTrainer(Generator generator, Discriminator discriminator, const GanTrainConfig& config)
    : generator_(std::move(generator)),
      discriminator_(std::move(discriminator)),
      config_(config),
      opt_g_(generator_->parameters(),
             torch::optim::AdamOptions(config.lr_g).betas({config.beta1, config.beta2})),
      opt_d_(discriminator_->parameters(),
             torch::optim::AdamOptions(config.lr_d).betas({config.beta1, config.beta2})),
      rng_(derive_seed(config.seed, "gan/targets")) {
  validate(config_);
}

void GanTrainer::set_iteration(std::int64_t iteration) {
  iteration_ = iteration;
  const auto set_lr = [&](torch::optim::Adam& opt, double base) {
    const double lr = scheduled_lr(base, iteration, config_.iterations, config_.decay_start_fraction);
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  };
  set_lr(opt_g_, config_.lr_g);
  set_lr(opt_d_, config_.lr_d);
}

LossRecord GanTrainer::train_step(const GanBatch& batch) {
  auto targets = torch::empty({batch.images.size(0)}, torch::kFloat32);
  auto acc = targets.accessor<float, 1>();
  for (long i = 0; i < targets.size(0); ++i) acc[i] = static_cast<float>(rng_.below(2));
  return train_step(batch, targets);
}

LossRecord GanTrainer::train_step(const GanBatch& batch, const torch::Tensor& targets) {
  if (!batch.images.defined() || batch.images.size(0) == 0) throw Error("train_step: empty batch");
  const auto& x = batch.images;
  const auto& c_x = batch.labels;
  const auto check = [&](const torch::Tensor& t, const char* name) {
    const double v = t.item<double>();
    if (!std::isfinite(v)) throw NonFiniteLoss(iteration_ + 1, name);
    return v;
  };
  generator_->train();
  discriminator_->train();

  torch::Tensor fake_same, fake_cross;
  {
    torch::NoGradGuard no_grad;
    fake_cross = generator_->forward(x, targets);
    fake_same = generator_->forward(x, c_x);
  }
  const DiscriminatorFn d = [this](const torch::Tensor& im) { return discriminator_->forward(im); };
  const GeneratorFn g = [this](const torch::Tensor& im, const torch::Tensor& l) { return generator_->forward(im, l); };

  LossRecord rec;
  rec.iteration = iteration_ + 1;
  for (int s = 0; s < config_.d_steps_per_g_step; ++s) {
    opt_d_.zero_grad();
    torch::Tensor mix;
    if (config_.adversarial_variant == AdversarialVariant::GradientPenalty) {
      mix = torch::empty({x.size(0)}, torch::kFloat32);
      auto m = mix.accessor<float, 1>();
      for (long i = 0; i < mix.size(0); ++i) m[i] = static_cast<float>(rng_.uniform());
    }
    auto terms = discriminator_terms(d, x, c_x, fake_same, fake_cross, config_, mix);
    rec.loss_d = check(terms.total, "L_D");
    rec.adv = check(terms.adv, "adv");
    rec.cls_r = check(terms.cls_real, "cls_r");
    terms.total.backward();
    opt_d_.step();
  }

  for (auto& p : discriminator_->parameters()) p.set_requires_grad(false);
  opt_g_.zero_grad();
  auto gt = generator_terms(g, d, x, c_x, targets, config_);
  try {
    rec.cls_f = check(gt.cls_fake, "cls_f");
    rec.cyc = check(gt.cycle, "cyc");
    rec.id = check(gt.identity, "id");
    rec.loss_g = check(gt.total, "L_G");
  } catch (...) {
    for (auto& p : discriminator_->parameters()) p.set_requires_grad(true);
    throw;
  }
  gt.total.backward();
  opt_g_.step();
  for (auto& p : discriminator_->parameters()) p.set_requires_grad(true);
  return rec;
}

BalancedSampler::BalancedSampler(const PatchRefs& patches, std::uint64_t seed) : rng_(seed) {
  for (const Patch* p : patches) (p->image_label == DomainLabel::Cloudy ? cloudy_ : clear_).push_back(p);
  if (clear_.empty() && cloudy_.empty()) throw Error("sampler: no training patches");
  rng_.shuffle(std::span<const Patch*>(clear_));
  rng_.shuffle(std::span<const Patch*>(cloudy_));
}

const Patch* BalancedSampler::draw(std::vector<const Patch*>& pool, std::size_t& cursor) {
  if (cursor == pool.size()) {
    rng_.shuffle(std::span<const Patch*>(pool));
    cursor = 0;
  }
  return pool[cursor++];
}

PatchRefs BalancedSampler::next(int batch_size) {
  PatchRefs out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const bool want_cloudy = (i % 2 == 1 && !cloudy_.empty()) || clear_.empty();
    out.push_back(want_cloudy ? draw(cloudy_, cloudy_cursor_) : draw(clear_, clear_cursor_));
  }
  return out;
}

PatchRefs selection_patches(const PatchRefs& val_patches, int max_patches) {
  PatchRefs cloudy;
  for (const Patch* p : val_patches)
    if (p->image_label == DomainLabel::Cloudy) cloudy.push_back(p);
  if (max_patches <= 0 || cloudy.size() <= static_cast<std::size_t>(max_patches)) return cloudy;
  PatchRefs out;
  const double step = static_cast<double>(cloudy.size()) / max_patches;
  for (int i = 0; i < max_patches; ++i) out.push_back(cloudy[static_cast<std::size_t>(i * step)]);
  return out;
}

FcdTrainResult train_fcd(const PatchRefs& train_patches, const PatchRefs& val_patches, const GanTrainConfig& config,
                         const FcdArchitecture& architecture, const std::filesystem::path& checkpoint_file,
                         const std::function<void(const LossRecord&)>& progress) {
  validate(config);
  const PatchRefs selection = selection_patches(val_patches, config.max_val_patches);
  if (selection.empty()) throw Error("train_fcd: no cloudy validation patches for model selection");

  torch::manual_seed(derive_seed(config.seed, "gan/init"));
  Generator generator(architecture.generator);
  Discriminator discriminator(architecture.discriminator);
  GanTrainer trainer(generator, discriminator, config);
  BalancedSampler sampler(train_patches, derive_seed(config.seed, "gan/batches"));

  FcdTrainResult result;
  bool have_best = false;
  const json echo = {{"architecture", to_json(architecture.generator)},
                     {"discriminator", to_json(architecture.discriminator)},
                     {"training", to_json(config)}};

  for (std::int64_t it = 0; it < config.iterations; ++it) {
    trainer.set_iteration(it);
    const PatchRefs batch = sampler.next(config.batch_size);
    const LossRecord rec = trainer.train_step({stack_images(batch), stack_labels(batch)});
    result.losses.push_back(rec);
    if (progress) progress(rec);

    const std::int64_t done = it + 1;
    if (done % config.checkpoint_every != 0 && done != config.iterations) continue;
    const auto sel = select_threshold(inference(generator), selection, {}, config.threshold_grid_points);
    result.evaluations.push_back({done, sel.f1, sel.threshold});
    if (!have_best || sel.f1 > result.best_val_f1) {
      have_best = true;
      result.best_val_f1 = sel.f1;
      result.best_iteration = done;
      result.best_threshold = sel.threshold;
      result.best.kind = "generator";
      result.best.config = echo;
      result.best.iteration = done;
      result.best.val_f1 = sel.f1;
      result.best.extra = {{"threshold", sel.threshold}};
      result.best.tensors = snapshot_state(*generator);
      if (!checkpoint_file.empty()) save_checkpoint(result.best, checkpoint_file);
    }
  }
  result.generator = load_generator(result.best);
  return result;
}

}  // namespace fcd
