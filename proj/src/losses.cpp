#include "fcd/losses.hpp"

#include <cmath>

#include "fcd/raster.hpp"

namespace fcd {

namespace {

torch::Tensor safe_log(const torch::Tensor& p) { return torch::log(p + kLogEpsilon); }
double safe_log(double p) { return std::log(p + kLogEpsilon); }

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) throw Error(std::string(what) + ": shape mismatch");
}

torch::Tensor mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

}  // namespace

void validate(const LossWeights& w) {
  if (!(w.lambda_cls >= 0.0) || !(w.lambda_cyc >= 0.0) || !(w.lambda_id >= 0.0))
    throw Error("loss weights must be non-negative");
}

torch::Tensor adversarial_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake_same,
                               const torch::Tensor& d_fake_cross) {
  return safe_log(d_real).mean() + safe_log(1.0 - d_fake_same).mean() + safe_log(1.0 - d_fake_cross).mean();
}

double adversarial_loss(double d_real, double d_fake_same, double d_fake_cross) {
  return safe_log(d_real) + safe_log(1.0 - d_fake_same) + safe_log(1.0 - d_fake_cross);
}

torch::Tensor label_probability(const torch::Tensor& p_cloudy, const torch::Tensor& labels) {
  require_same_shape(p_cloudy, labels, "label_probability");
  const auto l = labels.to(p_cloudy.dtype());
  return l * p_cloudy + (1.0 - l) * (1.0 - p_cloudy);
}

torch::Tensor domain_cls_loss_real(const torch::Tensor& p_source_label) { return -safe_log(p_source_label).mean(); }

double domain_cls_loss_real(double p_source_label) { return -safe_log(p_source_label); }

torch::Tensor domain_cls_loss_fake(const torch::Tensor& p_target_cross, const torch::Tensor& p_source_same) {
  return -safe_log(p_target_cross).mean() - safe_log(p_source_same).mean();
}

double domain_cls_loss_fake(double p_target_cross, double p_source_same) {
  return -safe_log(p_target_cross) - safe_log(p_source_same);
}

torch::Tensor cycle_consistency_loss(const torch::Tensor& x, const torch::Tensor& recon_cross,
                                     const torch::Tensor& recon_same) {
  require_same_shape(x, recon_cross, "cycle_consistency_loss");
  require_same_shape(x, recon_same, "cycle_consistency_loss");
  return mean_abs_diff(x, recon_cross) + mean_abs_diff(x, recon_same);
}

torch::Tensor conditional_identity_loss(const torch::Tensor& x, const torch::Tensor& same_translation) {
  require_same_shape(x, same_translation, "conditional_identity_loss");
  return mean_abs_diff(x, same_translation);
}

torch::Tensor discriminator_objective(const torch::Tensor& adversarial, const torch::Tensor& cls_real,
                                      double lambda_cls) {
  return -adversarial + lambda_cls * cls_real;
}

double discriminator_objective(double adversarial, double cls_real, double lambda_cls) {
  return -adversarial + lambda_cls * cls_real;
}

torch::Tensor generator_objective(const torch::Tensor& adv_term, const torch::Tensor& cls_fake,
                                  const torch::Tensor& cycle, const torch::Tensor& identity, const LossWeights& w) {
  return adv_term + w.lambda_cls * cls_fake + w.lambda_cyc * cycle + w.lambda_id * identity;
}

double generator_objective(double adv_term, double cls_fake, double cycle, double identity, const LossWeights& w) {
  return adv_term + w.lambda_cls * cls_fake + w.lambda_cyc * cycle + w.lambda_id * identity;
}

torch::Tensor generator_adversarial_saturating(const torch::Tensor& d_fake_same, const torch::Tensor& d_fake_cross) {
  return safe_log(1.0 - d_fake_same).mean() + safe_log(1.0 - d_fake_cross).mean();
}

torch::Tensor generator_adversarial_non_saturating(const torch::Tensor& d_fake_same,
                                                   const torch::Tensor& d_fake_cross) {
  return -safe_log(d_fake_same).mean() - safe_log(d_fake_cross).mean();
}

torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                               const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& mix) {
  require_same_shape(real, fake, "gradient_penalty");
  const auto a = mix.view({-1, 1, 1, 1}).to(real.dtype());
  auto interp = (a * real.detach() + (1.0 - a) * fake.detach()).requires_grad_(true);
  auto scores = critic(interp);
  auto grads = torch::autograd::grad({scores.sum()}, {interp}, {}, /*retain_graph=*/true, /*create_graph=*/true)[0];
  auto norms = grads.flatten(1).norm(2, 1);
  return (norms - 1.0).pow(2).mean();
}

}  // namespace fcd
