#pragma once

#include <torch/torch.h>

namespace fcd {

/// Added inside every logarithm so saturated scores stay finite.
inline constexpr double kLogEpsilon = 1e-8;

struct LossWeights {
  double lambda_cls = 1.0;
  double lambda_cyc = 10.0;
  double lambda_id = 10.0;
};

void validate(const LossWeights& weights);

// All losses reduce by the mean, so they are invariant to batch order.
// Score arguments are probabilities in (0, 1).

/// E[log D(x)] + E[log(1 - D(G(x, c_x)))] + E[log(1 - D(G(x, c_y)))].
/// The discriminator maximizes this value.
torch::Tensor adversarial_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake_same,
                               const torch::Tensor& d_fake_cross);
double adversarial_loss(double d_real, double d_fake_same, double d_fake_cross);

/// Probability of `labels` (0/1 per item) given the cloudy-domain probability.
torch::Tensor label_probability(const torch::Tensor& p_cloudy, const torch::Tensor& labels);

/// E[-log D_cls(c_x | x)] on real images.
torch::Tensor domain_cls_loss_real(const torch::Tensor& p_source_label);
double domain_cls_loss_real(double p_source_label);

/// E[-log D_cls(c_y | G(x, c_y))] + E[-log D_cls(c_x | G(x, c_x))].
torch::Tensor domain_cls_loss_fake(const torch::Tensor& p_target_cross, const torch::Tensor& p_source_same);
double domain_cls_loss_fake(double p_target_cross, double p_source_same);

/// Mean L1 of x - G(G(x, c_y), c_x) plus mean L1 of x - G(G(x, c_x), c_x).
torch::Tensor cycle_consistency_loss(const torch::Tensor& x, const torch::Tensor& recon_cross,
                                     const torch::Tensor& recon_same);

/// Mean L1 of x - G(x, c_x).
torch::Tensor conditional_identity_loss(const torch::Tensor& x, const torch::Tensor& same_translation);

/// -L_adv + lambda_cls * L_cls^r.
torch::Tensor discriminator_objective(const torch::Tensor& adversarial, const torch::Tensor& cls_real,
                                      double lambda_cls);
double discriminator_objective(double adversarial, double cls_real, double lambda_cls);

/// adv_term + lambda_cls * L_cls^f + lambda_cyc * L_cyc + lambda_id * L_id.
torch::Tensor generator_objective(const torch::Tensor& adv_term, const torch::Tensor& cls_fake,
                                  const torch::Tensor& cycle, const torch::Tensor& identity, const LossWeights& w);
double generator_objective(double adv_term, double cls_fake, double cycle, double identity, const LossWeights& w);

/// Generator side of the adversarial loss: log(1 - D(fake_same)) + log(1 - D(fake_cross)) as written.
torch::Tensor generator_adversarial_saturating(const torch::Tensor& d_fake_same, const torch::Tensor& d_fake_cross);
/// Non-saturating surrogate: -log D(fake_same) - log D(fake_cross).
torch::Tensor generator_adversarial_non_saturating(const torch::Tensor& d_fake_same,
                                                   const torch::Tensor& d_fake_cross);

/// Squared deviation of the critic gradient norm from 1 on interpolates.
torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                               const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& mix);

}  // namespace fcd
