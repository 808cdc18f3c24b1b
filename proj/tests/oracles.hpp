#pragma once

// Reference computations shared by the unit tests and the acceptance runner.
// They use nothing from the library beyond its data types and the function
// under test, so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "fcd/gan_training.hpp"
#include "fcd/metrics.hpp"

namespace fcd::oracle {

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts enumerate(const Mask& pred, const Mask& truth, const Mask* valid = nullptr) {
  Counts c;
  for (int r = 0; r < pred.height; ++r)
    for (int col = 0; col < pred.width; ++col) {
      if (valid && !valid->at(r, col)) continue;
      const bool p = pred.at(r, col) != 0, t = truth.at(r, col) != 0;
      if (p && t) ++c.tp;
      else if (p) ++c.fp;
      else if (t) ++c.fn;
      else ++c.tn;
    }
  return c;
}

inline bool same(const Counts& a, const Confusion& b) { return a.tp == b.tp && a.fp == b.fp && a.fn == b.fn && a.tn == b.tn; }

struct SweepBest {
  std::size_t index = 0;
  Counts counts;
};

// Recounts every pixel at every grid point and keeps the first strictly
// better F1, compared exactly by integer cross-multiplication.
inline SweepBest threshold_sweep(const std::vector<ScoreMap>& maps, const std::vector<Mask>& truths,
                                 const std::vector<float>& grid) {
  SweepBest best;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    Counts c;
    for (std::size_t m = 0; m < maps.size(); ++m)
      for (std::size_t i = 0; i < maps[m].values.size(); ++i) {
        const bool p = maps[m].values[i] > grid[g];
        const bool t = truths[m].values[i] != 0;
        c.tp += p && t;
        c.fp += p && !t;
        c.fn += !p && t;
        c.tn += !p && !t;
      }
    const auto num = 2 * c.tp, den = 2 * c.tp + c.fp + c.fn;
    const auto bnum = 2 * best.counts.tp, bden = 2 * best.counts.tp + best.counts.fp + best.counts.fn;
    const bool better = g == 0 || (den > 0 && (bden == 0 ? num > 0 : num * bden > bnum * den));
    if (better) best = {g, c};
  }
  return best;
}

// 3x3 conditional convolution: 2 bands plus the condition in, 2 bands out (56 parameters).
struct ToyGenerator : torch::nn::Module {
  ToyGenerator() {
    weight = register_parameter("weight", torch::randn({2, 3, 3, 3}, torch::kFloat64) * 0.4);
    bias = register_parameter("bias", torch::randn({2}, torch::kFloat64) * 0.1);
  }
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& c) {
    return torch::tanh(torch::conv2d(append_condition(x, c), weight, bias, 1, 1));
  }
  torch::Tensor weight, bias;
};

struct GradientCheck {
  double relative_error = 0.0;
  std::int64_t parameters = 0;
};

// Central differences of the full generator objective on 4x4x2 double inputs
// against autograd; error is ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline GradientCheck generator_gradient_check(const GanTrainConfig& config, std::uint64_t seed = 4) {
  torch::manual_seed(seed);
  auto gen = std::make_shared<ToyGenerator>();
  auto adv_w = torch::randn({1, 2, 3, 3}, torch::kFloat64) * 0.5;
  auto cls_w = torch::randn({1, 2, 4, 4}, torch::kFloat64) * 0.5;
  DiscriminatorFn d = [&](const torch::Tensor& im) {
    return DiscriminatorOutput{torch::conv2d(im, adv_w, {}, 1, 1), (im * cls_w).sum({1, 2, 3})};
  };
  GeneratorFn g = [&](const torch::Tensor& x, const torch::Tensor& c) { return gen->forward(x, c); };
  auto x = torch::rand({2, 2, 4, 4}, torch::kFloat64) * 2 - 1;
  auto c_x = torch::tensor({0.0, 1.0}, torch::kFloat64);
  auto c_y = torch::tensor({1.0, 1.0}, torch::kFloat64);

  generator_terms(g, d, x, c_x, c_y, config).total.backward();
  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  const double h = 1e-6;
  torch::NoGradGuard no_grad;
  for (auto& p : gen->parameters()) {
    auto flat = p.view({-1});
    auto grad = p.grad().view({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = generator_terms(g, d, x, c_x, c_y, config).total.item<double>();
      flat[i] = orig - h;
      const double down = generator_terms(g, d, x, c_x, c_y, config).total.item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grad[i].item<double>();
      diff += (numeric - analytic) * (numeric - analytic);
      norm_a += analytic * analytic;
      norm_n += numeric * numeric;
    }
  }
  return {std::sqrt(diff / std::max(norm_a, norm_n)), count_parameters(*gen)};
}

}  // namespace fcd::oracle
