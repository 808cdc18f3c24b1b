#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "fcd/gan_training.hpp"
#include "support.hpp"

namespace fcd {
namespace {

FcdArchitecture tiny_architecture(int channels = 3, int patch = 16) {
  FcdArchitecture a;
  a.generator = {channels, 8, 1, 1};
  a.discriminator = {channels, patch, 8, 2};
  return a;
}

GanTrainConfig tiny_config(std::int64_t iterations) {
  GanTrainConfig c;
  c.iterations = iterations;
  c.batch_size = 4;
  c.d_steps_per_g_step = 2;
  c.checkpoint_every = iterations;
  c.seed = 21;
  return c;
}

TEST(Generator, OutputShapeMatchesInputAndStaysInRange) {
  torch::manual_seed(0);
  Generator g(GeneratorOptions{3, 8, 2, 1});
  auto x = torch::rand({2, 3, 16, 16}) * 6 - 3;
  auto y = g->forward(x, torch::tensor({0.0f, 1.0f}));
  EXPECT_EQ(y.sizes(), x.sizes());
  EXPECT_LE(y.abs().max().item<float>(), 1.0f);
}

TEST(Generator, ConditionIsAConstantChannel) {
  auto x = torch::zeros({2, 3, 4, 4});
  auto out = append_condition(x, torch::tensor({1.0f, 0.0f}));
  ASSERT_EQ(out.size(1), 4);
  EXPECT_TRUE(torch::all(out[0][3] == 1.0f).item<bool>());
  EXPECT_TRUE(torch::all(out[1][3] == 0.0f).item<bool>());
  EXPECT_THROW(append_condition(x, torch::tensor({1.0f})), Error);
}

TEST(Discriminator, RejectsWrongInputShape) {
  Discriminator d(DiscriminatorOptions{3, 16, 8, 2});
  EXPECT_THROW(d->forward(torch::zeros({1, 3, 8, 8})), Error);
  EXPECT_THROW(Discriminator(DiscriminatorOptions{3, 12, 8, 3}), Error);
}

TEST(GeneratorTerms, IdentityGeneratorHasZeroCycleAndIdentityLoss) {
  torch::manual_seed(1);
  Discriminator d(DiscriminatorOptions{3, 16, 8, 2});
  DiscriminatorFn dfn = [&](const torch::Tensor& im) { return d->forward(im); };
  auto x = torch::rand({4, 3, 16, 16}) * 2 - 1;
  auto t = generator_terms(identity_generator(), dfn, x, torch::tensor({0.f, 1.f, 0.f, 1.f}),
                           torch::tensor({1.f, 1.f, 0.f, 0.f}), GanTrainConfig{});
  EXPECT_EQ(t.cycle.item<double>(), 0.0);
  EXPECT_EQ(t.identity.item<double>(), 0.0);
}

TEST(GanTrainer, ZeroLearningRateLeavesParametersUnchanged) {
  torch::manual_seed(2);
  auto arch = tiny_architecture();
  Generator g(arch.generator);
  Discriminator d(arch.discriminator);
  const auto g_before = tensor_checksum(g->parameters());
  const auto d_before = tensor_checksum(d->parameters());
  auto config = tiny_config(1);
  config.lr_g = config.lr_d = 0.0;
  GanTrainer trainer(g, d, config);
  trainer.train_step({torch::rand({4, 3, 16, 16}) * 2 - 1, torch::tensor({0.f, 1.f, 0.f, 1.f})});
  EXPECT_EQ(tensor_checksum(g->parameters()), g_before);
  EXPECT_EQ(tensor_checksum(d->parameters()), d_before);
}

TEST(GanTrainer, StepUpdatesParametersAndRestoresDiscriminatorGrad) {
  torch::manual_seed(3);
  auto arch = tiny_architecture();
  Generator g(arch.generator);
  Discriminator d(arch.discriminator);
  const auto g_before = tensor_checksum(g->parameters());
  GanTrainer trainer(g, d, tiny_config(1));
  const auto rec = trainer.train_step({torch::rand({4, 3, 16, 16}) * 2 - 1, torch::tensor({0.f, 1.f, 0.f, 1.f})});
  EXPECT_NE(tensor_checksum(g->parameters()), g_before);
  for (const auto& p : d->parameters()) EXPECT_TRUE(p.requires_grad());
  EXPECT_TRUE(std::isfinite(rec.loss_g));
  EXPECT_TRUE(std::isfinite(rec.loss_d));
}

TEST(GanTrainer, NonFiniteInputIsReportedByComponent) {
  torch::manual_seed(4);
  auto arch = tiny_architecture();
  GanTrainer trainer(Generator(arch.generator), Discriminator(arch.discriminator), tiny_config(1));
  auto x = torch::full({2, 3, 16, 16}, std::numeric_limits<float>::quiet_NaN());
  try {
    trainer.train_step({x, torch::tensor({0.f, 1.f})});
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_FALSE(e.component().empty());
    EXPECT_NE(std::string(e.what()).find(e.component()), std::string::npos);
  }
}

TEST(LossTrace, ColumnsAreExactlyTheLossComponents) {
  LossRecord r{3, 0.5, 0.25, 0.125, 1.0, 2.0, -0.5, 4.0};
  std::istringstream in(loss_trace_csv({r}));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "iteration,adv,cls_r,cls_f,cyc,id,L_D,L_G");
  EXPECT_EQ(row, "3,0.5,0.25,0.125,1,2,-0.5,4");
}

TEST(Schedule, LinearDecayAfterTheStartFraction) {
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-4, 0, 100, 0.5), 1e-4);
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-4, 50, 100, 0.5), 1e-4);
  EXPECT_NEAR(scheduled_lr(1e-4, 75, 100, 0.5), 0.5e-4, 1e-12);
  EXPECT_NEAR(scheduled_lr(1e-4, 100, 100, 0.5), 0.0, 1e-12);
}

TEST(Config, InvalidValuesAreRejected) {
  auto c = tiny_config(10);
  c.d_steps_per_g_step = 0;
  EXPECT_THROW(validate(c), Error);
  c = tiny_config(10);
  c.weights.lambda_cyc = -1;
  EXPECT_THROW(validate(c), Error);
}

TEST(Sampler, AlternatesClassesWhenBothArePresent) {
  auto patches = testing::synthetic_patches(3, 64, 16, 5);
  BalancedSampler s(refs(patches), 1);
  for (int k = 0; k < 3; ++k) {
    const auto batch = s.next(8);
    for (std::size_t i = 0; i < batch.size(); ++i)
      EXPECT_EQ(batch[i]->image_label, i % 2 ? DomainLabel::Cloudy : DomainLabel::Clear);
  }
}

TEST(TrainFcd, SingleEvaluationWhenCheckpointEveryEqualsIterations) {
  const auto train = testing::synthetic_patches(3, 32, 16, 8);
  const auto val = testing::synthetic_patches(2, 32, 16, 8, 3);
  const auto result = train_fcd(refs(train), refs(val), tiny_config(3), tiny_architecture());
  EXPECT_EQ(result.evaluations.size(), 1u);
  EXPECT_EQ(result.evaluations[0].iteration, 3);
  EXPECT_EQ(result.losses.size(), 3u);
  EXPECT_EQ(result.best.kind, "generator");
}

TEST(TrainFcd, SameSeedGivesIdenticalRun) {
  const auto train = testing::synthetic_patches(3, 32, 16, 8);
  const auto val = testing::synthetic_patches(2, 32, 16, 8, 3);
  auto config = tiny_config(4);
  config.checkpoint_every = 2;
  const auto a = train_fcd(refs(train), refs(val), config, tiny_architecture());
  const auto b = train_fcd(refs(train), refs(val), config, tiny_architecture());
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.evaluations, b.evaluations);
  EXPECT_EQ(a.best_iteration, b.best_iteration);
  EXPECT_EQ(checkpoint_id(a.best), checkpoint_id(b.best));
}

TEST(TrainFcd, BestCheckpointHasTheMaximumValidationF1) {
  const auto train = testing::synthetic_patches(3, 32, 16, 8);
  const auto val = testing::synthetic_patches(2, 32, 16, 8, 3);
  auto config = tiny_config(6);
  config.checkpoint_every = 2;
  const auto r = train_fcd(refs(train), refs(val), config, tiny_architecture());
  ASSERT_EQ(r.evaluations.size(), 3u);
  double best = -1;
  for (const auto& e : r.evaluations) best = std::max(best, e.val_f1);
  EXPECT_EQ(r.best_val_f1, best);
  ASSERT_TRUE(r.best.val_f1.has_value());
  EXPECT_EQ(*r.best.val_f1, best);
}

}  // namespace
}  // namespace fcd
