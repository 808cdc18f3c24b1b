#include <cmath>

#include <gtest/gtest.h>

#include "fcd/masks.hpp"
#include "fcd/refinement.hpp"
#include "support.hpp"

namespace fcd {
namespace {

std::map<std::string, Mask> real_targets(const std::vector<Patch>& patches) {
  std::map<std::string, Mask> out;
  for (const auto& p : patches) out[p.id()] = *p.pixel_mask;
  return out;
}

TEST(WithTargets, ReplacesMasksAndReportsMissingIds) {
  auto patches = testing::synthetic_patches(1, 32, 16, 2);
  std::map<std::string, Mask> targets;
  for (const auto& p : patches) targets[p.id()] = Mask(16, 16, 1);
  const auto out = with_targets(refs(patches), targets);
  for (const auto& p : out) EXPECT_EQ(count_ones(*p.pixel_mask), 256u);

  targets.erase(patches[1].id());
  targets.erase(patches[3].id());
  try {
    with_targets(refs(patches), targets);
    FAIL() << "expected a rejection";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(patches[1].id()), std::string::npos);
    EXPECT_NE(msg.find(patches[3].id()), std::string::npos);
  }
}

TEST(TrainFcdPlus, ZeroLearningRateLeavesParametersUnchanged) {
  auto train = testing::synthetic_patches(1, 32, 16, 2);
  RefineConfig config;
  config.epochs = 1;
  config.lr = 0.0;
  config.seed = 3;
  const SegNetOptions options{3, 4, 2};
  const auto result = train_fcdplus(refs(train), real_targets(train), refs(train), config, options);
  torch::manual_seed(derive_seed(3, "seg/init"));
  SegNet fresh(options);
  EXPECT_EQ(tensor_checksum(result.net->parameters()), tensor_checksum(fresh->parameters()));
}

TEST(TrainFcdPlus, PlateauDropsTheLearningRateByTen) {
  auto train = testing::synthetic_patches(1, 32, 16, 2);
  // a validation set without cloud keeps F1 at 0, so no epoch after the first improves
  std::vector<Patch> val = train;
  for (auto& p : val) {
    p.pixel_mask = Mask(16, 16);
    p.image_label = DomainLabel::Clear;
  }
  RefineConfig config;
  config.epochs = 8;
  config.batch_size = 4;
  const auto r = train_fcdplus(refs(train), real_targets(train), refs(val), config, SegNetOptions{3, 4, 2});
  ASSERT_EQ(r.history.size(), 8u);
  for (int e = 0; e < 4; ++e) EXPECT_DOUBLE_EQ(r.history[e].lr, 1e-4) << e;
  for (int e = 4; e < 7; ++e) EXPECT_NEAR(r.history[e].lr, 1e-5, 1e-18) << e;
  EXPECT_NEAR(r.history[7].lr, 1e-6, 1e-18);
  EXPECT_EQ(r.best_epoch, 1);
}

TEST(TrainFcdPlus, PerfectMasksGiveHighValidationF1AndBestIsTheMaximum) {
  auto train = testing::synthetic_patches(16, 128, 32, 31);
  auto val = testing::synthetic_patches(4, 128, 32, 31, 16);
  RefineConfig config;
  config.epochs = 10;
  config.batch_size = 8;
  config.lr = 1e-3;
  auto r = train_fcdplus(refs(train), real_targets(train), refs(val), config, SegNetOptions{3, 8, 3});
  EXPECT_GE(r.best_val_f1, 0.95);
  double best = 0;
  for (const auto& e : r.history) best = std::max(best, e.val_f1);
  EXPECT_EQ(r.best_val_f1, best);
  EXPECT_EQ(r.best_val_f1, segmentation_f1(r.net, refs(val)));

  const std::string csv = epoch_metrics_csv(r.history);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,aux_loss,val_f1,lr");
}

std::vector<Patch> numbered_patches(int n) {
  std::vector<Patch> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[i].scene_id = "s" + std::to_string(i % 7);
    out[i].origin = {i, 0};
    out[i].data = Image(1, 1, 1);
    out[i].image_label = i % 3 == 0 ? DomainLabel::Clear : DomainLabel::Cloudy;
    out[i].biome = i % 2 ? "forest" : "water";
  }
  return out;
}

TEST(LabeledFraction, CeilingCountsAndDeterminism) {
  auto patches = numbered_patches(1000);
  EXPECT_EQ(select_labeled_fraction(refs(patches), 0.01, 1).size(), 10u);
  EXPECT_EQ(select_labeled_fraction(refs(patches), 1.0, 1).size(), 1000u);
  EXPECT_EQ(select_labeled_fraction(refs(patches), 0.0105, 1).size(), 11u);
  EXPECT_EQ(select_labeled_fraction(refs(patches), 0.01, 5), select_labeled_fraction(refs(patches), 0.01, 5));
  EXPECT_NE(select_labeled_fraction(refs(patches), 0.01, 5), select_labeled_fraction(refs(patches), 0.01, 6));
}

TEST(LabeledFraction, StrataArePresentInProportion) {
  auto patches = numbered_patches(1200);
  const auto chosen = select_labeled_fraction(refs(patches), 0.05, 2);
  ASSERT_EQ(chosen.size(), 60u);
  std::map<std::pair<int, std::string>, int> counts;
  for (const Patch* p : chosen) ++counts[{to_int(p->image_label), *p->biome}];
  EXPECT_EQ(counts.size(), 4u);
  for (const auto& [key, n] : counts) EXPECT_EQ(n, key.first == 0 ? 10 : 20);
}

TEST(LabeledFraction, RejectsEmptySelections) {
  auto patches = numbered_patches(10);
  EXPECT_THROW(select_labeled_fraction({}, 0.5, 1), Error);
  EXPECT_THROW(select_labeled_fraction(refs(patches), 0.0, 1), Error);
  EXPECT_THROW(select_labeled_fraction(refs(patches), 1.5, 1), Error);
}

Checkpoint trained_segnet(const std::vector<Patch>& train) {
  RefineConfig config;
  config.epochs = 2;
  config.batch_size = 4;
  config.lr = 1e-3;
  return train_fcdplus(refs(train), real_targets(train), refs(train), config, SegNetOptions{3, 4, 2}).best;
}

TEST(Finetune, FrozenEncoderIsBitIdentical) {
  auto train = testing::synthetic_patches(2, 32, 16, 5);
  const Checkpoint parent = trained_segnet(train);
  SegNet before = load_segnet(parent);
  FinetuneConfig config;
  config.epochs = 3;
  config.lr = 1e-2;
  config.batch_size = 4;
  const auto r = finetune(parent, refs(train), refs(train), config);
  EXPECT_EQ(tensor_checksum(r.net->encoder_parameters()), tensor_checksum(before->encoder_parameters()));
  ASSERT_EQ(r.history.size(), 4u);

  // one explicit step: the decoder moves, the encoder does not
  SegNet net = load_segnet(parent);
  net->freeze_encoder();
  const auto enc = tensor_checksum(net->encoder_parameters());
  const auto rest = tensor_checksum(net->trainable_non_encoder_parameters());
  torch::optim::Adam opt(net->trainable_non_encoder_parameters(), torch::optim::AdamOptions(1e-2));
  net->train();
  const auto out = net->forward(stack_images(refs(train)));
  torch::binary_cross_entropy_with_logits(out.pixel, stack_masks(refs(train))).backward();
  opt.step();
  EXPECT_EQ(tensor_checksum(net->encoder_parameters()), enc);
  EXPECT_NE(tensor_checksum(net->trainable_non_encoder_parameters()), rest);
}

TEST(Finetune, ZeroLearningRateLeavesTheWholeNetUnchanged) {
  auto train = testing::synthetic_patches(2, 32, 16, 5);
  const Checkpoint parent = trained_segnet(train);
  FinetuneConfig config;
  config.epochs = 2;
  config.lr = 0.0;
  config.freeze_encoder = false;
  const auto r = finetune(parent, refs(train), refs(train), config);
  EXPECT_EQ(tensor_checksum(r.net->parameters()), tensor_checksum(load_segnet(parent)->parameters()));
  EXPECT_EQ(r.best.config["parent"], checkpoint_id(parent));
}

TEST(Finetune, EmptySubsetIsRejected) {
  auto train = testing::synthetic_patches(2, 32, 16, 5);
  EXPECT_THROW(finetune(trained_segnet(train), {}, refs(train), FinetuneConfig{}), Error);
}

SegNet constant_net(float probability) {
  SegNet net(SegNetOptions{3, 4, 2});
  auto state = snapshot_state(*net);
  for (auto& [name, t] : state) {
    if (name == "pixel_head.weight") t.zero_();
    if (name == "pixel_head.bias") t.fill_(std::log(probability / (1 - probability)));
  }
  restore_state(*net, state);
  return net;
}

TEST(PredictScene, ConstantProbabilityGivesAllOnesOfSceneShape) {
  SynthSpec spec;
  spec.height = 40;
  spec.width = 23;
  const Scene s = generate_synthetic_scene(spec, 0);
  SegNet net = constant_net(0.9f);
  const Mask m = predict_scene(net, s, 16);
  EXPECT_EQ(m.height, 40);
  EXPECT_EQ(m.width, 23);
  EXPECT_EQ(count_ones(m), m.size());
  SegNet low = constant_net(0.2f);
  EXPECT_EQ(count_ones(predict_scene(low, s, 16)), 0u);
}

TEST(PredictScene, EqualsPatchwisePredictionOnTwoTiles) {
  SynthSpec spec;
  spec.height = 16;
  spec.width = 32;
  const Scene s = generate_synthetic_scene(spec, 1);
  torch::manual_seed(3);
  SegNet net(SegNetOptions{3, 4, 2});
  net->eval();
  const Mask whole = predict_scene(net, s, 16);
  torch::NoGradGuard ng;
  Mask manual(16, 32);
  for (int col : {0, 16}) {
    auto x = to_tensor(crop(s.bands, 0, col, 16, 16)).unsqueeze(0);
    auto p = torch::sigmoid(net->forward(x).pixel)[0][0];
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) manual.at(r, col + c) = p[r][c].item<float>() > 0.5f;
  }
  EXPECT_EQ(whole, manual);
}

TEST(SegNet, PixelOutputIsAProbabilityMapOfPatchShape) {
  torch::manual_seed(1);
  SegNet net(SegNetOptions{3, 4, 3});
  const auto out = net->forward(torch::rand({2, 3, 16, 16}) * 2 - 1);
  EXPECT_EQ(out.pixel.sizes(), (std::vector<int64_t>{2, 1, 16, 16}));
  EXPECT_EQ(out.image.sizes(), (std::vector<int64_t>{2}));
  const auto p = torch::sigmoid(out.pixel);
  EXPECT_GT(p.min().item<float>(), 0.0f);
  EXPECT_LT(p.max().item<float>(), 1.0f);
}

}  // namespace
}  // namespace fcd
