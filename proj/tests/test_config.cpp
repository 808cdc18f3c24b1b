#include <gtest/gtest.h>

#include "fcd/config.hpp"

namespace fcd {
namespace {

TEST(RunConfig, DefaultsValidateAndCoverTheSchema) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.get_int("data.patch_size"), 128);
  std::size_t lines = 0;
  for (char ch : c.canonical_text()) lines += ch == '\n';
  EXPECT_EQ(lines, config_schema().size());
}

TEST(RunConfig, SectionsCommentsAndOverrides) {
  auto c = RunConfig::from_text("seed = 3\n# comment\n[gan]\niterations = 50  # trailing\nlr_g = 2e-4\n"
                                "[finetune]\nfreeze_encoder = false\n");
  EXPECT_EQ(c.get_int("seed"), 3);
  EXPECT_EQ(c.get_int("gan.iterations"), 50);
  EXPECT_DOUBLE_EQ(c.get_float("gan.lr_g"), 2e-4);
  EXPECT_FALSE(c.get_bool("finetune.freeze_encoder"));
  c.set("gan.iterations=70");
  EXPECT_EQ(c.get_int("gan.iterations"), 70);
  c.set("report.rgb_bands", "2,1,0");
  EXPECT_EQ(c.get_string("report.rgb_bands"), "2,1,0");
}

TEST(RunConfig, UnknownKeysAndBadValuesAreRejectedWithLocation) {
  try {
    RunConfig::from_text("seed = 1\n[gan]\nitertions = 5\n", "x.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("gan.itertions"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::from_text("seed = many\n"), Error);
  EXPECT_THROW(RunConfig::from_text("finetune.freeze_encoder = maybe\n"), Error);
  EXPECT_THROW(RunConfig::from_text("just words\n"), Error);
  RunConfig c;
  EXPECT_THROW(c.set("nope=1"), Error);
  EXPECT_THROW(c.set("seed"), Error);
}

TEST(RunConfig, CrossFieldValidation) {
  RunConfig c;
  c.set("data.patch_size", "100");  // discriminator needs P divisible by 2^layers
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig();
  c.set("data.lo_percentile", "99.5");
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig();
  c.set("finetune.label_fraction", "0");
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig();
  c.set("gan.adversarial_variant", "hinge");
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunConfig, HashIsStableAndSensitive) {
  RunConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 64u);
  b.set("seed", "1");
  EXPECT_NE(a.hash(), b.hash());
  // the canonical text parses back to the same configuration
  EXPECT_EQ(RunConfig::from_text(b.canonical_text()).hash(), b.hash());
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(RunConfig, PaperSettingsAreAccepted) {
  const auto c = RunConfig::from_file(FCD_SOURCE_DIR "/configs/paper.cfg");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.get_int("data.patch_size"), 128);
  const auto gan = gan_config(c);
  EXPECT_EQ(gan.iterations, 200000);
  EXPECT_EQ(gan.batch_size, 16);
  EXPECT_EQ(gan.weights.lambda_cls, 1.0);
  EXPECT_EQ(gan.weights.lambda_cyc, 10.0);
  EXPECT_EQ(gan.weights.lambda_id, 10.0);
  const auto refine = refine_config(c);
  EXPECT_EQ(refine.epochs, 30);
  EXPECT_EQ(refine.batch_size, 64);
  EXPECT_DOUBLE_EQ(refine.lr, 1e-4);
  EXPECT_EQ(refine.patience, 3);
  EXPECT_DOUBLE_EQ(refine.drop_factor, 10.0);
  const auto ft = finetune_config(c);
  EXPECT_DOUBLE_EQ(ft.lr, 1e-5);
  EXPECT_TRUE(ft.freeze_encoder);
  EXPECT_DOUBLE_EQ(ft.label_fraction, 0.01);
  const auto ratio = split_ratio(c);
  EXPECT_EQ(ratio.train, 6);
  EXPECT_EQ(ratio.val, 2);
  EXPECT_EQ(ratio.test, 4);
  const auto arch = fcd_architecture(c, 10);
  EXPECT_EQ(arch.generator.channels, 10);
  EXPECT_EQ(arch.discriminator.patch_size, 128);
}

TEST(RunConfig, DeskSettingsAreAccepted) {
  const auto c = RunConfig::from_file(FCD_SOURCE_DIR "/configs/desk.cfg");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.get_int("data.patch_size"), 32);
  EXPECT_LE(c.get_int("gan.iterations"), 5000);
  const auto synth = synth_spec(c);
  EXPECT_EQ(synth.num_scenes, 60);
  EXPECT_EQ(synth.height, 256);
  EXPECT_EQ(synth.channels, 3);
}

}  // namespace
}  // namespace fcd
