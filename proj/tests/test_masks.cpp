#include <gtest/gtest.h>

#include "fcd/masks.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fcd {
namespace {

using testing::random_mask;
using testing::random_scores;

TEST(Translate, IdentityGeneratorReturnsTheInput) {
  Image x(3, 4, 4);
  for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] = static_cast<float>(i) / 48.0f - 0.5f;
  EXPECT_EQ(translate_to_clear(identity_generator(), x), x);
}

TEST(Translate, GeneratorOutputLiesInRange) {
  torch::manual_seed(0);
  Generator g(GeneratorOptions{3, 8, 1, 1});
  auto y = translate_to_clear(inference(g), torch::rand({2, 3, 8, 8}) * 10 - 5);
  EXPECT_LE(y.abs().max().item<float>(), 1.0f);
}

TEST(DifferenceMap, Arithmetic) {
  Image x(10, 2, 2, 0.3f);
  Image y = x;
  EXPECT_EQ(count_ones(binarize(difference_map(x, y), 0.0f)), 0u);
  y.at(4, 1, 0) = 0.8f;
  const auto dm = difference_map(x, y);
  EXPECT_NEAR(dm.at(1, 0), 0.05f, 1e-7);
  EXPECT_EQ(dm.at(0, 0), 0.0f);

  Image a(3, 2, 2, 0.0f), b(3, 2, 2, 0.2f);
  for (float v : difference_map(a, b).values) EXPECT_NEAR(v, 0.2f, 1e-7);
  EXPECT_THROW(difference_map(Image(3, 2, 2), Image(3, 2, 3)), Error);
}

TEST(DifferenceMap, BatchedFormMatchesSingle) {
  Rng rng(3);
  Image x(2, 3, 3), y(2, 3, 3);
  for (auto& v : x.values) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : y.values) v = static_cast<float>(rng.uniform(-1, 1));
  const auto batched = score_map_from_tensor(difference_map(to_tensor(x).unsqueeze(0), to_tensor(y).unsqueeze(0))[0]);
  const auto single = difference_map(x, y);
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(batched.values[i], single.values[i], 1e-6);
}

TEST(Binarize, Examples) {
  ScoreMap dm(2, 2);
  dm.values = {0.1f, 0.3f, 0.05f, 0.2f};
  EXPECT_EQ(binarize(dm, 0.15f).values, (std::vector<std::uint8_t>{0, 1, 0, 1}));
  EXPECT_EQ(count_ones(binarize(dm, 0.0f)), 4u);
  EXPECT_EQ(count_ones(binarize(dm, 0.3f)), 0u);
  EXPECT_EQ(count_ones(binarize(dm, 7.0f)), 0u);
}

TEST(SelectThreshold, MatchesBruteForceOnRandomFixtures) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    Rng rng(seed);
    std::vector<ScoreMap> maps;
    std::vector<Mask> truths;
    std::vector<const Mask*> truth_ptrs;
    for (int k = 0; k < 4; ++k) {
      ScoreMap m = random_scores(9, 7, rng);
      // coarse values force ties between neighbouring grid points
      if (seed % 2 == 0)
        for (auto& v : m.values) v = std::round(v * 4.0f) / 4.0f;
      truths.push_back(random_mask(9, 7, rng, 0.4));
      maps.push_back(m);
    }
    for (auto& t : truths) truth_ptrs.push_back(&t);
    float peak = 0;
    for (const auto& m : maps) peak = std::max(peak, *std::max_element(m.values.begin(), m.values.end()));
    const auto grid = threshold_grid(peak, 64);
    const auto sel = select_threshold(maps, truth_ptrs, grid);
    const auto ref = oracle::threshold_sweep(maps, truths, grid);
    EXPECT_EQ(sel.threshold, grid[ref.index]) << "seed " << seed;
    const auto& pt = sel.sweep[ref.index];
    EXPECT_TRUE(oracle::same(ref.counts, pt.confusion));
    EXPECT_EQ(sel.f1, pt.f1);
  }
}

TEST(SelectThreshold, PerfectMapPicksTheSmallestPerfectThreshold) {
  Rng rng(7);
  Mask truth = random_mask(8, 8, rng);
  ScoreMap dm(8, 8);
  for (std::size_t i = 0; i < dm.size(); ++i) dm.values[i] = truth.values[i];
  const std::vector<float> grid{0.25f, 0.5f, 0.75f, 0.9f};
  const auto sel = select_threshold({dm}, {&truth}, grid);
  EXPECT_EQ(sel.f1, 1.0);
  EXPECT_EQ(sel.threshold, 0.25f);
  // a grid that includes 0 already separates the classes at 0
  const auto with_zero = select_threshold({dm}, {&truth}, threshold_grid(1.0f, 11));
  EXPECT_EQ(with_zero.f1, 1.0);
  EXPECT_EQ(with_zero.threshold, 0.0f);
}

TEST(SelectThreshold, SinglePointGrid) {
  Rng rng(9);
  Mask truth = random_mask(5, 5, rng);
  ScoreMap dm = random_scores(5, 5, rng);
  const auto sel = select_threshold({dm}, {&truth}, {0.4f});
  EXPECT_EQ(sel.threshold, 0.4f);
  EXPECT_EQ(sel.f1, f1_accuracy(confusion(binarize(dm, 0.4f), truth)).f1);
}

TEST(SelectThreshold, RejectsBadGrids) {
  Mask truth(2, 2);
  ScoreMap dm(2, 2);
  EXPECT_THROW(select_threshold({dm}, {&truth}, {}), Error);
  EXPECT_THROW(select_threshold({dm}, {&truth}, {0.5f, 0.2f}), Error);
}

TEST(ThresholdGrid, EvenlySpacedFromZero) {
  const auto g = threshold_grid(1.0f, 5);
  EXPECT_EQ(g, (std::vector<float>{0.0f, 0.25f, 0.5f, 0.75f, 1.0f}));
}

Patch constant_patch(DomainLabel label) {
  Patch p;
  p.scene_id = "p";
  p.data = Image(3, 8, 8, 0.4f);
  p.image_label = label;
  p.pixel_mask = Mask(8, 8, label == DomainLabel::Cloudy ? 1 : 0);
  return p;
}

TEST(PredictPatchMask, ClearPatchUsesTheImageLabel) {
  GeneratorFn darken = [](const torch::Tensor& x, const torch::Tensor&) { return torch::full_like(x, -1.0f); };
  const Patch clear = constant_patch(DomainLabel::Clear);
  EXPECT_EQ(count_ones(predict_patch_mask(darken, clear, 0.1f, true)), 0u);
  EXPECT_EQ(count_ones(predict_patch_mask(darken, clear, 0.1f, false)), 64u);
}

TEST(PredictPatchMask, IdentityGeneratorIsAllClear) {
  const Patch cloudy = constant_patch(DomainLabel::Cloudy);
  for (float t : {1e-6f, 0.1f, 0.5f}) EXPECT_EQ(count_ones(predict_patch_mask(identity_generator(), cloudy, t, false)), 0u);
}

TEST(PredictPatchMask, BatchedMatchesSingle) {
  auto patches = testing::synthetic_patches(2, 32, 16, 4);
  torch::manual_seed(1);
  auto g = inference(Generator(GeneratorOptions{3, 8, 1, 1}));
  const auto batched = predict_patch_masks(g, refs(patches), 0.05f, true, 3);
  for (std::size_t i = 0; i < patches.size(); ++i) EXPECT_EQ(batched[i], predict_patch_mask(g, patches[i], 0.05f, true));
}

std::vector<PlacedMask> tile_mask(const Mask& m, const TileGrid& grid) {
  const Mask padded = pad_reflect(m, grid.padded_height(), grid.padded_width());
  std::vector<PlacedMask> tiles;
  for (const auto& o : grid.origins()) tiles.push_back({o, crop(padded, o.row, o.col, grid.patch_size, grid.patch_size)});
  return tiles;
}

TEST(Stitch, TileThenStitchIsIdentity) {
  Rng rng(11);
  for (auto [h, w, p] : {std::tuple{64, 64, 16}, {50, 37, 16}, {300, 300, 128}, {7, 5, 8}}) {
    const Mask m = random_mask(h, w, rng);
    const TileGrid grid{h, w, p};
    EXPECT_EQ(stitch_masks(tile_mask(m, grid), grid), m) << h << "x" << w;
  }
}

TEST(Stitch, SceneTilingRoundTripsGroundTruth) {
  SynthSpec spec;
  spec.height = 100;
  spec.width = 70;
  const Scene s = generate_synthetic_scene(spec, 3);
  const auto tiled = tile_scene(s, 32);
  std::vector<PlacedMask> tiles;
  for (const auto& p : tiled.patches) tiles.push_back({p.origin, *p.pixel_mask});
  EXPECT_EQ(stitch_masks(tiles, tiled.grid), *s.pixel_labels);
}

TEST(Stitch, OneFullTilePlacesOneBlock) {
  const TileGrid grid{384, 384, 128};
  std::vector<PlacedMask> tiles;
  for (const auto& o : grid.origins()) tiles.push_back({o, Mask(128, 128, o == PixelOrigin{128, 256} ? 1 : 0)});
  const Mask out = stitch_masks(tiles, grid);
  EXPECT_EQ(count_ones(out), 128u * 128u);
  for (int r = 0; r < 384; ++r)
    for (int c = 0; c < 384; ++c) ASSERT_EQ(out.at(r, c), (r >= 128 && r < 256 && c >= 256) ? 1 : 0);
}

TEST(Stitch, PaddedSceneCropsBack) {
  const TileGrid grid{300, 300, 128};
  std::vector<PlacedMask> tiles;
  for (const auto& o : grid.origins()) tiles.push_back({o, Mask(128, 128, 1)});
  const Mask out = stitch_masks(tiles, grid);
  EXPECT_EQ(out.height, 300);
  EXPECT_EQ(out.width, 300);
}

TEST(Stitch, MissingOrDuplicateTileIsRejected) {
  const TileGrid grid{32, 32, 16};
  auto tiles = tile_mask(Mask(32, 32), grid);
  auto missing = tiles;
  missing.pop_back();
  EXPECT_THROW(stitch_masks(missing, grid), Error);
  auto dup = tiles;
  dup.back() = dup.front();
  EXPECT_THROW(stitch_masks(dup, grid), Error);
}

TEST(CloudyValidation, RequiresGroundTruth) {
  Patch p = constant_patch(DomainLabel::Cloudy);
  p.pixel_mask.reset();
  EXPECT_THROW(cloudy_validation_patches({&p}), Error);
  Patch clear = constant_patch(DomainLabel::Clear);
  EXPECT_THROW(cloudy_validation_patches({&clear}), Error);
}

}  // namespace
}  // namespace fcd
