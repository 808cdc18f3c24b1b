#include "fcd/masks.hpp"

#include <algorithm>
#include <set>

namespace fcd {

GeneratorFn inference(Generator generator) {
  return [generator](const torch::Tensor& images, const torch::Tensor& labels) mutable {
    const bool was_training = generator->is_training();
    generator->eval();
    torch::NoGradGuard no_grad;
    auto out = generator->forward(images, labels);
    if (was_training) generator->train();
    return out;
  };
}

GeneratorFn identity_generator() {
  return [](const torch::Tensor& images, const torch::Tensor&) { return images; };
}

torch::Tensor translate_to_clear(const GeneratorFn& g, const torch::Tensor& images) {
  auto out = g(images, torch::zeros({images.size(0)}, torch::kFloat32));
  if (!out.sizes().equals(images.sizes())) throw Error("translate_to_clear: generator changed the image shape");
  return out;
}

Image translate_to_clear(const GeneratorFn& g, const Image& x) {
  return image_from_tensor(translate_to_clear(g, to_tensor(x).unsqueeze(0))[0]);
}

ScoreMap difference_map(const Image& x, const Image& y) {
  if (x.channels != y.channels || x.height != y.height || x.width != y.width)
    throw Error("difference_map: shape mismatch");
  ScoreMap out(x.height, x.width);
  const std::size_t n = x.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < x.channels; ++c) acc += std::abs(static_cast<double>(x.values[c * n + i]) - y.values[c * n + i]);
    out.values[i] = static_cast<float>(acc / x.channels);
  }
  return out;
}

torch::Tensor difference_map(const torch::Tensor& x, const torch::Tensor& y) {
  if (!x.sizes().equals(y.sizes()) || x.dim() != 4) throw Error("difference_map: shape mismatch");
  return (x - y).abs().mean(1);
}

std::vector<ScoreMap> difference_maps(const GeneratorFn& g, const PatchRefs& patches, int batch_size) {
  std::vector<ScoreMap> out;
  out.reserve(patches.size());
  for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(batch_size)) {
    const PatchRefs chunk(patches.begin() + static_cast<long>(start),
                          patches.begin() + static_cast<long>(std::min(patches.size(), start + batch_size)));
    const auto x = stack_images(chunk);
    const auto dm = difference_map(x, translate_to_clear(g, x));
    for (long i = 0; i < dm.size(0); ++i) out.push_back(score_map_from_tensor(dm[i]));
  }
  return out;
}

Mask binarize(const ScoreMap& map, float threshold) {
  Mask out(map.height, map.width);
  for (std::size_t i = 0; i < map.values.size(); ++i) out.values[i] = map.values[i] > threshold ? 1 : 0;
  return out;
}

std::vector<float> threshold_grid(float max_value, int points) {
  if (points < 1) throw Error("threshold_grid: need at least one point");
  if (!(max_value >= 0.0f)) throw Error("threshold_grid: max_value must be non-negative");
  std::vector<float> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    grid[static_cast<std::size_t>(i)] =
        points == 1 ? 0.0f : static_cast<float>(static_cast<double>(max_value) * i / (points - 1));
  return grid;
}

ThresholdSelection select_threshold(const std::vector<ScoreMap>& maps, const std::vector<const Mask*>& truths,
                                    const std::vector<float>& grid) {
  if (maps.empty()) throw Error("select_threshold: empty validation set");
  if (maps.size() != truths.size()) throw Error("select_threshold: maps and truths differ in count");
  if (grid.empty()) throw Error("select_threshold: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) throw Error("select_threshold: grid must be ascending");

  // above[k] counts pixels that exceed exactly the first k grid points.
  const std::size_t g = grid.size();
  std::vector<std::uint64_t> cloud_above(g + 1, 0), clear_above(g + 1, 0);
  std::uint64_t cloud_total = 0, clear_total = 0;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    const auto& map = maps[m];
    const Mask& truth = *truths[m];
    if (map.height != truth.height || map.width != truth.width)
      throw Error("select_threshold: score map and truth shapes differ");
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      const auto k = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), map.values[i]) - grid.begin());
      if (truth.values[i]) {
        ++cloud_above[k];
        ++cloud_total;
      } else {
        ++clear_above[k];
        ++clear_total;
      }
    }
  }

  ThresholdSelection out;
  out.sweep.resize(g);
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = g; i-- > 0;) {
    tp += cloud_above[i + 1];
    fp += clear_above[i + 1];
    auto& point = out.sweep[i];
    point.threshold = grid[i];
    point.confusion = {tp, fp, cloud_total - tp, clear_total - fp};
    point.f1 = f1_accuracy(point.confusion).f1;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < g; ++i)
    if (compare_f1(out.sweep[i].confusion, out.sweep[best].confusion) > 0) best = i;
  out.threshold = out.sweep[best].threshold;
  out.f1 = out.sweep[best].f1;
  return out;
}

PatchRefs cloudy_validation_patches(const PatchRefs& val_patches) {
  PatchRefs cloudy;
  for (const Patch* p : val_patches)
    if (p->image_label == DomainLabel::Cloudy) {
      if (!p->pixel_mask) throw Error("select_threshold: validation patch " + p->id() + " has no ground truth");
      cloudy.push_back(p);
    }
  if (cloudy.empty()) throw Error("select_threshold: no cloudy validation patches");
  return cloudy;
}

ThresholdSelection select_threshold_on_maps(const std::vector<ScoreMap>& maps, const PatchRefs& patches,
                                            const std::vector<float>& grid, int grid_points) {
  std::vector<const Mask*> truths;
  for (const Patch* p : patches) {
    if (!p->pixel_mask) throw Error("select_threshold: patch " + p->id() + " has no ground truth");
    truths.push_back(&*p->pixel_mask);
  }
  if (!grid.empty()) return select_threshold(maps, truths, grid);
  float max_value = 0.0f;
  for (const auto& m : maps)
    for (float v : m.values) max_value = std::max(max_value, v);
  return select_threshold(maps, truths, threshold_grid(max_value, grid_points));
}

ThresholdSelection select_threshold(const GeneratorFn& g, const PatchRefs& val_patches, const std::vector<float>& grid,
                                    int grid_points) {
  const PatchRefs cloudy = cloudy_validation_patches(val_patches);
  return select_threshold_on_maps(difference_maps(g, cloudy), cloudy, grid, grid_points);
}

std::vector<Mask> predict_patch_masks(const GeneratorFn& g, const PatchRefs& patches, float threshold,
                                      bool use_image_labels, int batch_size) {
  std::vector<Mask> out(patches.size());
  PatchRefs routed;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Patch* p = patches[i];
    if (use_image_labels && p->image_label == DomainLabel::Clear) {
      out[i] = Mask(p->patch_size(), p->patch_size(), 0);
    } else {
      routed.push_back(p);
      slots.push_back(i);
    }
  }
  if (!routed.empty()) {
    const auto maps = difference_maps(g, routed, batch_size);
    for (std::size_t j = 0; j < maps.size(); ++j) out[slots[j]] = binarize(maps[j], threshold);
  }
  return out;
}

Mask predict_patch_mask(const GeneratorFn& g, const Patch& patch, float threshold, bool use_image_labels) {
  return predict_patch_masks(g, {&patch}, threshold, use_image_labels).front();
}

namespace {

template <typename T>
Grid<T> stitch(const std::vector<Placed<T>>& tiles, const TileGrid& grid) {
  const auto expected = grid.origins();
  const std::set<PixelOrigin> valid(expected.begin(), expected.end());
  std::set<PixelOrigin> seen;
  std::string bad, overlapping;
  Grid<T> canvas(grid.padded_height(), grid.padded_width());
  for (const auto& t : tiles) {
    if (!valid.count(t.origin)) {
      bad += " " + to_string(t.origin);
      continue;
    }
    if (!seen.insert(t.origin).second) {
      overlapping += " " + to_string(t.origin);
      continue;
    }
    if (t.tile.height != grid.patch_size || t.tile.width != grid.patch_size)
      throw Error("stitch_masks: tile at " + to_string(t.origin) + " is not " + std::to_string(grid.patch_size) + "x" +
                  std::to_string(grid.patch_size));
    for (int r = 0; r < grid.patch_size; ++r)
      std::copy_n(&t.tile.values[static_cast<std::size_t>(r) * grid.patch_size], grid.patch_size,
                  &canvas.at(t.origin.row + r, t.origin.col));
  }
  std::string missing;
  for (const auto& o : expected)
    if (!seen.count(o)) missing += " " + to_string(o);
  if (!bad.empty() || !overlapping.empty() || !missing.empty())
    throw Error("stitch_masks: invalid tiling;" + (bad.empty() ? "" : " off-grid:" + bad) +
                (overlapping.empty() ? "" : " overlapping:" + overlapping) +
                (missing.empty() ? "" : " missing:" + missing));

  Grid<T> out(grid.height, grid.width);
  for (int r = 0; r < grid.height; ++r) std::copy_n(&canvas.at(r, 0), grid.width, &out.at(r, 0));
  return out;
}

}  // namespace

Mask stitch_masks(const std::vector<PlacedMask>& tiles, const TileGrid& grid) { return stitch(tiles, grid); }

ScoreMap stitch_scores(const std::vector<Placed<float>>& tiles, const TileGrid& grid) { return stitch(tiles, grid); }

}  // namespace fcd
