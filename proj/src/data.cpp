#include "fcd/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fcd/rng.hpp"

namespace fcd {

DomainLabel domain_label_from_int(int value) {
  if (value != 0 && value != 1) throw Error("domain label must be 0 or 1, got " + std::to_string(value));
  return static_cast<DomainLabel>(value);
}

void validate_scene(const Scene& scene) {
  const auto& b = scene.bands;
  if (b.channels < 1) throw Error("scene " + scene.id + ": channels must be >= 1");
  if (b.height < 1 || b.width < 1) throw Error("scene " + scene.id + ": empty raster");
  if (b.values.size() != static_cast<std::size_t>(b.channels) * b.height * b.width)
    throw Error("scene " + scene.id + ": bands size does not match channels x height x width");
  for (std::size_t i = 0; i < b.values.size(); ++i)
    if (!std::isfinite(b.values[i]))
      throw Error("scene " + scene.id + ": bands: non-finite value at band " +
                  std::to_string(i / b.plane_size()) + " offset " + std::to_string(i % b.plane_size()));
  if (scene.pixel_labels) {
    const auto& m = *scene.pixel_labels;
    if (m.height != b.height || m.width != b.width)
      throw Error("scene " + scene.id + ": pixel_labels shape does not match bands");
    for (auto v : m.values)
      if (v > 1) throw Error("scene " + scene.id + ": pixel_labels: value outside {0,1}");
  }
  if (scene.nodata && (scene.nodata->height != b.height || scene.nodata->width != b.width))
    throw Error("scene " + scene.id + ": nodata shape does not match bands");
}

namespace {

double percentile_sorted_pick(std::vector<float>& v, double pct) {
  const double pos = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + frac * (b - a);
}

}  // namespace

BandStats compute_band_stats(const std::vector<const Scene*>& scenes, double lo_percentile, double hi_percentile) {
  if (scenes.empty()) throw Error("band stats: no scenes");
  if (!(lo_percentile >= 0.0 && lo_percentile < hi_percentile && hi_percentile <= 100.0))
    throw Error("band stats: percentiles must satisfy 0 <= lo < hi <= 100");
  const int channels = scenes.front()->channels();
  BandStats stats(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    std::vector<float> pooled;
    for (const Scene* s : scenes) {
      if (s->channels() != channels) throw Error("band stats: scene " + s->id + " has a different band count");
      const auto band = s->bands.band(c);
      for (std::size_t i = 0; i < band.size(); ++i)
        if (!s->nodata || s->nodata->values[i] == 0) pooled.push_back(band[i]);
    }
    if (pooled.empty()) throw Error("band stats: band " + std::to_string(c) + " has no valid pixels");
    auto lo = static_cast<float>(percentile_sorted_pick(pooled, lo_percentile));
    auto hi = static_cast<float>(percentile_sorted_pick(pooled, hi_percentile));
    if (!(hi > lo)) hi = lo + 1.0f;
    stats[static_cast<std::size_t>(c)] = {lo, hi};
  }
  return stats;
}

Scene normalize_bands(Scene scene, const BandStats& stats) {
  if (stats.size() != static_cast<std::size_t>(scene.channels()))
    throw Error("normalize_bands: band_stats has " + std::to_string(stats.size()) + " entries for " +
                std::to_string(scene.channels()) + " bands");
  for (int c = 0; c < scene.channels(); ++c) {
    const auto [lo, hi] = stats[static_cast<std::size_t>(c)];
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
      throw Error("normalize_bands: band " + std::to_string(c) + " requires finite lo < hi");
    const double scale = 2.0 / (static_cast<double>(hi) - lo);
    for (float& v : scene.bands.band(c)) {
      const double mapped = (static_cast<double>(v) - lo) * scale - 1.0;
      v = static_cast<float>(std::clamp(mapped, -1.0, 1.0));
    }
  }
  return scene;
}

DomainLabel derive_image_label(const Mask& pixel_mask) {
  return std::any_of(pixel_mask.values.begin(), pixel_mask.values.end(), [](auto v) { return v != 0; })
             ? DomainLabel::Cloudy
             : DomainLabel::Clear;
}

std::vector<PixelOrigin> TileGrid::origins() const {
  std::vector<PixelOrigin> out;
  for (int r = 0; r < padded_height(); r += patch_size)
    for (int c = 0; c < padded_width(); c += patch_size) out.push_back({r, c});
  return out;
}

TiledScene tile_scene(const Scene& scene, int patch_size, double max_nodata_fraction) {
  if (patch_size < 1) throw Error("tile_scene: patch_size must be positive");
  if (scene.height() < patch_size || scene.width() < patch_size)
    throw Error("tile_scene: scene " + scene.id + " (" + std::to_string(scene.height()) + "x" +
                std::to_string(scene.width()) + ") is smaller than patch_size " + std::to_string(patch_size));
  for (float v : scene.bands.values)
    if (!(v >= -1.0f && v <= 1.0f)) throw Error("tile_scene: scene " + scene.id + " is not normalized to [-1, 1]");

  TiledScene out;
  out.grid = {scene.height(), scene.width(), patch_size};
  const int ph = out.grid.padded_height();
  const int pw = out.grid.padded_width();
  const bool padded = ph != scene.height() || pw != scene.width();

  const Image bands = padded ? pad_reflect(scene.bands, ph, pw) : scene.bands;
  std::optional<Mask> labels;
  if (scene.pixel_labels) labels = padded ? pad_reflect(*scene.pixel_labels, ph, pw) : *scene.pixel_labels;
  std::optional<Mask> nodata;
  if (scene.nodata) nodata = padded ? pad_reflect(*scene.nodata, ph, pw) : *scene.nodata;

  for (const auto origin : out.grid.origins()) {
    Patch p;
    p.scene_id = scene.id;
    p.origin = origin;
    p.biome = scene.biome;
    p.pad_rows = std::max(0, origin.row + patch_size - scene.height());
    p.pad_cols = std::max(0, origin.col + patch_size - scene.width());
    if (nodata) {
      const Mask nd = crop(*nodata, origin.row, origin.col, patch_size, patch_size);
      p.nodata_fraction = static_cast<double>(count_ones(nd)) / static_cast<double>(nd.size());
      if (p.nodata_fraction > max_nodata_fraction) {
        out.dropped.push_back(origin);
        continue;
      }
    }
    p.data = crop(bands, origin.row, origin.col, patch_size, patch_size);
    if (labels) {
      p.pixel_mask = crop(*labels, origin.row, origin.col, patch_size, patch_size);
      p.image_label = derive_image_label(*p.pixel_mask);
    }
    out.patches.push_back(std::move(p));
  }
  return out;
}

namespace {

// Largest-remainder apportionment of n items over the ratio parts.
std::array<int, 3> apportion(int n, const SplitRatio& ratio) {
  const std::array<int, 3> parts{ratio.train, ratio.val, ratio.test};
  const int total = ratio.total();
  std::array<int, 3> counts{};
  std::array<long, 3> remainders{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = n * parts[i] / total;
    remainders[i] = static_cast<long>(n) * parts[i] % total;
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (remainders[i] > remainders[best]) best = i;
    ++counts[best];
    remainders[best] = -1;
    ++assigned;
  }
  return counts;
}

}  // namespace

SplitAssignment assign_splits(const std::vector<SceneTag>& scenes, SplitRatio ratio, std::uint64_t seed) {
  if (ratio.train < 0 || ratio.val < 0 || ratio.test < 0 || ratio.total() <= 0)
    throw Error("assign_splits: ratio parts must be non-negative with a positive total");
  std::map<std::string, std::vector<std::string>> by_biome;
  for (const auto& s : scenes) {
    auto& ids = by_biome[s.biome];
    if (std::find(ids.begin(), ids.end(), s.id) != ids.end()) throw Error("assign_splits: duplicate scene id " + s.id);
    ids.push_back(s.id);
  }

  SplitAssignment out;
  out.ratio = ratio;
  out.seed = seed;
  for (auto& [biome, ids] : by_biome) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, "split/" + biome));
    rng.shuffle(std::span<std::string>(ids));
    const int n = static_cast<int>(ids.size());
    if (n < ratio.total())
      out.warnings.push_back("biome '" + biome + "' has " + std::to_string(n) + " scenes, fewer than the " +
                             std::to_string(ratio.total()) + " ratio parts; proportional fallback applied");
    const auto counts = apportion(n, ratio);
    auto it = ids.begin();
    out.train.insert(out.train.end(), it, it + counts[0]);
    it += counts[0];
    out.val.insert(out.val.end(), it, it + counts[1]);
    it += counts[1];
    out.test.insert(out.test.end(), it, ids.end());
  }
  return out;
}

}  // namespace fcd
