#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fcd/raster.hpp"

namespace fcd {

/// Image-level condition fed to the generator.
enum class DomainLabel : std::uint8_t { Clear = 0, Cloudy = 1 };

inline int to_int(DomainLabel label) { return static_cast<int>(label); }
DomainLabel domain_label_from_int(int value);

struct Scene {
  std::string id;
  Image bands;                       // C x H x W
  std::optional<Mask> pixel_labels;  // merged {0 clear, 1 cloud}
  std::optional<std::string> biome;
  std::optional<Mask> nodata;  // 1 = no data

  int channels() const { return bands.channels; }
  int height() const { return bands.height; }
  int width() const { return bands.width; }
};

/// Throws Error naming the violated field.
void validate_scene(const Scene& scene);

struct BandRange {
  float lo = 0.0f;
  float hi = 1.0f;
  bool operator==(const BandRange&) const = default;
};
using BandStats = std::vector<BandRange>;

/// Per-band percentile ranges pooled over the given scenes (nodata excluded).
BandStats compute_band_stats(const std::vector<const Scene*>& scenes, double lo_percentile, double hi_percentile);

/// Affine map of [lo, hi] onto [-1, 1] per band, then clamp.
Scene normalize_bands(Scene scene, const BandStats& stats);

/// 1 iff the mask holds at least one cloud pixel.
DomainLabel derive_image_label(const Mask& pixel_mask);

struct Patch {
  std::string scene_id;
  PixelOrigin origin;
  Image data;  // C x P x P, in [-1, 1]
  DomainLabel image_label = DomainLabel::Clear;
  std::optional<Mask> pixel_mask;
  std::optional<std::string> biome;
  int pad_rows = 0;  // reflected rows at the bottom of this patch
  int pad_cols = 0;  // reflected columns at the right of this patch
  double nodata_fraction = 0.0;

  int patch_size() const { return data.height; }
  std::string id() const { return scene_id + "@" + std::to_string(origin.row) + "," + std::to_string(origin.col); }
};

/// Grid geometry of a tiled scene: the padded canvas is a patch multiple.
struct TileGrid {
  int height = 0;
  int width = 0;
  int patch_size = 0;

  int padded_height() const { return (height + patch_size - 1) / patch_size * patch_size; }
  int padded_width() const { return (width + patch_size - 1) / patch_size * patch_size; }
  int rows() const { return padded_height() / patch_size; }
  int cols() const { return padded_width() / patch_size; }
  std::vector<PixelOrigin> origins() const;
  bool operator==(const TileGrid&) const = default;
};

struct TiledScene {
  TileGrid grid;
  std::vector<Patch> patches;
  std::vector<PixelOrigin> dropped;  // tiles rejected for nodata
};

/// Non-overlapping tiling with reflect padding on the bottom/right edges.
/// Tiles whose nodata fraction exceeds max_nodata_fraction are dropped.
TiledScene tile_scene(const Scene& scene, int patch_size, double max_nodata_fraction = 0.5);

struct SplitRatio {
  int train = 6;
  int val = 2;
  int test = 4;
  int total() const { return train + val + test; }
};

struct SplitAssignment {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  SplitRatio ratio;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

struct SceneTag {
  std::string id;
  std::string biome;
};

/// Per-biome shuffled assignment. Counts come from the largest-remainder
/// apportionment of the ratio, which is exact when the biome size is a
/// multiple of the ratio total.
SplitAssignment assign_splits(const std::vector<SceneTag>& scenes, SplitRatio ratio, std::uint64_t seed);

}  // namespace fcd
