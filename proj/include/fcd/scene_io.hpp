#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fcd/data.hpp"

namespace fcd {

/// Raw label codes as stored in labels.bin before the class merge.
enum class RawLabel : std::uint8_t { Clear = 0, ThinCloud = 1, Cloud = 2, Shadow = 3 };

/// thin-cloud and cloud become 1; clear and shadow become 0.
std::uint8_t merge_raw_label(std::uint8_t raw);

struct SceneMeta {
  std::string id;
  std::string biome;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::optional<BandStats> band_stats;
};

SceneMeta read_scene_meta(const std::filesystem::path& dir);

/// Reads meta.json, bands.bin and the optional labels.bin / nodata.bin.
/// Labels are merged to {0,1}; bands are returned un-normalized.
Scene load_scene(const std::filesystem::path& dir);

/// Writes the directory layout read by load_scene. Binary labels are stored
/// with the raw codes 0 (clear) and 2 (cloud).
void write_scene(const Scene& scene, const std::filesystem::path& dir,
                 const std::optional<BandStats>& band_stats = std::nullopt);

void write_mask(const Mask& mask, const std::filesystem::path& file);
Mask read_mask(const std::filesystem::path& file, int height, int width);

void write_score_map(const ScoreMap& map, const std::filesystem::path& file);
ScoreMap read_score_map(const std::filesystem::path& file, int height, int width);

void write_id_list(const std::vector<std::string>& ids, const std::filesystem::path& file);
std::vector<std::string> read_id_list(const std::filesystem::path& file);

void write_band_stats(const BandStats& stats, const std::filesystem::path& file);
BandStats read_band_stats(const std::filesystem::path& file);

/// Writes text atomically enough for stage hand-off (temp file + rename).
void write_text_file(const std::filesystem::path& file, const std::string& text);
std::string read_text_file(const std::filesystem::path& file);

}  // namespace fcd
