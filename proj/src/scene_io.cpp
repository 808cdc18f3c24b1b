#include "fcd/scene_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fcd {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint8_t merge_raw_label(std::uint8_t raw) {
  switch (static_cast<RawLabel>(raw)) {
    case RawLabel::Clear:
    case RawLabel::Shadow:
      return 0;
    case RawLabel::ThinCloud:
    case RawLabel::Cloud:
      return 1;
  }
  throw Error("labels: raw value " + std::to_string(raw) + " is not one of {0,1,2,3}");
}

namespace {

std::vector<char> read_bytes(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& file, const char* data, std::size_t n) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + file.string());
    out.write(data, static_cast<std::streamsize>(n));
    if (!out) throw Error("short write to " + file.string());
  }
  fs::rename(tmp, file);
}

std::vector<char> floats_to_le(const std::vector<float>& values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return bytes;
}

std::vector<float> floats_from_le(const std::vector<char>& bytes) {
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

template <typename T>
T required(const json& j, const char* key, const fs::path& file) {
  if (!j.contains(key)) throw Error(file.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(file.string() + ": field '" + key + "' has the wrong type");
  }
}

json band_stats_to_json(const BandStats& stats) {
  json arr = json::array();
  for (const auto& r : stats) arr.push_back({r.lo, r.hi});
  return arr;
}

BandStats band_stats_from_json(const json& j, const std::string& where) {
  BandStats stats;
  if (!j.is_array()) throw Error(where + ": band_stats must be a list of [lo, hi] pairs");
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw Error(where + ": band_stats entries must be [lo, hi] pairs");
    stats.push_back({e[0].get<float>(), e[1].get<float>()});
  }
  return stats;
}

}  // namespace

void write_text_file(const fs::path& file, const std::string& text) { write_bytes(file, text.data(), text.size()); }

std::string read_text_file(const fs::path& file) {
  const auto bytes = read_bytes(file);
  return {bytes.begin(), bytes.end()};
}

SceneMeta read_scene_meta(const fs::path& dir) {
  const fs::path file = dir / "meta.json";
  json j;
  try {
    j = json::parse(read_text_file(file));
  } catch (const json::parse_error& e) {
    throw Error(file.string() + ": malformed header: " + e.what());
  }
  SceneMeta meta;
  meta.id = required<std::string>(j, "id", file);
  meta.biome = j.value("biome", std::string("unknown"));
  meta.channels = required<int>(j, "channels", file);
  meta.height = required<int>(j, "height", file);
  meta.width = required<int>(j, "width", file);
  if (required<std::string>(j, "dtype", file) != "float32") throw Error(file.string() + ": field 'dtype' must be float32");
  if (required<std::string>(j, "byte_order", file) != "little-endian")
    throw Error(file.string() + ": field 'byte_order' must be little-endian");
  if (meta.channels < 1) throw Error(file.string() + ": field 'channels' must be >= 1");
  if (meta.height < 1 || meta.width < 1) throw Error(file.string() + ": fields 'height'/'width' must be >= 1");
  if (j.contains("band_stats") && !j["band_stats"].is_null())
    meta.band_stats = band_stats_from_json(j["band_stats"], file.string());
  return meta;
}

Scene load_scene(const fs::path& dir) {
  const SceneMeta meta = read_scene_meta(dir);
  Scene scene;
  scene.id = meta.id;
  scene.biome = meta.biome;

  const auto band_bytes = read_bytes(dir / "bands.bin");
  const std::size_t expected = static_cast<std::size_t>(meta.channels) * meta.height * meta.width;
  if (band_bytes.size() != expected * 4)
    throw Error((dir / "bands.bin").string() + ": bands: size " + std::to_string(band_bytes.size()) +
                " bytes does not match channels x height x width x 4 = " + std::to_string(expected * 4));
  scene.bands.channels = meta.channels;
  scene.bands.height = meta.height;
  scene.bands.width = meta.width;
  scene.bands.values = floats_from_le(band_bytes);
  for (std::size_t i = 0; i < scene.bands.values.size(); ++i)
    if (!std::isfinite(scene.bands.values[i]))
      throw Error((dir / "bands.bin").string() + ": bands: non-finite value at index " + std::to_string(i));

  if (fs::exists(dir / "labels.bin")) {
    const auto raw = read_bytes(dir / "labels.bin");
    if (raw.size() != static_cast<std::size_t>(meta.height) * meta.width)
      throw Error((dir / "labels.bin").string() + ": labels: shape mismatch with bands (" + std::to_string(raw.size()) +
                  " bytes for " + std::to_string(meta.height) + "x" + std::to_string(meta.width) + ")");
    Mask labels(meta.height, meta.width);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      try {
        labels.values[i] = merge_raw_label(static_cast<std::uint8_t>(raw[i]));
      } catch (const Error& e) {
        throw Error((dir / "labels.bin").string() + ": " + e.what());
      }
    }
    scene.pixel_labels = std::move(labels);
  }
  if (fs::exists(dir / "nodata.bin")) scene.nodata = read_mask(dir / "nodata.bin", meta.height, meta.width);
  return scene;
}

void write_scene(const Scene& scene, const fs::path& dir, const std::optional<BandStats>& band_stats) {
  validate_scene(scene);
  fs::create_directories(dir);
  json meta = {{"id", scene.id},
               {"biome", scene.biome.value_or("unknown")},
               {"channels", scene.channels()},
               {"height", scene.height()},
               {"width", scene.width()},
               {"dtype", "float32"},
               {"byte_order", "little-endian"}};
  if (band_stats) meta["band_stats"] = band_stats_to_json(*band_stats);
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");

  const auto bytes = floats_to_le(scene.bands.values);
  write_bytes(dir / "bands.bin", bytes.data(), bytes.size());
  if (scene.pixel_labels) {
    std::vector<char> raw(scene.pixel_labels->values.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
      raw[i] = static_cast<char>(scene.pixel_labels->values[i] ? RawLabel::Cloud : RawLabel::Clear);
    write_bytes(dir / "labels.bin", raw.data(), raw.size());
  }
  if (scene.nodata) write_mask(*scene.nodata, dir / "nodata.bin");
}

void write_mask(const Mask& mask, const fs::path& file) {
  write_bytes(file, reinterpret_cast<const char*>(mask.values.data()), mask.values.size());
}

Mask read_mask(const fs::path& file, int height, int width) {
  const auto bytes = read_bytes(file);
  if (bytes.size() != static_cast<std::size_t>(height) * width)
    throw Error(file.string() + ": mask size " + std::to_string(bytes.size()) + " does not match " +
                std::to_string(height) + "x" + std::to_string(width));
  Mask mask(height, width);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(bytes[i]);
    if (v > 1) throw Error(file.string() + ": mask value outside {0,1}");
    mask.values[i] = v;
  }
  return mask;
}

void write_score_map(const ScoreMap& map, const fs::path& file) {
  const auto bytes = floats_to_le(map.values);
  write_bytes(file, bytes.data(), bytes.size());
}

ScoreMap read_score_map(const fs::path& file, int height, int width) {
  const auto bytes = read_bytes(file);
  if (bytes.size() != static_cast<std::size_t>(height) * width * 4)
    throw Error(file.string() + ": raster size does not match " + std::to_string(height) + "x" + std::to_string(width));
  ScoreMap map(height, width);
  map.values = floats_from_le(bytes);
  return map;
}

void write_id_list(const std::vector<std::string>& ids, const fs::path& file) {
  write_text_file(file, json(ids).dump(2) + "\n");
}

std::vector<std::string> read_id_list(const fs::path& file) {
  try {
    return json::parse(read_text_file(file)).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(file.string() + ": expected a JSON list of scene ids (" + e.what() + ")");
  }
}

void write_band_stats(const BandStats& stats, const fs::path& file) {
  write_text_file(file, band_stats_to_json(stats).dump(2) + "\n");
}

BandStats read_band_stats(const fs::path& file) {
  json j;
  try {
    j = json::parse(read_text_file(file));
  } catch (const json::parse_error& e) {
    throw Error(file.string() + ": " + e.what());
  }
  return band_stats_from_json(j, file.string());
}

}  // namespace fcd
