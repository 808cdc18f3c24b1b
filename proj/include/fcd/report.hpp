#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcd/metrics.hpp"
#include "fcd/raster.hpp"

namespace fcd {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triples
};

void write_png(const RgbImage& image, const std::filesystem::path& file);
RgbImage read_png(const std::filesystem::path& file);

/// One figure row: input composite, difference map, FCD mask, FCD+ mask and
/// ground truth, each resampled to `thumbnail` pixels wide.
struct PanelInputs {
  std::string name;
  const Image* bands = nullptr;  // normalized to [-1, 1]
  std::array<int, 3> rgb_bands{0, 1, 2};
  const ScoreMap* difference = nullptr;
  const Mask* fcd = nullptr;
  const Mask* fcdplus = nullptr;
  const Mask* truth = nullptr;
};

inline constexpr int kPanelColumns = 5;

RgbImage render_panel(const PanelInputs& inputs, int thumbnail);

/// One row per method with columns method, f1, accuracy.
std::string table_csv(const std::vector<MetricsReport>& reports);
nlohmann::json report_document(const std::vector<MetricsReport>& reports);

/// Writes report.json, table.csv and panels/<name>.png under `out_dir`.
void emit_artifacts(const std::vector<MetricsReport>& reports, const std::vector<PanelInputs>& panels,
                    const std::filesystem::path& out_dir, int thumbnail);

}  // namespace fcd
