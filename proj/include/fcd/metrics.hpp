#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcd/raster.hpp"

namespace fcd {

/// Pixel confusion counts with cloud as the positive class.
struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend Confusion operator+(Confusion a, const Confusion& b) { return a += b; }
  bool operator==(const Confusion&) const = default;
};

/// `valid` (when given) marks evaluated pixels with 1.
Confusion confusion(const Mask& pred, const Mask& truth, const Mask* valid = nullptr);

struct Scores {
  double f1 = 0.0;
  double accuracy = 0.0;
};

/// f1 = 2tp / (2tp + fp + fn), defined as 0 when the denominator is 0.
Scores f1_accuracy(const Confusion& c);

/// Exact three-way comparison of F1 between two confusions (no rounding).
int compare_f1(const Confusion& a, const Confusion& b);

struct GroupMetrics {
  Confusion confusion;
  Scores scores;
  double cloud_fraction = 0.0;  // share of cloud pixels in the ground truth
  int scenes = 0;
};

struct MetricsReport {
  std::string method;
  GroupMetrics overall;
  std::map<std::string, GroupMetrics> per_biome;
  std::uint64_t seed = 0;
  std::string checkpoint_id;
  std::optional<double> threshold;
  std::map<std::string, double> extras;
};

struct SceneEvaluation {
  std::string scene_id;
  std::string biome;
  const Mask* prediction = nullptr;
  const Mask* truth = nullptr;
  const Mask* valid = nullptr;
};

/// Pixel-pooled overall and per-biome metrics: confusions are summed before
/// any score is computed.
MetricsReport evaluate_method(const std::string& method, const std::vector<SceneEvaluation>& scenes,
                              std::uint64_t seed = 0, std::string checkpoint_id = {},
                              std::optional<double> threshold = std::nullopt);

/// Count tiles predicted entirely clear although more than
/// `min_cloud_fraction` of their ground truth is cloud.
int count_patch_holes(const Mask& prediction, const Mask& truth, int patch_size, double min_cloud_fraction = 0.2);

nlohmann::json to_json(const Confusion& c);
nlohmann::json to_json(const GroupMetrics& g);
nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace fcd
