#include "fcd/metrics.hpp"

namespace fcd {

using nlohmann::json;

Confusion confusion(const Mask& pred, const Mask& truth, const Mask* valid) {
  if (pred.height != truth.height || pred.width != truth.width)
    throw Error("confusion: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                " does not match truth " + std::to_string(truth.height) + "x" + std::to_string(truth.width));
  if (valid && (valid->height != truth.height || valid->width != truth.width))
    throw Error("confusion: valid mask shape mismatch");
  Confusion c;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    if (valid && valid->values[i] == 0) continue;
    const bool p = pred.values[i] != 0;
    const bool t = truth.values[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Scores f1_accuracy(const Confusion& c) {
  if (c.total() == 0) throw Error("f1_accuracy: no evaluated pixels");
  const auto denom = 2 * c.tp + c.fp + c.fn;
  Scores s;
  s.f1 = denom == 0 ? 0.0 : static_cast<double>(2 * c.tp) / static_cast<double>(denom);
  s.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return s;
}

int compare_f1(const Confusion& a, const Confusion& b) {
  using wide = unsigned __int128;
  const wide na = 2 * static_cast<wide>(a.tp);
  const wide da = na + a.fp + a.fn;
  const wide nb = 2 * static_cast<wide>(b.tp);
  const wide db = nb + b.fp + b.fn;
  // An undefined F1 counts as 0.
  const wide lhs = da == 0 ? 0 : na * (db == 0 ? 1 : db);
  const wide rhs = db == 0 ? 0 : nb * (da == 0 ? 1 : da);
  return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

namespace {

GroupMetrics finish(const Confusion& c, std::uint64_t cloud_pixels, std::uint64_t pixels, int scenes) {
  GroupMetrics g;
  g.confusion = c;
  g.scores = f1_accuracy(c);
  g.cloud_fraction = pixels == 0 ? 0.0 : static_cast<double>(cloud_pixels) / static_cast<double>(pixels);
  g.scenes = scenes;
  return g;
}

}  // namespace

MetricsReport evaluate_method(const std::string& method, const std::vector<SceneEvaluation>& scenes,
                              std::uint64_t seed, std::string checkpoint_id, std::optional<double> threshold) {
  if (scenes.empty()) throw Error("evaluate_method: no scenes to evaluate for " + method);
  struct Acc {
    Confusion c;
    int scenes = 0;
  };
  Acc overall;
  std::map<std::string, Acc> biomes;
  for (const auto& s : scenes) {
    if (s.truth == nullptr) throw Error("evaluate_method: scene " + s.scene_id + " has no ground truth");
    if (s.prediction == nullptr) throw Error("evaluate_method: scene " + s.scene_id + " has no prediction");
    const Confusion c = confusion(*s.prediction, *s.truth, s.valid);
    overall.c += c;
    ++overall.scenes;
    auto& b = biomes[s.biome];
    b.c += c;
    ++b.scenes;
  }
  MetricsReport r;
  r.method = method;
  r.seed = seed;
  r.checkpoint_id = std::move(checkpoint_id);
  r.threshold = threshold;
  const auto cloud = [](const Confusion& c) { return c.tp + c.fn; };
  r.overall = finish(overall.c, cloud(overall.c), overall.c.total(), overall.scenes);
  for (const auto& [name, acc] : biomes) r.per_biome[name] = finish(acc.c, cloud(acc.c), acc.c.total(), acc.scenes);
  return r;
}

int count_patch_holes(const Mask& prediction, const Mask& truth, int patch_size, double min_cloud_fraction) {
  if (prediction.height != truth.height || prediction.width != truth.width)
    throw Error("count_patch_holes: shape mismatch");
  if (patch_size < 1) throw Error("count_patch_holes: patch_size must be positive");
  int holes = 0;
  for (int r0 = 0; r0 < truth.height; r0 += patch_size)
    for (int c0 = 0; c0 < truth.width; c0 += patch_size) {
      std::size_t cloud = 0, predicted = 0, n = 0;
      for (int r = r0; r < std::min(r0 + patch_size, truth.height); ++r)
        for (int c = c0; c < std::min(c0 + patch_size, truth.width); ++c) {
          cloud += truth.at(r, c) != 0;
          predicted += prediction.at(r, c) != 0;
          ++n;
        }
      if (predicted == 0 && static_cast<double>(cloud) > min_cloud_fraction * static_cast<double>(n)) ++holes;
    }
  return holes;
}

json to_json(const Confusion& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}; }

json to_json(const GroupMetrics& g) {
  return {{"confusion", to_json(g.confusion)},
          {"f1", g.scores.f1},
          {"accuracy", g.scores.accuracy},
          {"cloud_fraction", g.cloud_fraction},
          {"scenes", g.scenes}};
}

json to_json(const MetricsReport& r) {
  json biomes = json::object();
  for (const auto& [name, g] : r.per_biome) biomes[name] = to_json(g);
  json j = {{"method", r.method},
            {"overall", to_json(r.overall)},
            {"per_biome", biomes},
            {"seed", r.seed},
            {"checkpoint_id", r.checkpoint_id},
            {"threshold", r.threshold ? json(*r.threshold) : json(nullptr)}};
  if (!r.extras.empty()) j["extras"] = r.extras;
  return j;
}

namespace {

GroupMetrics group_from_json(const json& j) {
  GroupMetrics g;
  const auto& c = j.at("confusion");
  g.confusion = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(), c.at("fn").get<std::uint64_t>(),
                 c.at("tn").get<std::uint64_t>()};
  g.scores = {j.at("f1").get<double>(), j.at("accuracy").get<double>()};
  g.cloud_fraction = j.at("cloud_fraction").get<double>();
  g.scenes = j.at("scenes").get<int>();
  return g;
}

}  // namespace

MetricsReport report_from_json(const json& j) {
  try {
    MetricsReport r;
    r.method = j.at("method").get<std::string>();
    r.overall = group_from_json(j.at("overall"));
    for (const auto& [name, g] : j.at("per_biome").items()) r.per_biome[name] = group_from_json(g);
    r.seed = j.at("seed").get<std::uint64_t>();
    r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
    if (!j.at("threshold").is_null()) r.threshold = j.at("threshold").get<double>();
    if (j.contains("extras")) r.extras = j.at("extras").get<std::map<std::string, double>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("metrics report: ") + e.what());
  }
}

}  // namespace fcd
