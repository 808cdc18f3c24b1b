#include "fcd/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fcd/cam.hpp"
#include "fcd/checkpoint.hpp"
#include "fcd/gan_training.hpp"
#include "fcd/masks.hpp"
#include "fcd/metrics.hpp"
#include "fcd/refinement.hpp"
#include "fcd/report.hpp"
#include "fcd/scene_io.hpp"
#include "fcd/synthetic.hpp"

namespace fcd {

namespace fs = std::filesystem;
using nlohmann::json;

MissingArtifact::MissingArtifact(const fs::path& path, std::string producer)
    : Error("missing " + path.string() + "; run `" + producer + "` first"), producer_(std::move(producer)) {}

const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> commands{"synth-data",   "split",         "train-fcd", "make-masks",
                                                 "train-cam",    "cam-masks",     "train-fcdplus",
                                                 "finetune",     "evaluate",      "report"};
  return commands;
}

const std::vector<std::string>& mask_methods() {
  static const std::vector<std::string> methods{"fcd", "cam", "gradcam", "gradcampp", "fcdplus", "fcdplus_ft"};
  return methods;
}

namespace {

// Records declared inputs and outputs and writes the stage manifest.
class Stage {
 public:
  Stage(const StageContext& ctx, std::string command) : ctx_(ctx), command_(std::move(command)) {}

  const RunConfig& config() const { return ctx_.config; }
  const fs::path& out() const { return ctx_.out; }

  void log(const std::string& message) const {
    if (ctx_.log) ctx_.log(command_ + ": " + message);
  }

  fs::path need(const fs::path& rel, const std::string& producer) {
    const fs::path full = rel.is_absolute() ? rel : ctx_.out / rel;
    if (!fs::exists(full)) throw MissingArtifact(full, producer);
    inputs_.insert(rel.generic_string());
    return full;
  }

  fs::path produce(const fs::path& rel) {
    const fs::path full = ctx_.out / rel;
    if (full.has_parent_path()) fs::create_directories(full.parent_path());
    outputs_.insert(rel.generic_string());
    return full;
  }

  void finish() {
    const json manifest = {{"command", command_},
                           {"config_hash", ctx_.config.hash()},
                           {"seed", run_seed(ctx_.config)},
                           {"config", ctx_.config.to_json()},
                           {"inputs", std::vector<std::string>(inputs_.begin(), inputs_.end())},
                           {"outputs", std::vector<std::string>(outputs_.begin(), outputs_.end())}};
    const fs::path file = ctx_.out / "manifests" / (command_ + ".json");
    fs::create_directories(file.parent_path());
    write_text_file(file, manifest.dump(2) + "\n");
  }

 private:
  const StageContext& ctx_;
  std::string command_;
  std::set<std::string> inputs_;
  std::set<std::string> outputs_;
};

int patch_size(const Stage& s) { return static_cast<int>(s.config().get_int("data.patch_size")); }

fs::path scenes_root(const Stage& s) {
  const auto external = s.config().get_string("data.scenes_dir");
  return external.empty() ? fs::path("scenes") : fs::path(external);
}

std::vector<std::string> list_scene_ids(Stage& s) {
  const fs::path root = s.need(scenes_root(s), "synth-data");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw MissingArtifact(root / "<scene>/meta.json", "synth-data");
  return ids;
}

struct Corpus {
  fs::path root;
  std::vector<std::string> train, val, test;
  BandStats stats;
};

Corpus load_corpus(Stage& s) {
  Corpus c;
  c.root = scenes_root(s);
  c.train = read_id_list(s.need("splits/train.json", "split"));
  c.val = read_id_list(s.need("splits/val.json", "split"));
  c.test = read_id_list(s.need("splits/test.json", "split"));
  c.stats = read_band_stats(s.need("splits/band_stats.json", "split"));
  return c;
}

Scene load_raw(Stage& s, const Corpus& c, const std::string& id) { return load_scene(s.need(c.root / id, "synth-data")); }

Scene load_normalized(Stage& s, const Corpus& c, const std::string& id) {
  return normalize_bands(load_raw(s, c, id), c.stats);
}

std::vector<Patch> split_patches(Stage& s, const Corpus& c, const std::vector<std::string>& ids) {
  std::vector<Patch> out;
  const double max_nodata = s.config().get_float("data.max_nodata_fraction");
  for (const auto& id : ids) {
    auto tiled = tile_scene(load_normalized(s, c, id), patch_size(s), max_nodata);
    for (auto& p : tiled.patches) out.push_back(std::move(p));
  }
  return out;
}

// Stitches masks of the kept tiles; dropped tiles become clear.
Mask assemble(const TiledScene& tiled, const std::vector<Mask>& masks) {
  std::vector<PlacedMask> placed;
  for (std::size_t i = 0; i < tiled.patches.size(); ++i) placed.push_back({tiled.patches[i].origin, masks[i]});
  for (const auto& o : tiled.dropped) placed.push_back({o, Mask(tiled.grid.patch_size, tiled.grid.patch_size, 0)});
  return stitch_masks(placed, tiled.grid);
}

fs::path mask_path(const std::string& method, const std::string& kind, const std::string& id) {
  return fs::path("masks") / method / kind / id / "mask.bin";
}

void write_record(Stage& s, const std::string& method, json record) {
  record["method"] = method;
  write_text_file(s.produce(fs::path("masks") / method / "record.json"), record.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

void synth_data(Stage& s) {
  const SynthSpec spec = synth_spec(s.config());
  fs::remove_all(s.out() / "scenes");
  for (int i = 0; i < spec.num_scenes; ++i) {
    const Scene scene = generate_synthetic_scene(spec, i);
    s.produce(fs::path("scenes") / scene.id / "meta.json");
    write_scene(scene, s.out() / "scenes" / scene.id);
  }
  s.log("wrote " + std::to_string(spec.num_scenes) + " scenes");
}

void split(Stage& s) {
  const auto ids = list_scene_ids(s);
  const fs::path root = scenes_root(s);
  std::vector<SceneTag> tags;
  for (const auto& id : ids) tags.push_back({id, read_scene_meta(s.need(root / id, "synth-data")).biome});
  const SplitAssignment a = assign_splits(tags, split_ratio(s.config()), run_seed(s.config()));
  for (const auto& w : a.warnings) s.log("warning: " + w);

  std::vector<Scene> train;
  for (const auto& id : a.train) train.push_back(load_scene(s.out() / root / id));
  std::vector<const Scene*> ptrs;
  for (const auto& sc : train) ptrs.push_back(&sc);
  if (ptrs.empty()) throw Error("split: the training split is empty");
  const BandStats stats = compute_band_stats(ptrs, s.config().get_float("data.lo_percentile"),
                                             s.config().get_float("data.hi_percentile"));

  write_id_list(a.train, s.produce("splits/train.json"));
  write_id_list(a.val, s.produce("splits/val.json"));
  write_id_list(a.test, s.produce("splits/test.json"));
  write_band_stats(stats, s.produce("splits/band_stats.json"));
  const json summary = {{"ratio", {a.ratio.train, a.ratio.val, a.ratio.test}},
                        {"seed", a.seed},
                        {"counts", {a.train.size(), a.val.size(), a.test.size()}},
                        {"warnings", a.warnings}};
  write_text_file(s.produce("splits/split.json"), summary.dump(2) + "\n");
  s.log(std::to_string(a.train.size()) + "/" + std::to_string(a.val.size()) + "/" + std::to_string(a.test.size()) +
        " scenes");
}

void train_fcd_stage(Stage& s) {
  const Corpus c = load_corpus(s);
  const auto train = split_patches(s, c, c.train);
  const auto val = split_patches(s, c, c.val);
  if (train.empty()) throw Error("train-fcd: no training patches");
  const GanTrainConfig cfg = gan_config(s.config());
  const auto arch = fcd_architecture(s.config(), train.front().data.channels);
  s.log(std::to_string(train.size()) + " training patches, " + std::to_string(cfg.iterations) + " iterations");

  const fs::path ckpt = s.produce("fcd/generator.ckpt");
  const auto result = train_fcd(refs(train), refs(val), cfg, arch, ckpt, [&](const LossRecord& r) {
    if (r.iteration % cfg.checkpoint_every == 0 || r.iteration == cfg.iterations)
      s.log("iteration " + std::to_string(r.iteration) + " L_D " + std::to_string(r.loss_d) + " L_G " +
            std::to_string(r.loss_g));
  });
  write_text_file(s.produce("fcd/loss_trace.csv"), loss_trace_csv(result.losses));
  std::string evals = "iteration,val_f1,threshold\n";
  for (const auto& e : result.evaluations) {
    char line[128];
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g\n", static_cast<long long>(e.iteration), e.val_f1,
                  static_cast<double>(e.threshold));
    evals += line;
  }
  write_text_file(s.produce("fcd/evaluations.csv"), evals);
  s.log("selected iteration " + std::to_string(result.best_iteration) + " with val F1 " +
        std::to_string(result.best_val_f1));
}

void make_masks(Stage& s) {
  const Checkpoint ck = load_checkpoint(s.need("fcd/generator.ckpt", "train-fcd"));
  const Corpus c = load_corpus(s);
  const float threshold = ck.extra.at("threshold").get<float>();
  const GeneratorFn g = inference(load_generator(ck));
  const int p = patch_size(s);
  const double max_nodata = s.config().get_float("data.max_nodata_fraction");

  for (const auto& id : c.train) {
    const TiledScene tiled = tile_scene(load_normalized(s, c, id), p, max_nodata);
    const auto masks = predict_patch_masks(g, refs(tiled.patches), threshold, true);
    write_mask(assemble(tiled, masks), s.produce(mask_path("fcd", "pseudo", id)));
  }
  for (const auto& id : c.test) {
    const TiledScene tiled = tile_scene(load_normalized(s, c, id), p, 1.0);
    const PatchRefs all = refs(tiled.patches);
    const auto maps = difference_maps(g, all);
    std::vector<PlacedMask> masks;
    std::vector<Placed<float>> scores;
    for (std::size_t i = 0; i < all.size(); ++i) {
      masks.push_back({all[i]->origin, binarize(maps[i], threshold)});
      scores.push_back({all[i]->origin, maps[i]});
    }
    write_mask(stitch_masks(masks, tiled.grid), s.produce(mask_path("fcd", "test", id)));
    write_score_map(stitch_scores(scores, tiled.grid), s.produce(fs::path("masks/fcd/test") / id / "diff.bin"));
  }
  write_record(s, "fcd",
               {{"threshold", threshold}, {"checkpoint_id", checkpoint_id(ck)}, {"val_f1", ck.val_f1.value_or(0.0)}});
  s.log("threshold " + std::to_string(threshold) + ", val F1 " + std::to_string(ck.val_f1.value_or(0.0)));
}

void train_cam(Stage& s) {
  const Corpus c = load_corpus(s);
  const auto train = split_patches(s, c, c.train);
  const auto val = split_patches(s, c, c.val);
  if (train.empty()) throw Error("train-cam: no training patches");
  const auto result = train_classifier(refs(train), refs(val), classifier_config(s.config()),
                                       classifier_options(s.config(), train.front().data.channels));
  save_checkpoint(result.best, s.produce("cam/classifier.ckpt"));
  std::string csv = "epoch,train_loss,val_accuracy\n";
  for (const auto& e : result.history) {
    char line[128];
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_accuracy);
    csv += line;
  }
  write_text_file(s.produce("cam/epochs.csv"), csv);
  s.log("best val accuracy " + std::to_string(result.best_val_accuracy) + " at epoch " +
        std::to_string(result.best_epoch));
}

void cam_masks(Stage& s) {
  const Checkpoint ck = load_checkpoint(s.need("cam/classifier.ckpt", "train-cam"));
  const Corpus c = load_corpus(s);
  PatchClassifier clf = load_classifier(ck);
  const auto val = split_patches(s, c, c.val);
  const int p = patch_size(s);
  const int grid_points = static_cast<int>(s.config().get_int("mask.grid_points"));
  const double max_nodata = s.config().get_float("data.max_nodata_fraction");

  for (CamMethod method : all_cam_methods()) {
    const std::string tag = to_string(method);
    const ThresholdSelection sel = cam_pseudo_masks(clf, {}, refs(val), method, true, grid_points).selection;
    for (const auto& id : c.train) {
      const TiledScene tiled = tile_scene(load_normalized(s, c, id), p, max_nodata);
      const PatchRefs all = refs(tiled.patches);
      const auto maps = activation_maps(clf, all, method);
      std::vector<Mask> masks;
      for (std::size_t i = 0; i < all.size(); ++i)
        masks.push_back(all[i]->image_label == DomainLabel::Clear ? Mask(p, p, 0) : binarize(maps[i], sel.threshold));
      write_mask(assemble(tiled, masks), s.produce(mask_path(tag, "pseudo", id)));
    }
    for (const auto& id : c.test) {
      const TiledScene tiled = tile_scene(load_normalized(s, c, id), p, 1.0);
      const PatchRefs all = refs(tiled.patches);
      const auto maps = activation_maps(clf, all, method);
      std::vector<PlacedMask> placed;
      for (std::size_t i = 0; i < all.size(); ++i) placed.push_back({all[i]->origin, binarize(maps[i], sel.threshold)});
      write_mask(stitch_masks(placed, tiled.grid), s.produce(mask_path(tag, "test", id)));
    }
    write_record(s, tag, {{"threshold", sel.threshold}, {"checkpoint_id", checkpoint_id(ck)}, {"val_f1", sel.f1}});
    s.log(tag + " val F1 " + std::to_string(sel.f1));
  }
}

void write_seg_outputs(Stage& s, const Corpus& c, SegTrainResult& result, const std::string& dir,
                       const std::string& method) {
  save_checkpoint(result.best, s.produce(fs::path(dir) / "segnet.ckpt"));
  write_text_file(s.produce(fs::path(dir) / "epochs.csv"), epoch_metrics_csv(result.history));
  for (const auto& id : c.test)
    write_mask(predict_scene(result.net, load_normalized(s, c, id), patch_size(s)),
               s.produce(mask_path(method, "test", id)));
  write_record(s, method,
               {{"threshold", 0.5}, {"checkpoint_id", checkpoint_id(result.best)}, {"val_f1", result.best_val_f1}});
  s.log("best val F1 " + std::to_string(result.best_val_f1) + " at epoch " + std::to_string(result.best_epoch));
}

void train_fcdplus_stage(Stage& s) {
  s.need("masks/fcd/record.json", "make-masks");
  const Corpus c = load_corpus(s);
  const auto train = split_patches(s, c, c.train);
  const auto val = split_patches(s, c, c.val);
  if (train.empty()) throw Error("train-fcdplus: no training patches");
  const int p = patch_size(s);
  const double max_nodata = s.config().get_float("data.max_nodata_fraction");

  std::map<std::string, Mask> pseudo;
  for (const auto& id : c.train) {
    Scene scene = load_normalized(s, c, id);
    scene.pixel_labels = read_mask(s.need(mask_path("fcd", "pseudo", id), "make-masks"), scene.height(), scene.width());
    for (auto& patch : tile_scene(scene, p, max_nodata).patches) pseudo.emplace(patch.id(), std::move(*patch.pixel_mask));
  }
  auto result = train_fcdplus(refs(train), pseudo, refs(val), refine_config(s.config()),
                              segnet_options(s.config(), train.front().data.channels));
  write_seg_outputs(s, c, result, "fcdplus", "fcdplus");
}

void finetune_stage(Stage& s) {
  const Checkpoint parent = load_checkpoint(s.need("fcdplus/segnet.ckpt", "train-fcdplus"));
  const Corpus c = load_corpus(s);
  const auto train = split_patches(s, c, c.train);
  const auto val = split_patches(s, c, c.val);
  const FinetuneConfig cfg = finetune_config(s.config());
  const PatchRefs labeled = select_labeled_fraction(refs(train), cfg.label_fraction, cfg.seed);
  std::vector<std::string> ids;
  for (const Patch* p : labeled) ids.push_back(p->id());
  write_id_list(ids, s.produce("fcdplus_ft/labeled.json"));
  s.log(std::to_string(labeled.size()) + " labeled patches of " + std::to_string(train.size()));
  auto result = finetune(parent, labeled, refs(val), cfg);
  write_seg_outputs(s, c, result, "fcdplus_ft", "fcdplus_ft");
}

void evaluate(Stage& s) {
  s.need("masks/fcd/record.json", "make-masks");
  const Corpus c = load_corpus(s);
  const int p = patch_size(s);
  std::vector<Scene> scenes;
  for (const auto& id : c.test) {
    Scene scene = load_raw(s, c, id);
    if (!scene.pixel_labels) throw Error("evaluate: test scene " + id + " has no ground truth");
    scenes.push_back(std::move(scene));
  }
  std::vector<Mask> valid(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (scenes[i].nodata) {
      valid[i] = *scenes[i].nodata;
      for (auto& v : valid[i].values) v = v ? 0 : 1;
    }

  for (const auto& method : mask_methods()) {
    const fs::path record_file = fs::path("masks") / method / "record.json";
    if (!fs::exists(s.out() / record_file)) continue;
    const json record = json::parse(read_text_file(s.need(record_file, "make-masks")));
    std::vector<Mask> preds;
    for (const auto& scene : scenes)
      preds.push_back(read_mask(s.need(mask_path(method, "test", scene.id), "make-masks"), scene.height(), scene.width()));
    std::vector<SceneEvaluation> evals;
    int holes = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      evals.push_back({scenes[i].id, scenes[i].biome.value_or(""), &preds[i], &*scenes[i].pixel_labels,
                       scenes[i].nodata ? &valid[i] : nullptr});
      holes += count_patch_holes(preds[i], *scenes[i].pixel_labels, p);
    }
    MetricsReport report = evaluate_method(method, evals, run_seed(s.config()),
                                           record.at("checkpoint_id").get<std::string>(),
                                           record.at("threshold").get<double>());
    report.extras["patch_holes"] = holes;
    report.extras["val_f1"] = record.at("val_f1").get<double>();
    write_text_file(s.produce(fs::path("eval") / (method + ".json")), to_json(report).dump(2) + "\n");
    s.log(method + " test F1 " + std::to_string(report.overall.scores.f1) + ", holes " + std::to_string(holes));
  }
}

void report(Stage& s) {
  s.need("eval/fcd.json", "evaluate");
  const Corpus c = load_corpus(s);
  std::vector<MetricsReport> reports;
  for (const auto& method : mask_methods()) {
    const fs::path file = fs::path("eval") / (method + ".json");
    if (fs::exists(s.out() / file)) reports.push_back(report_from_json(json::parse(read_text_file(s.need(file, "evaluate")))));
  }

  std::array<int, 3> rgb{};
  {
    std::stringstream bands(s.config().get_string("report.rgb_bands"));
    std::string item;
    for (int k = 0; k < 3 && std::getline(bands, item, ','); ++k) rgb[static_cast<std::size_t>(k)] = std::stoi(item);
  }
  const auto n = std::min<std::size_t>(c.test.size(), static_cast<std::size_t>(s.config().get_int("report.panels")));
  std::vector<Scene> scenes;
  std::vector<ScoreMap> diffs;
  std::vector<Mask> fcd, fcdplus;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = c.test[i];
    scenes.push_back(load_normalized(s, c, id));
    const int h = scenes.back().height(), w = scenes.back().width();
    if (!scenes.back().pixel_labels) throw Error("report: test scene " + id + " has no ground truth");
    diffs.push_back(read_score_map(s.need(fs::path("masks/fcd/test") / id / "diff.bin", "make-masks"), h, w));
    fcd.push_back(read_mask(s.need(mask_path("fcd", "test", id), "make-masks"), h, w));
    fcdplus.push_back(read_mask(s.need(mask_path("fcdplus", "test", id), "train-fcdplus"), h, w));
  }
  std::vector<PanelInputs> panels;
  for (std::size_t i = 0; i < n; ++i)
    panels.push_back({scenes[i].id, &scenes[i].bands, rgb, &diffs[i], &fcd[i], &fcdplus[i], &*scenes[i].pixel_labels});

  s.produce("report/report.json");
  s.produce("report/table.csv");
  for (const auto& panel : panels) s.produce(fs::path("report/panels") / (panel.name + ".png"));
  emit_artifacts(reports, panels, s.out() / "report", static_cast<int>(s.config().get_int("report.thumbnail")));
  s.log("wrote " + std::to_string(reports.size()) + " method rows and " + std::to_string(panels.size()) + " panels");
}

}  // namespace

void run_command(const std::string& command, const StageContext& ctx) {
  ctx.config.validate();
  Stage stage(ctx, command);
  if (command == "synth-data")
    synth_data(stage);
  else if (command == "split")
    split(stage);
  else if (command == "train-fcd")
    train_fcd_stage(stage);
  else if (command == "make-masks")
    make_masks(stage);
  else if (command == "train-cam")
    train_cam(stage);
  else if (command == "cam-masks")
    cam_masks(stage);
  else if (command == "train-fcdplus")
    train_fcdplus_stage(stage);
  else if (command == "finetune")
    finetune_stage(stage);
  else if (command == "evaluate")
    evaluate(stage);
  else if (command == "report")
    report(stage);
  else
    throw Error("unknown command '" + command + "'");
  stage.finish();
}

}  // namespace fcd
