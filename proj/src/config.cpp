#include "fcd/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

namespace fcd {

namespace {

using I = std::int64_t;

ConfigKey key(std::string name, I v, std::string help) { return {std::move(name), ConfigType::Int, v, std::move(help)}; }
ConfigKey key(std::string name, double v, std::string help) {
  return {std::move(name), ConfigType::Float, v, std::move(help)};
}
ConfigKey key(std::string name, bool v, std::string help) {
  return {std::move(name), ConfigType::Bool, v, std::move(help)};
}
ConfigKey key(std::string name, const char* v, std::string help) {
  return {std::move(name), ConfigType::String, std::string(v), std::move(help)};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const ConfigKey& schema_entry(const std::string& name) {
  for (const auto& k : config_schema())
    if (k.name == name) return k;
  throw Error("config: unknown key '" + name + "'");
}

std::string type_name(ConfigType t) {
  switch (t) {
    case ConfigType::Int:
      return "integer";
    case ConfigType::Float:
      return "number";
    case ConfigType::Bool:
      return "boolean";
    case ConfigType::String:
      return "string";
  }
  return "?";
}

ConfigValue parse_value(const ConfigKey& k, const std::string& raw) {
  std::string text = trim(raw);
  const auto bad = [&]() { return Error("config: key '" + k.name + "' expects " + type_name(k.type) + ", got '" + text + "'"); };
  switch (k.type) {
    case ConfigType::Int: {
      I v = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size() || text.empty()) throw bad();
      return v;
    }
    case ConfigType::Float: {
      double v = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size() || text.empty() || !std::isfinite(v)) throw bad();
      return v;
    }
    case ConfigType::Bool:
      if (text == "true" || text == "1" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "no") return false;
      throw bad();
    case ConfigType::String:
      if (text.size() >= 2 && text.front() == '"' && text.back() == '"') text = text.substr(1, text.size() - 2);
      return text;
  }
  throw bad();
}

std::string format_value(const ConfigValue& v) {
  if (const auto* i = std::get_if<I>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, *d);
    return std::string(buf, p);
  }
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  return std::get<std::string>(v);
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      key("seed", I{0}, "run seed shared by every stage"),
      key("data.scenes_dir", "", "external scene corpus; empty means <out>/scenes from synth-data"),
      key("data.patch_size", I{128}, "patch edge P in pixels"),
      key("data.lo_percentile", 1.0, "lower band-stat percentile over the training split"),
      key("data.hi_percentile", 99.0, "upper band-stat percentile over the training split"),
      key("data.max_nodata_fraction", 0.5, "tiles with more nodata are dropped"),
      key("split.train", I{6}, "split ratio, train part"),
      key("split.val", I{2}, "split ratio, validation part"),
      key("split.test", I{4}, "split ratio, test part"),
      key("synth.num_scenes", I{60}, "synthetic scenes"),
      key("synth.height", I{256}, "synthetic scene height"),
      key("synth.width", I{256}, "synthetic scene width"),
      key("synth.channels", I{3}, "synthetic band count"),
      key("synth.cloud_density", 0.5, "mean cloud cover control in [0, 1]"),
      key("synth.alpha_threshold", 0.2, "cloud ground truth is alpha > this"),
      key("synth.snow_fraction", 0.3, "share of scenes with snow cover"),
      key("synth.haze_fraction", 0.5, "share of cloudy scenes with a thin haze sheet"),
      key("synth.biome", "synthetic", "biome tag of synthetic scenes"),
      key("gan.iterations", I{200000}, "generator updates"),
      key("gan.batch_size", I{16}, "patches per batch"),
      key("gan.lr_g", 1e-4, "generator learning rate"),
      key("gan.lr_d", 1e-4, "discriminator learning rate"),
      key("gan.beta1", 0.5, "Adam beta1"),
      key("gan.beta2", 0.999, "Adam beta2"),
      key("gan.d_steps", I{5}, "discriminator updates per generator update"),
      key("gan.checkpoint_every", I{10000}, "validation interval in iterations"),
      key("gan.adversarial_variant", "logistic", "logistic or gradient-penalty"),
      key("gan.generator_form", "non-saturating", "non-saturating or saturating"),
      key("gan.lambda_cls", 1.0, "domain classification weight"),
      key("gan.lambda_cyc", 10.0, "cycle consistency weight"),
      key("gan.lambda_id", 10.0, "conditional identity weight"),
      key("gan.lambda_gp", 10.0, "gradient penalty weight (gradient-penalty variant)"),
      key("gan.decay_start", 0.5, "fraction of training after which learning rates decay linearly"),
      key("gan.max_val_patches", I{0}, "cap on cloudy validation patches for selection (0 = all)"),
      key("gan.g_width", I{64}, "generator base width"),
      key("gan.g_down", I{2}, "generator downsampling blocks"),
      key("gan.g_res", I{6}, "generator residual blocks"),
      key("gan.d_width", I{64}, "discriminator base width"),
      key("gan.d_layers", I{6}, "discriminator stride-2 layers"),
      key("mask.grid_points", I{256}, "threshold sweep grid size"),
      key("cam.epochs", I{10}, "classifier epochs"),
      key("cam.batch_size", I{64}, "classifier batch size"),
      key("cam.lr", 1e-3, "classifier learning rate"),
      key("cam.width", I{16}, "classifier base width"),
      key("cam.stages", I{2}, "classifier downsampling stages"),
      key("refine.epochs", I{30}, "FCD+ epochs"),
      key("refine.batch_size", I{64}, "FCD+ batch size"),
      key("refine.lr", 1e-4, "FCD+ initial learning rate"),
      key("refine.patience", I{3}, "epochs without val F1 gain before the lr drop"),
      key("refine.drop_factor", 10.0, "lr divisor on plateau"),
      key("refine.aux_weight", 1.0, "image-level auxiliary loss weight"),
      key("refine.width", I{64}, "segmentation net base width"),
      key("refine.depth", I{5}, "segmentation net encoder stages"),
      key("finetune.label_fraction", 0.01, "share of training patches with visible pixel labels"),
      key("finetune.lr", 1e-5, "fine-tuning learning rate"),
      key("finetune.freeze_encoder", true, "keep encoder weights fixed"),
      key("finetune.epochs", I{30}, "fine-tuning epochs"),
      key("finetune.batch_size", I{64}, "fine-tuning batch size"),
      key("report.panels", I{4}, "test scenes rendered as figure panels"),
      key("report.thumbnail", I{128}, "panel thumbnail width in pixels"),
      key("report.rgb_bands", "0,1,2", "bands used for the RGB composite"),
  };
  return schema;
}

RunConfig::RunConfig() {
  for (const auto& k : config_schema()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig c;
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(origin + ":" + std::to_string(number) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(origin + ":" + std::to_string(number) + ": expected key = value");
    const std::string name = trim(line.substr(0, eq));
    try {
      c.set(section.empty() ? name : section + "." + name, line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& file) {
  std::ifstream f(file);
  if (!f) throw Error("config: cannot read " + file.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return from_text(buf.str(), file.string());
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("config: override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::set(const std::string& name, const std::string& value) {
  values_[name] = parse_value(schema_entry(name), value);
}

const ConfigValue& RunConfig::at(const std::string& name, ConfigType type) const {
  if (schema_entry(name).type != type) throw Error("config: key '" + name + "' is not a " + type_name(type));
  return values_.at(name);
}

I RunConfig::get_int(const std::string& k) const { return std::get<I>(at(k, ConfigType::Int)); }
double RunConfig::get_float(const std::string& k) const { return std::get<double>(at(k, ConfigType::Float)); }
bool RunConfig::get_bool(const std::string& k) const { return std::get<bool>(at(k, ConfigType::Bool)); }
std::string RunConfig::get_string(const std::string& k) const {
  return std::get<std::string>(at(k, ConfigType::String));
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + format_value(v) + "\n";
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(canonical_text()); }

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) std::visit([&](const auto& x) { j[k] = x; }, v);
  return j;
}

void RunConfig::validate() const {
  const auto positive = [&](const char* k) {
    if (get_int(k) < 1) throw Error(std::string("config: ") + k + " must be positive");
  };
  for (const char* k : {"data.patch_size", "synth.num_scenes", "synth.height", "synth.width", "synth.channels",
                        "gan.g_width", "gan.d_width", "gan.d_layers", "cam.width", "refine.width", "refine.depth",
                        "report.thumbnail"})
    positive(k);
  for (const char* k : {"split.train", "split.val", "split.test", "gan.g_down", "gan.g_res", "cam.stages",
                        "report.panels"})
    if (get_int(k) < 0) throw Error(std::string("config: ") + k + " must be >= 0");
  const auto p = get_int("data.patch_size");
  if (p % (I{1} << get_int("gan.d_layers")) != 0)
    throw Error("config: data.patch_size must be divisible by 2^gan.d_layers");
  if (p % (I{1} << get_int("gan.g_down")) != 0) throw Error("config: data.patch_size must be divisible by 2^gan.g_down");
  if (p % (I{1} << get_int("cam.stages")) != 0) throw Error("config: data.patch_size must be divisible by 2^cam.stages");
  if (p % (I{1} << (get_int("refine.depth") - 1)) != 0)
    throw Error("config: data.patch_size must be divisible by 2^(refine.depth - 1)");
  const double lo = get_float("data.lo_percentile"), hi = get_float("data.hi_percentile");
  if (!(lo >= 0.0 && lo < hi && hi <= 100.0)) throw Error("config: need 0 <= data.lo_percentile < data.hi_percentile <= 100");
  const double nodata = get_float("data.max_nodata_fraction");
  if (!(nodata >= 0.0 && nodata <= 1.0)) throw Error("config: data.max_nodata_fraction must lie in [0, 1]");
  if (split_ratio(*this).total() < 1) throw Error("config: split ratio must not be all zero");
  if (get_int("mask.grid_points") < 1) throw Error("config: mask.grid_points must be positive");
  fcd::validate(synth_spec(*this));
  fcd::validate(gan_config(*this));
  fcd::validate(classifier_config(*this));
  fcd::validate(refine_config(*this));
  fcd::validate(finetune_config(*this));
  std::stringstream bands(get_string("report.rgb_bands"));
  std::string item;
  int count = 0;
  while (std::getline(bands, item, ',')) {
    ++count;
    I b = -1;
    const auto t = trim(item);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), b);
    if (ec != std::errc() || ptr != t.data() + t.size() || b < 0) throw Error("config: report.rgb_bands must list band indices");
  }
  if (count != 3) throw Error("config: report.rgb_bands must list exactly three bands");
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::uint64_t run_seed(const RunConfig& c) { return static_cast<std::uint64_t>(c.get_int("seed")); }

SynthSpec synth_spec(const RunConfig& c) {
  SynthSpec s;
  s.num_scenes = static_cast<int>(c.get_int("synth.num_scenes"));
  s.height = static_cast<int>(c.get_int("synth.height"));
  s.width = static_cast<int>(c.get_int("synth.width"));
  s.channels = static_cast<int>(c.get_int("synth.channels"));
  s.cloud_density = c.get_float("synth.cloud_density");
  s.alpha_threshold = c.get_float("synth.alpha_threshold");
  s.snow_fraction = c.get_float("synth.snow_fraction");
  s.haze_fraction = c.get_float("synth.haze_fraction");
  s.biome = c.get_string("synth.biome");
  s.seed = run_seed(c);
  return s;
}

SplitRatio split_ratio(const RunConfig& c) {
  return {static_cast<int>(c.get_int("split.train")), static_cast<int>(c.get_int("split.val")),
          static_cast<int>(c.get_int("split.test"))};
}

GanTrainConfig gan_config(const RunConfig& c) {
  GanTrainConfig g;
  g.iterations = c.get_int("gan.iterations");
  g.batch_size = static_cast<int>(c.get_int("gan.batch_size"));
  g.lr_g = c.get_float("gan.lr_g");
  g.lr_d = c.get_float("gan.lr_d");
  g.beta1 = c.get_float("gan.beta1");
  g.beta2 = c.get_float("gan.beta2");
  g.d_steps_per_g_step = static_cast<int>(c.get_int("gan.d_steps"));
  g.seed = run_seed(c);
  g.checkpoint_every = c.get_int("gan.checkpoint_every");
  const auto variant = c.get_string("gan.adversarial_variant");
  if (variant == "logistic")
    g.adversarial_variant = AdversarialVariant::Logistic;
  else if (variant == "gradient-penalty")
    g.adversarial_variant = AdversarialVariant::GradientPenalty;
  else
    throw Error("config: gan.adversarial_variant must be logistic or gradient-penalty");
  const auto form = c.get_string("gan.generator_form");
  if (form == "non-saturating")
    g.generator_form = GeneratorAdversarialForm::NonSaturating;
  else if (form == "saturating")
    g.generator_form = GeneratorAdversarialForm::Saturating;
  else
    throw Error("config: gan.generator_form must be non-saturating or saturating");
  g.weights = {c.get_float("gan.lambda_cls"), c.get_float("gan.lambda_cyc"), c.get_float("gan.lambda_id")};
  g.lambda_gp = c.get_float("gan.lambda_gp");
  g.decay_start_fraction = c.get_float("gan.decay_start");
  g.threshold_grid_points = static_cast<int>(c.get_int("mask.grid_points"));
  g.max_val_patches = static_cast<int>(c.get_int("gan.max_val_patches"));
  return g;
}

FcdArchitecture fcd_architecture(const RunConfig& c, int channels) {
  FcdArchitecture a;
  a.generator = {channels, static_cast<int>(c.get_int("gan.g_width")), static_cast<int>(c.get_int("gan.g_down")),
                 static_cast<int>(c.get_int("gan.g_res"))};
  a.discriminator = {channels, static_cast<int>(c.get_int("data.patch_size")),
                     static_cast<int>(c.get_int("gan.d_width")), static_cast<int>(c.get_int("gan.d_layers"))};
  return a;
}

ClassifierTrainConfig classifier_config(const RunConfig& c) {
  return {static_cast<int>(c.get_int("cam.epochs")), static_cast<int>(c.get_int("cam.batch_size")),
          c.get_float("cam.lr"), run_seed(c)};
}

ClassifierOptions classifier_options(const RunConfig& c, int channels) {
  return {channels, static_cast<int>(c.get_int("cam.width")), static_cast<int>(c.get_int("cam.stages"))};
}

RefineConfig refine_config(const RunConfig& c) {
  RefineConfig r;
  r.epochs = static_cast<int>(c.get_int("refine.epochs"));
  r.batch_size = static_cast<int>(c.get_int("refine.batch_size"));
  r.lr = c.get_float("refine.lr");
  r.patience = static_cast<int>(c.get_int("refine.patience"));
  r.drop_factor = c.get_float("refine.drop_factor");
  r.aux_weight = c.get_float("refine.aux_weight");
  r.seed = run_seed(c);
  return r;
}

SegNetOptions segnet_options(const RunConfig& c, int channels) {
  return {channels, static_cast<int>(c.get_int("refine.width")), static_cast<int>(c.get_int("refine.depth"))};
}

FinetuneConfig finetune_config(const RunConfig& c) {
  FinetuneConfig f;
  f.label_fraction = c.get_float("finetune.label_fraction");
  f.lr = c.get_float("finetune.lr");
  f.freeze_encoder = c.get_bool("finetune.freeze_encoder");
  f.epochs = static_cast<int>(c.get_int("finetune.epochs"));
  f.batch_size = static_cast<int>(c.get_int("finetune.batch_size"));
  f.patience = static_cast<int>(c.get_int("refine.patience"));
  f.drop_factor = c.get_float("refine.drop_factor");
  f.aux_weight = c.get_float("refine.aux_weight");
  f.seed = run_seed(c);
  return f;
}

}  // namespace fcd
