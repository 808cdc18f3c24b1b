#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcd/cam.hpp"
#include "fcd/data.hpp"
#include "fcd/gan_training.hpp"
#include "fcd/refinement.hpp"
#include "fcd/synthetic.hpp"

namespace fcd {

using ConfigValue = std::variant<std::int64_t, double, bool, std::string>;

enum class ConfigType { Int, Float, Bool, String };

struct ConfigKey {
  std::string name;
  ConfigType type;
  ConfigValue default_value;
  std::string help;
};

/// Every accepted key with its type and default. Defaults are the
/// full-scale settings; configs/desk.cfg holds the synthetic desk run.
const std::vector<ConfigKey>& config_schema();

/// Validated key-value configuration. Files use `key = value` lines with
/// optional `[section]` headers (keys inside become `section.key`) and `#`
/// comments. Unknown keys and ill-typed values are rejected.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& file);
  static RunConfig from_text(const std::string& text, const std::string& origin = "<text>");

  /// Applies a `key=value` override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  std::int64_t get_int(const std::string& key) const;
  double get_float(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;

  /// Sorted `key = value` lines covering every key.
  std::string canonical_text() const;
  /// SHA-256 of canonical_text(), lowercase hex.
  std::string hash() const;
  nlohmann::json to_json() const;

  /// Cross-field checks; throws Error naming the key.
  void validate() const;

 private:
  const ConfigValue& at(const std::string& key, ConfigType type) const;
  std::map<std::string, ConfigValue> values_;
};

std::string sha256_hex(const std::string& data);

// Typed views used by the pipeline stages.
std::uint64_t run_seed(const RunConfig& c);
SynthSpec synth_spec(const RunConfig& c);
SplitRatio split_ratio(const RunConfig& c);
GanTrainConfig gan_config(const RunConfig& c);
FcdArchitecture fcd_architecture(const RunConfig& c, int channels);
ClassifierTrainConfig classifier_config(const RunConfig& c);
ClassifierOptions classifier_options(const RunConfig& c, int channels);
RefineConfig refine_config(const RunConfig& c);
SegNetOptions segnet_options(const RunConfig& c, int channels);
FinetuneConfig finetune_config(const RunConfig& c);

}  // namespace fcd
