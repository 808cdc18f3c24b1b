#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "fcd/networks.hpp"

namespace fcd {

/// Self-describing checkpoint container:
///
///   bytes 0..7   magic "FCDCKPT1"
///   bytes 8..15  header length N, uint64 little-endian
///   N bytes      JSON header {kind, config, iteration, val_f1, extra, tensors[]}
///   remainder    tensor blobs, little-endian, at the offsets listed in the header
struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  std::int64_t iteration = 0;
  std::optional<double> val_f1;
  nlohmann::json extra = nlohmann::json::object();
  StateDict tensors;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

/// Short stable identifier: kind, iteration and a content hash.
std::string checkpoint_id(const Checkpoint& checkpoint);

nlohmann::json to_json(const GeneratorOptions& o);
nlohmann::json to_json(const DiscriminatorOptions& o);
nlohmann::json to_json(const ClassifierOptions& o);
nlohmann::json to_json(const SegNetOptions& o);
GeneratorOptions generator_options_from_json(const nlohmann::json& j);
ClassifierOptions classifier_options_from_json(const nlohmann::json& j);
SegNetOptions segnet_options_from_json(const nlohmann::json& j);

/// Rebuild a network from the architecture echoed in the checkpoint config.
Generator load_generator(const Checkpoint& checkpoint);
PatchClassifier load_classifier(const Checkpoint& checkpoint);
SegNet load_segnet(const Checkpoint& checkpoint);

}  // namespace fcd
