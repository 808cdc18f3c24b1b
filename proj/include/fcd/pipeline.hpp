#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fcd/config.hpp"

namespace fcd {

/// Raised when a stage input is absent; names the command that produces it.
class MissingArtifact : public Error {
 public:
  MissingArtifact(const std::filesystem::path& path, std::string producer);
  const std::string& producer() const { return producer_; }

 private:
  std::string producer_;
};

struct StageContext {
  RunConfig config;
  std::filesystem::path out;
  std::function<void(const std::string&)> log;
};

/// Commands in pipeline order.
const std::vector<std::string>& pipeline_commands();

/// Method tags with test masks under <out>/masks, in report order.
const std::vector<std::string>& mask_methods();

/// Runs one stage. Inputs are read from and outputs written under ctx.out;
/// a manifest lands in <out>/manifests/<command>.json.
void run_command(const std::string& command, const StageContext& ctx);

}  // namespace fcd
