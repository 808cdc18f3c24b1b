// fcd: staged weakly-supervised cloud detection pipeline.
//
//   fcd <command> --config configs/desk.cfg --out runs/desk [--seed N] [--set key=value ...]

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "fcd/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised cloud detection: FCD, CAM baselines and FCD+"};
  app.require_subcommand(1);

  std::string config_file;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::int64_t seed = 0;
  bool quiet = false;
  auto* seed_opt = app.add_option("--seed", seed, "run seed (overrides the config)");
  app.add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output root (default: $FCD_OUT)");
  app.add_option("--set", overrides, "override a config key, key=value")->take_all();
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  for (const auto& name : fcd::pipeline_commands()) app.add_subcommand(name)->fallthrough();
  app.add_subcommand("config", "print the effective configuration and exit")->fallthrough();
  app.add_subcommand("schema", "list every config key with its default")->fallthrough();

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    if (command == "schema") {
      for (const auto& k : fcd::config_schema()) {
        std::string def = std::visit(
            [](const auto& v) {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, std::string>)
                return v;
              else if constexpr (std::is_same_v<T, bool>)
                return std::string(v ? "true" : "false");
              else {
                std::ostringstream out;
                out << v;
                return out.str();
              }
            },
            k.default_value);
        std::cout << k.name << " = " << def << "    # " << k.help << "\n";
      }
      return 0;
    }

    fcd::RunConfig config = config_file.empty() ? fcd::RunConfig() : fcd::RunConfig::from_file(config_file);
    for (const auto& o : overrides) config.set(o);
    if (seed_opt->count() > 0) config.set("seed", std::to_string(seed));
    config.validate();
    if (command == "config") {
      std::cout << config.canonical_text() << "# hash " << config.hash() << "\n";
      return 0;
    }

    if (out_dir.empty()) {
      const char* env = std::getenv("FCD_OUT");
      if (env == nullptr || *env == '\0') {
        std::cerr << "error: no output root; pass --out or set FCD_OUT\n";
        return 2;
      }
      out_dir = env;
    }

    torch::set_num_threads(1);
    fcd::StageContext ctx{config, out_dir, nullptr};
    if (!quiet) ctx.log = [](const std::string& m) { std::cerr << m << std::endl; };
    fcd::run_command(command, ctx);
  } catch (const fcd::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
