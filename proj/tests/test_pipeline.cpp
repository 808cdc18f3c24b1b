#include <array>
#include <cstdio>

#include <gtest/gtest.h>

#include "fcd/pipeline.hpp"
#include "fcd/scene_io.hpp"
#include "support.hpp"

namespace fcd {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

StageContext context(const fs::path& out) { return {RunConfig::from_text(testing::tiny_config_text()), out, nullptr}; }

// Every regular file under root keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text_file(e.path());
  return out;
}

struct Exec {
  int status = 0;
  std::string output;
};

Exec run_cli(const std::string& args) {
  Exec r;
  const std::string cmd = std::string(FCD_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::array<char, 256> buf;
  while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

TEST(Pipeline, EvaluateBeforeMakeMasksNamesTheProducer) {
  TempDir tmp("order");
  try {
    run_command("evaluate", context(tmp.path()));
    FAIL() << "expected MissingArtifact";
  } catch (const MissingArtifact& e) {
    EXPECT_EQ(e.producer(), "make-masks");
    EXPECT_NE(std::string(e.what()).find("make-masks"), std::string::npos);
  }
}

TEST(Pipeline, EveryStageNeedsItsUpstream) {
  TempDir tmp("upstream");
  const std::map<std::string, std::string> producer{{"split", "synth-data"},        {"train-fcd", "split"},
                                                    {"make-masks", "train-fcd"},    {"train-cam", "split"},
                                                    {"cam-masks", "train-cam"},     {"train-fcdplus", "make-masks"},
                                                    {"finetune", "train-fcdplus"}, {"report", "evaluate"}};
  for (const auto& [cmd, prod] : producer) {
    try {
      run_command(cmd, context(tmp.path()));
      ADD_FAILURE() << cmd << " ran without inputs";
    } catch (const MissingArtifact& e) {
      EXPECT_EQ(e.producer(), prod) << cmd;
    }
  }
}

TEST(Pipeline, UnknownCommandIsRejected) {
  TempDir tmp("unknown");
  EXPECT_THROW(run_command("train-everything", context(tmp.path())), Error);
}

TEST(Pipeline, SynthDataIsByteIdenticalAcrossRuns) {
  TempDir a("synth-a"), b("synth-b");
  run_command("synth-data", context(a.path()));
  run_command("synth-data", context(b.path()));
  const auto sa = snapshot(a.path()), sb = snapshot(b.path());
  EXPECT_EQ(sa.size(), 12u * 3 + 1);  // meta, bands, labels per scene plus the manifest
  EXPECT_EQ(sa, sb);
}

TEST(Pipeline, FullChainProducesReportAndIsResumable) {
  TempDir tmp("chain");
  const auto ctx = context(tmp.path());
  for (const auto& cmd : pipeline_commands()) ASSERT_NO_THROW(run_command(cmd, ctx)) << cmd;
  const fs::path out = tmp.path();
  EXPECT_TRUE(fs::exists(out / "report/report.json"));
  EXPECT_TRUE(fs::exists(out / "report/table.csv"));
  const auto report = nlohmann::json::parse(read_text_file(out / "report/report.json"));
  EXPECT_EQ(report["methods"].size(), mask_methods().size());
  for (const auto& m : mask_methods()) EXPECT_TRUE(fs::exists(out / "eval" / (m + ".json"))) << m;

  for (const auto& cmd : pipeline_commands()) {
    const auto manifest = nlohmann::json::parse(read_text_file(out / "manifests" / (cmd + ".json")));
    EXPECT_EQ(manifest["config_hash"], ctx.config.hash()) << cmd;
    EXPECT_EQ(manifest["command"], cmd);
  }

  // dropping downstream artifacts and re-running reproduces them without touching upstream ones
  const auto before = snapshot(out);
  fs::remove_all(out / "eval");
  fs::remove_all(out / "report");
  run_command("evaluate", ctx);
  run_command("report", ctx);
  EXPECT_EQ(snapshot(out), before);

  // a retrained stage with the same config reproduces its outputs exactly
  fs::remove_all(out / "fcdplus");
  run_command("train-fcdplus", ctx);
  EXPECT_EQ(snapshot(out), before);
}

TEST(Cli, EvaluateFirstExitsWithTheProducerName) {
  TempDir tmp("cli");
  const auto r = run_cli("evaluate --out " + tmp.path().string());
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.output.find("make-masks"), std::string::npos) << r.output;
}

TEST(Cli, MissingOutputRootAndBadOverride) {
  const auto no_out = run_cli("synth-data");
  if (std::getenv("FCD_OUT") == nullptr) EXPECT_EQ(no_out.status, 2) << no_out.output;
  TempDir tmp("cli-set");
  const auto bad = run_cli("synth-data --out " + tmp.path().string() + " --set gan.nonsense=1");
  EXPECT_EQ(bad.status, 1);
  EXPECT_NE(bad.output.find("gan.nonsense"), std::string::npos) << bad.output;
}

TEST(Cli, ConfigCommandPrintsTheHash) {
  TempDir tmp("cli-cfg");
  write_text_file(tmp.path() / "t.cfg", testing::tiny_config_text());
  const auto r = run_cli("config --config " + (tmp.path() / "t.cfg").string() + " --seed 9");
  EXPECT_EQ(r.status, 0);
  auto c = RunConfig::from_text(testing::tiny_config_text());
  c.set("seed", "9");
  EXPECT_NE(r.output.find("# hash " + c.hash()), std::string::npos) << r.output;
}

}  // namespace
}  // namespace fcd
