#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "plt/cli.hpp"

namespace plt {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "plt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("plt_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p.string();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const char* kTinyConfig = R"(
[model]
d_model = 16
n_layers = 1
n_heads = 2
n_kv_heads = 1
d_ff = 32
max_seq = 16
mode = plt
loops = 2
kv_share = true
gswa = true
window = 2

[task]
kind = copy
seq_len = 3
symbols = 4
seed = 1

[train]
batch = 4
steps = 6
warmup = 2
eval_batches = 1
)";

/// Trains the tiny config once and returns the run directory.
const std::string& trained_run() {
  static const std::string dir = [] {
    const std::string d = scratch("trained");
    fs::create_directories(d);
    std::ofstream(d + "/tiny.ini") << kTinyConfig;
    const Outcome r = run({"train", "--config", d + "/tiny.ini", "--out", d, "--quiet"});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

std::string checkpoint() { return trained_run() + "/" + cli::kCheckpointFile; }

int exit_status(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"train", "--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"fly"}).code, 2);
  EXPECT_EQ(run({"cost", "--L", "two"}).code, 2);
}

TEST(Cli, BinaryExitCodes) {
  EXPECT_EQ(exit_status(std::string(PLT_CLI_PATH) + " --help"), 0);
  EXPECT_EQ(exit_status(std::string(PLT_CLI_PATH) + " train --config /nonexistent.ini"), 2);
  EXPECT_EQ(exit_status(std::string(PLT_CLI_PATH) + " verify --random --tolerance 0"), 1);
  EXPECT_EQ(exit_status(std::string(PLT_CLI_PATH) + " cost"), 0);
}

TEST(CliTrain, WritesArtifacts) {
  const std::string d = trained_run();
  EXPECT_TRUE(fs::exists(d + "/" + cli::kCheckpointFile));
  EXPECT_TRUE(fs::exists(d + "/" + cli::kLossFile));
  const Checkpoint ck = load_checkpoint(checkpoint());
  EXPECT_EQ(ck.cfg.loops, 2);
  EXPECT_EQ(ck.meta.at("task").at("kind"), "copy");
  std::ifstream in(d + "/" + cli::kManifestFile);
  const auto m = nlohmann::json::parse(in);
  EXPECT_EQ(m.at("command"), "train");
  EXPECT_EQ(m.at("resolved").at("model").at("window"), 2);
  EXPECT_EQ(m.at("resolved").at("model").at("vocab"), 6);
  EXPECT_EQ(lines(std::string(std::istreambuf_iterator<char>(std::ifstream(d + "/" + cli::kLossFile).rdbuf()), {}))
                .size(),
            7u);
}

TEST(CliTrain, SeedOverrideChangesValuesNotSchema) {
  const std::string d = scratch("seeded");
  fs::create_directories(d);
  std::ofstream(d + "/tiny.ini") << kTinyConfig;
  ASSERT_EQ(run({"train", "-c", d + "/tiny.ini", "-o", d + "/a", "-q", "--set", "train.steps=2"}).code, 0);
  ASSERT_EQ(run({"train", "-c", d + "/tiny.ini", "-o", d + "/b", "-q", "--set", "train.steps=2", "--seed", "5"}).code, 0);
  auto load = [](const std::string& p) {
    std::ifstream in(p + "/" + cli::kManifestFile);
    return nlohmann::json::parse(in);
  };
  const auto a = load(d + "/a"), b = load(d + "/b");
  EXPECT_EQ(a.at("resolved").at("train").at("seed"), 0);
  EXPECT_EQ(b.at("resolved").at("train").at("seed"), 5);
  EXPECT_EQ(a.at("resolved").at("train").at("steps"), 2);
  std::vector<std::string> ka, kb;
  for (auto it = a.begin(); it != a.end(); ++it) ka.push_back(it.key());
  for (auto it = b.begin(); it != b.end(); ++it) kb.push_back(it.key());
  EXPECT_EQ(ka, kb);
}

TEST(CliTrain, ConfigErrorsExitTwo) {
  const std::string d = scratch("badcfg");
  fs::create_directories(d);
  std::ofstream(d + "/bad.ini") << "[model]\nd_model = 16\nunknown_key = 1\n";
  const Outcome r = run({"train", "-c", d + "/bad.ini", "-o", d});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("unknown_key"), std::string::npos);
  EXPECT_EQ(run({"train", "-c", d + "/missing.ini"}).code, 2);
  std::ofstream(d + "/ok.ini") << kTinyConfig;
  EXPECT_EQ(run({"train", "-c", d + "/ok.ini", "-o", d, "--set", "model.loops=0"}).code, 2);
}

TEST(CliGenerate, MaxNewOnePrintsOneToken) {
  const Outcome r = run({"generate", checkpoint(), "--prompt", "4 0 1", "--max-new", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 1u);
  EXPECT_EQ(cli::parse_token_ids(l[0]).size(), 1u);
}

TEST(CliGenerate, StatsReportPassesPerToken) {
  const Outcome p = run({"generate", checkpoint(), "--prompt", "4 0 1", "--max-new", "5", "--stats"});
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_NE(p.out.find("passes_per_token 1.00"), std::string::npos) << p.out;
  const Outcome v =
      run({"generate", checkpoint(), "--prompt", "4 0 1", "--max-new", "5", "--stats", "--mode", "vanilla_loop"});
  ASSERT_EQ(v.code, 0) << v.err;
  EXPECT_NE(v.out.find("passes_per_token 2.00"), std::string::npos) << v.out;
  // Every decode step line carries one pass for PLT.
  int steps = 0;
  for (const auto& l : lines(p.out)) {
    if (l.rfind("step ", 0) == 0) {
      EXPECT_NE(l.find(" passes 1 "), std::string::npos) << l;
      ++steps;
    }
  }
  EXPECT_EQ(steps, 4);
}

TEST(CliGenerate, Deterministic) {
  const std::vector<std::string> args = {"generate", checkpoint(), "--prompt", "4 1 2", "--max-new", "6",
                                         "--temperature", "0.8", "--seed", "3"};
  EXPECT_EQ(run(args).out, run(args).out);
}

TEST(CliGenerate, MatchesLibraryGreedyDecoding) {
  const Checkpoint ck = load_checkpoint(checkpoint());
  DecodeSession s = prefill(TokenSequence{{4, 2, 3}}, ck.params, ck.cfg);
  const Outcome r = run({"generate", checkpoint(), "--prompt", "4 2 3", "--max-new", "5"});
  EXPECT_EQ(r.out, cli::join_ids(generate(s, 5)) + "\n");
}

TEST(CliGenerate, BadPromptsExitTwo) {
  EXPECT_EQ(run({"generate", checkpoint(), "--prompt", "4 6"}).code, 2);  // vocab is 6
  EXPECT_EQ(run({"generate", checkpoint(), "--prompt", "4 -1"}).code, 2);
  EXPECT_EQ(run({"generate", checkpoint(), "--prompt", "a b"}).code, 2);
  EXPECT_EQ(run({"generate", checkpoint(), "--prompt", "4", "--max-new", "0"}).code, 2);
  EXPECT_EQ(run({"generate", checkpoint(), "--prompt", "4", "--max-new", "40"}).code, 2);
  EXPECT_EQ(run({"generate", checkpoint()}).code, 2);
}

TEST(CliVerify, RandomModelPasses) {
  const Outcome r = run({"verify", "--random"});
  EXPECT_EQ(r.code, 0) << r.out;
  for (const char* check : {"teacher_forcing", "causality", "gate_limits", "cache_bounds", "gradients"}) {
    EXPECT_NE(r.out.find(check), std::string::npos) << check;
  }
  EXPECT_NE(r.out.find("verify: PASS (5/5)"), std::string::npos);
}

TEST(CliVerify, ImpossibleToleranceFails) {
  const Outcome r = run({"verify", "--random", "--tolerance", "0"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST(CliVerify, CheckpointPassesAndWritesManifestOnRequest) {
  const std::string d = scratch("verify_out");
  const Outcome r = run({"verify", checkpoint(), "--grad-coordinates", "500", "--out", d});
  EXPECT_EQ(r.code, 0) << r.out;
  std::ifstream in(d + "/" + cli::kManifestFile);
  const auto m = nlohmann::json::parse(in);
  EXPECT_EQ(m.at("checks").size(), 5u);
}

TEST(CliVerify, CorruptCheckpointExitsTwo) {
  const std::string d = scratch("corrupt");
  fs::create_directories(d);
  std::ifstream in(checkpoint(), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  bytes[bytes.size() - 3] ^= 0x55;
  std::ofstream(d + "/bad.plt", std::ios::binary) << bytes;
  EXPECT_EQ(run({"verify", d + "/bad.plt"}).code, 2);
  EXPECT_EQ(run({"verify"}).code, 2);
  EXPECT_EQ(run({"verify", checkpoint(), "--random"}).code, 2);
}

TEST(CliCost, DefaultPrintsFiveRows) {
  const Outcome r = run({"cost", "--csv"});
  ASSERT_EQ(r.code, 0);
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 6u);
  const char* rows[] = {"vanilla,", "loop,", "loop+clp,", "loop+clp+kvshare,", "plt,"};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(l[static_cast<std::size_t>(i + 1)].rfind(rows[i], 0), 0u) << l[i + 1];
  EXPECT_EQ(lines(run({"cost"}).out).size(), 7u);  // title, header, five rows
}

TEST(CliCost, SingleLoopCollapsesToVanilla) {
  const Outcome r = run({"cost", "--csv", "--L", "1"});
  ASSERT_EQ(r.code, 0);
  const auto l = lines(r.out);
  for (std::size_t i = 1; i < l.size(); ++i) {
    EXPECT_NE(l[i].find(",1.000000,1.000000"), std::string::npos) << l[i];
  }
}

TEST(CliCost, SweepEmitsEveryBatch) {
  const Outcome r = run({"cost", "--csv", "--sweep", "4,8,16,32,64"});
  ASSERT_EQ(r.code, 0);
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 26u);
  EXPECT_EQ(l[25].rfind("plt,2,64,64,", 0), 0u) << l[25];
  EXPECT_EQ(run({"cost", "--sweep", "4,0"}).code, 2);
  EXPECT_EQ(run({"cost", "--bandwidth", "-1"}).code, 2);
  EXPECT_EQ(run({"cost", "--profile", "fast"}).code, 2);
}

TEST(CliBench, ReportsTimesAndPasses) {
  const Outcome r = run({"bench", checkpoint(), "--steps", "4", "--modes", "plt,vanilla_loop", "--repeats", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 3u);
  EXPECT_NE(l[0].find("passes/token"), std::string::npos);
  EXPECT_NE(l[1].find("1.00"), std::string::npos);
  EXPECT_NE(l[2].find("2.00"), std::string::npos);
  EXPECT_EQ(run({"bench", checkpoint(), "--steps", "0"}).code, 2);
  EXPECT_EQ(run({"bench", checkpoint(), "--modes", "warp"}).code, 2);
}

}  // namespace
}  // namespace plt
