#pragma once

// `plt` command line: train, generate, verify, cost, bench.
// Exit codes: 0 success, 1 verification or run failure, 2 usage/config error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "plt/checkpoint.hpp"
#include "plt/config_file.hpp"
#include "plt/costmodel.hpp"
#include "plt/decode.hpp"
#include "plt/errors.hpp"
#include "plt/train.hpp"
#include "plt/verify.hpp"

namespace plt::cli {

enum ExitCode : int { kOk = 0, kFailed = 1, kUsage = 2 };

inline constexpr const char* kCheckpointFile = "checkpoint.plt";
inline constexpr const char* kLossFile = "loss.csv";
inline constexpr const char* kManifestFile = "manifest.json";

inline std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

inline std::vector<int> parse_token_ids(const std::string& text) {
  std::istringstream in(text);
  std::vector<int> ids;
  std::string word;
  while (in >> word) {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(word, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != word.size() || v < 0 || v > std::numeric_limits<int>::max()) {
      throw ConfigError("prompt: '" + word + "' is not a non-negative token id");
    }
    ids.push_back(static_cast<int>(v));
  }
  return ids;
}

inline std::vector<int> byte_ids(const std::string& text) {
  std::vector<int> ids;
  for (unsigned char c : text) ids.push_back(c);
  return ids;
}

inline std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? " " : "") + std::to_string(ids[i]);
  return s;
}

inline void write_manifest(const std::string& dir, nlohmann::json manifest) {
  std::filesystem::create_directories(dir);
  write_text_file((std::filesystem::path(dir) / kManifestFile).string(), manifest.dump(2) + "\n");
}

inline nlohmann::json argv_json(int argc, const char* const* argv) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < argc; ++i) a.push_back(argv[i]);
  return a;
}

inline ModelConfig apply_mode(ModelConfig cfg, const std::string& mode) {
  return mode.empty() ? cfg : with_mode(cfg, parse_mode(mode));
}

inline std::string kv_summary(const KVEntryCount& c) {
  return "kv_shared " + std::to_string(c.shared) + " kv_window " + std::to_string(c.window) + " kv_full " +
         std::to_string(c.per_loop_full) + " kv_total " + std::to_string(c.total());
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

inline int cmd_train(const TrainArgs& a, const nlohmann::json& argv, std::ostream& out) {
  RunConfig rc = load_run_config(a.config, a.overrides);
  if (a.seed) rc.train.seed = *a.seed;
  if (!a.out.empty()) rc.out_dir = a.out;
  validate(rc);
  std::filesystem::create_directories(rc.out_dir);

  const int every = std::max(1, rc.train.steps / 10);
  const TrainResult r = train(rc.model, rc.task, rc.train, [&](const LossPoint& p) {
    if (!a.quiet && (p.step % every == 0 || p.step + 1 == rc.train.steps)) {
      out << "step " << p.step << " loss " << fmt("%.6f", p.loss) << " lr " << fmt("%.3e", p.lr) << "\n";
    }
  });

  const auto dir = std::filesystem::path(rc.out_dir);
  const nlohmann::json meta = {{"task", to_json(rc.task)},
                               {"train", to_json(rc.train)},
                               {"final_loss", r.final_loss},
                               {"eval_loss", r.eval.loss},
                               {"eval_accuracy", r.eval.accuracy}};
  save_checkpoint((dir / kCheckpointFile).string(), rc.model, r.params, meta, rc.dtype);
  write_text_file((dir / kLossFile).string(), loss_csv(r.curve));
  write_manifest(rc.out_dir, {{"command", "train"},
                              {"argv", argv},
                              {"config_file", a.config},
                              {"overrides", a.overrides},
                              {"resolved", to_json(rc)},
                              {"params", count_params(r.params)},
                              {"final_loss", r.final_loss},
                              {"eval", {{"loss", r.eval.loss}, {"accuracy", r.eval.accuracy}}},
                              {"outputs", {kCheckpointFile, kLossFile}}});
  out << "final_loss " << fmt("%.6f", r.final_loss) << " eval_loss " << fmt("%.6f", r.eval.loss) << " eval_accuracy "
      << fmt("%.4f", r.eval.accuracy) << "\n";
  out << "wrote " << (dir / kCheckpointFile).string() << ", " << (dir / kLossFile).string() << ", "
      << (dir / kManifestFile).string() << "\n";
  return kOk;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string prompt;
  std::string text;
  int max_new = 16;
  std::string mode;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  bool stats = false;
  std::string out;
};

inline int cmd_generate(const GenerateArgs& a, const nlohmann::json& argv, std::ostream& out) {
  if (a.max_new < 1) throw ConfigError("generate: --max-new must be >= 1");
  if (a.prompt.empty() == a.text.empty()) throw ConfigError("generate: give exactly one of --prompt or --text");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const ModelConfig cfg = apply_mode(ck.cfg, a.mode);
  const std::vector<int> prompt = a.text.empty() ? parse_token_ids(a.prompt) : byte_ids(a.text);
  if (prompt.empty()) throw ConfigError("generate: empty prompt");
  if (prompt.size() + static_cast<std::size_t>(a.max_new) - 1 > static_cast<std::size_t>(cfg.max_seq)) {
    throw ConfigError("generate: prompt plus --max-new exceeds max_seq " + std::to_string(cfg.max_seq));
  }

  DecodeSession s = prefill(TokenSequence{prompt}, ck.params, cfg);
  if (a.stats) out << "prefill tokens " << prompt.size() << " passes " << s.prefill_passes << " "
                   << kv_summary(kv_entry_count(s)) << "\n";
  // Same sampling order as generate().
  Rng rng(a.seed);
  std::vector<int> tokens = {sample_token(s.last_logits.data(), a.temperature, rng)};
  for (int i = 1; i < a.max_new; ++i) {
    const std::size_t before = s.decode_passes;
    step(s, tokens.back());
    tokens.push_back(sample_token(s.last_logits.data(), a.temperature, rng));
    if (a.stats) {
      out << "step " << i << " token " << tokens[tokens.size() - 2] << " passes " << s.decode_passes - before << " "
          << kv_summary(kv_entry_count(s)) << "\n";
    }
  }
  if (a.stats) {
    const double per_token =
        s.decoded_tokens ? static_cast<double>(s.decode_passes) / static_cast<double>(s.decoded_tokens) : 0.0;
    out << "mode " << to_string(cfg.mode) << " loops " << cfg.loops << " decode_steps " << s.decoded_tokens
        << " passes_per_token " << fmt("%.2f", per_token) << "\n";
  }
  out << join_ids(tokens) << "\n";
  if (!a.text.empty()) {
    std::string bytes;
    for (int t : tokens) bytes += t < 256 ? static_cast<char>(t) : '?';
    out << bytes << "\n";
  }
  if (!a.out.empty()) {
    write_manifest(a.out, {{"command", "generate"},
                           {"argv", argv},
                           {"checkpoint", a.checkpoint},
                           {"resolved", cfg},
                           {"prompt", prompt},
                           {"tokens", tokens},
                           {"decode_passes", s.decode_passes}});
  }
  return kOk;
}

struct VerifyArgs {
  std::string checkpoint;
  bool random = false;
  int d_model = 16;
  int layers = 2;
  int loops = 3;
  int window = 2;
  VerifyOptions opt;
  std::string out;
};

inline ModelConfig random_verify_config(const VerifyArgs& a) {
  ModelConfig c;
  c.vocab = 16;
  c.d_model = a.d_model;
  c.n_layers = a.layers;
  c.n_heads = 2;
  c.n_kv_heads = 1;
  c.d_ff = 2 * a.d_model;
  c.loops = a.loops;
  c.mode = Mode::plt;
  c.kv_share = true;
  c.window = a.window;
  c.gswa = a.window > 0;
  c.max_seq = 32;
  return c;
}

inline int cmd_verify(const VerifyArgs& a, const nlohmann::json& argv, std::ostream& out) {
  if (a.random == !a.checkpoint.empty()) throw ConfigError("verify: give a checkpoint or --random");
  ModelConfig cfg;
  Parameters params;
  if (a.random) {
    cfg = random_verify_config(a);
    cfg.validate();
    Rng rng(a.opt.seed);
    InitOptions init;
    init.randomize_all = true;
    params = init_parameters(cfg, rng, init);
  } else {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    cfg = ck.cfg;
    params = std::move(ck.params);
  }
  VerifyOptions opt = a.opt;
  opt.seq_len = std::min<std::size_t>(opt.seq_len, static_cast<std::size_t>(cfg.max_seq));
  const std::vector<CheckResult> results = verify_model(params, cfg, opt);

  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %12s %10s %6s  %s\n", "check", "max_error", "tolerance", "result", "detail");
  out << buf;
  std::size_t passed = 0;
  nlohmann::json report = nlohmann::json::array();
  for (const CheckResult& r : results) {
    std::snprintf(buf, sizeof buf, "%-16s %12.3e %10.1e %6s  %s\n", r.name.c_str(), r.max_error, r.tolerance,
                  r.passed ? "PASS" : "FAIL", r.detail.c_str());
    out << buf;
    passed += r.passed ? 1 : 0;
    report.push_back({{"check", r.name}, {"max_error", r.max_error}, {"tolerance", r.tolerance},
                      {"passed", r.passed}, {"detail", r.detail}});
  }
  const bool ok = passed == results.size();
  out << "verify: " << (ok ? "PASS" : "FAIL") << " (" << passed << "/" << results.size() << ")\n";
  if (!a.out.empty()) {
    write_manifest(a.out, {{"command", "verify"}, {"argv", argv}, {"resolved", cfg}, {"checks", report}});
  }
  return ok ? kOk : kFailed;
}

struct CostArgs {
  int loops = 2;
  int window = 64;
  std::size_t seq_len = 5000;
  std::size_t batch = 4;
  std::vector<std::size_t> sweep;
  bool csv = false;
  std::string profile = "memory";
  std::optional<double> bandwidth, peak_flops, weight_bytes, kv_bytes, act_bytes;
  std::optional<int> d_model, layers, heads, kv_heads, d_ff, vocab;
  std::string out;
};

inline int cmd_cost(const CostArgs& a, const nlohmann::json& argv, std::ostream& out) {
  HardwareProfile hw;
  if (a.profile == "memory") {
    hw = HardwareProfile::memory_bound();
  } else if (a.profile == "compute") {
    hw = HardwareProfile::compute_bound();
  } else {
    throw ConfigError("cost: --profile must be memory or compute");
  }
  if (a.bandwidth) hw.mem_bandwidth = *a.bandwidth;
  if (a.peak_flops) hw.peak_flops = *a.peak_flops;
  if (a.weight_bytes) hw.weight_bytes_per_param = *a.weight_bytes;
  if (a.kv_bytes) hw.kv_bytes_per_element = *a.kv_bytes;
  if (a.act_bytes) hw.act_bytes_per_element = *a.act_bytes;
  hw.validate();

  ModelConfig base = reference_cost_config();
  if (a.d_model) base.d_model = *a.d_model;
  if (a.layers) base.n_layers = *a.layers;
  if (a.heads) base.n_heads = *a.heads;
  if (a.kv_heads) base.n_kv_heads = *a.kv_heads;
  if (a.d_ff) base.d_ff = *a.d_ff;
  if (a.vocab) base.vocab = *a.vocab;
  base.max_seq = std::max<int>(base.max_seq, static_cast<int>(a.seq_len));
  if (a.loops < 1) throw ConfigError("cost: --L must be >= 1");
  if (a.window < 0) throw ConfigError("cost: --w must be >= 0");
  if (a.seq_len < 1) throw ConfigError("cost: --n must be >= 1");

  const std::vector<std::size_t> batches = a.sweep.empty() ? std::vector<std::size_t>{a.batch} : a.sweep;
  std::vector<CostRow> rows;
  std::string text;
  for (std::size_t b : batches) {
    if (b < 1) throw ConfigError("cost: batch sizes must be >= 1");
    const auto block = report(table_rows(base, a.loops, a.window, a.seq_len, b), hw);
    rows.insert(rows.end(), block.begin(), block.end());
    if (!a.csv) {
      if (!text.empty()) text += "\n";
      text += "batch " + std::to_string(b) + ", n " + std::to_string(a.seq_len) + ", L " + std::to_string(a.loops) +
              ", w " + std::to_string(a.window) + "\n" + format_table(block);
    }
  }
  out << (a.csv ? format_csv(rows) : text);
  if (!a.out.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const CostRow& r : rows) {
      j.push_back({{"row", r.row}, {"loops", r.loops}, {"batch", r.batch}, {"latency_s", r.latency_s},
                   {"latency_ratio", r.latency_ratio}, {"kv_ratio", r.kv_ratio}});
    }
    write_manifest(a.out, {{"command", "cost"},
                           {"argv", argv},
                           {"resolved",
                            {{"model", base},
                             {"profile",
                              {{"mem_bandwidth", hw.mem_bandwidth},
                               {"peak_flops", hw.peak_flops},
                               {"weight_bytes_per_param", hw.weight_bytes_per_param},
                               {"kv_bytes_per_element", hw.kv_bytes_per_element},
                               {"act_bytes_per_element", hw.act_bytes_per_element}}}}},
                           {"rows", j}});
  }
  return kOk;
}

struct BenchArgs {
  std::string checkpoint;
  int steps = 32;
  std::vector<std::string> modes = {"plt", "vanilla_loop", "vanilla"};
  int warmup = 1;
  int repeats = 3;
  std::uint64_t seed = 0;
  std::string out;
};

struct BenchRow {
  std::string mode;
  int loops = 1;
  double median_ms = 0;
  double p90_ms = 0;
  double passes_per_token = 0;
  std::size_t kv_total = 0;
};

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(i, v.size() - 1)];
}

inline int cmd_bench(const BenchArgs& a, const nlohmann::json& argv, std::ostream& out) {
  if (a.steps < 1) throw ConfigError("bench: --steps must be >= 1");
  if (a.repeats < 1 || a.warmup < 0) throw ConfigError("bench: --repeats must be >= 1 and --warmup >= 0");
  if (a.modes.empty()) throw ConfigError("bench: empty mode list");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  if (a.steps + 1 > ck.cfg.max_seq) throw ConfigError("bench: --steps exceeds max_seq - 1");
  auto params = std::make_shared<const Parameters>(ck.params);
  Rng rng(a.seed);
  const int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(ck.cfg.vocab)));

  std::vector<BenchRow> rows;
  for (const std::string& m : a.modes) {
    const ModelConfig cfg = with_mode(ck.cfg, parse_mode(m));
    BenchRow row{m, cfg.loops, 0, 0, 0, 0};
    std::vector<double> times;
    for (int run = 0; run < a.warmup + a.repeats; ++run) {
      DecodeSession s = prefill(TokenSequence{{first}}, params, cfg);
      int tok = argmax(s.last_logits.data());
      for (int i = 0; i < a.steps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        tok = step(s, tok).first;
        const auto t1 = std::chrono::steady_clock::now();
        if (run >= a.warmup) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      row.passes_per_token = static_cast<double>(s.decode_passes) / static_cast<double>(s.decoded_tokens);
      row.kv_total = kv_entry_count(s).total();
    }
    row.median_ms = percentile(times, 0.5);
    row.p90_ms = percentile(times, 0.9);
    rows.push_back(row);
  }

  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %3s %11s %9s %13s %9s\n", "mode", "L", "median_ms", "p90_ms",
                "passes/token", "kv_total");
  out << buf;
  nlohmann::json j = nlohmann::json::array();
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %3d %11.4f %9.4f %13.2f %9zu\n", r.mode.c_str(), r.loops, r.median_ms,
                  r.p90_ms, r.passes_per_token, r.kv_total);
    out << buf;
    j.push_back({{"mode", r.mode}, {"loops", r.loops}, {"median_ms", r.median_ms}, {"p90_ms", r.p90_ms},
                 {"passes_per_token", r.passes_per_token}, {"kv_total", r.kv_total}});
  }
  if (!a.out.empty()) {
    write_manifest(a.out, {{"command", "bench"}, {"argv", argv}, {"resolved", ck.cfg}, {"rows", j}});
  }
  return kOk;
}

/// Parses and runs one command. Output goes to `out`, diagnostics to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Parallel loop transformer toolkit"};
  app.require_subcommand(1);
  const nlohmann::json args = argv_json(argc, argv);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model from an INI config");
  train_cmd->add_option("--config,-c", ta.config, "INI config file")->required();
  train_cmd->add_option("--set", ta.overrides, "Override as section.key=value")->take_all();
  train_cmd->add_option("--seed", ta.seed, "Override train.seed");
  train_cmd->add_option("--out,-o", ta.out, "Output directory (overrides run.out_dir)");
  train_cmd->add_flag("--quiet,-q", ta.quiet, "No progress lines");

  GenerateArgs ga;
  auto* gen_cmd = app.add_subcommand("generate", "Decode tokens from a checkpoint");
  gen_cmd->add_option("checkpoint", ga.checkpoint, "Checkpoint file")->required();
  gen_cmd->add_option("--prompt,-p", ga.prompt, "Space-separated token ids");
  gen_cmd->add_option("--text", ga.text, "Raw text prompt as byte ids");
  gen_cmd->add_option("--max-new,-n", ga.max_new, "Tokens to emit")->capture_default_str();
  gen_cmd->add_option("--mode", ga.mode, "Execution mode: vanilla, vanilla_loop or plt");
  gen_cmd->add_option("--temperature", ga.temperature, "0 is greedy")->capture_default_str();
  gen_cmd->add_option("--seed", ga.seed, "Sampling seed")->capture_default_str();
  gen_cmd->add_flag("--stats", ga.stats, "Per-step pass and cache counters");
  gen_cmd->add_option("--out,-o", ga.out, "Write a manifest to this directory");

  VerifyArgs va;
  auto* verify_cmd = app.add_subcommand("verify", "Run the equivalence, causality and gradient checks");
  verify_cmd->add_option("checkpoint", va.checkpoint, "Checkpoint file");
  verify_cmd->add_flag("--random", va.random, "Use a seeded random model instead of a checkpoint");
  verify_cmd->add_option("--d-model", va.d_model, "Random model width")->capture_default_str();
  verify_cmd->add_option("--layers", va.layers, "Random model layers")->capture_default_str();
  verify_cmd->add_option("--L", va.loops, "Random model loops")->capture_default_str();
  verify_cmd->add_option("--w", va.window, "Random model window (0 disables the gate)")->capture_default_str();
  verify_cmd->add_option("--tolerance", va.opt.tolerance, "Decode versus forward tolerance")->capture_default_str();
  verify_cmd->add_option("--seq-len", va.opt.seq_len, "Test sequence length")->capture_default_str();
  verify_cmd->add_option("--grad-coordinates", va.opt.grad_coordinates, "Gradient coordinates to check, 0 for all")
      ->capture_default_str();
  verify_cmd->add_option("--seed", va.opt.seed, "Seed for weights and test sequences")->capture_default_str();
  verify_cmd->add_option("--threads", va.opt.threads, "Worker cap (default PLT_THREADS or all cores)");
  verify_cmd->add_option("--out,-o", va.out, "Write a manifest to this directory");

  CostArgs ca;
  auto* cost_cmd = app.add_subcommand("cost", "Analytic decode cost of each architecture row");
  cost_cmd->add_option("--L", ca.loops, "Loop count")->capture_default_str();
  cost_cmd->add_option("--w", ca.window, "Window size")->capture_default_str();
  cost_cmd->add_option("--n", ca.seq_len, "Context length")->capture_default_str();
  cost_cmd->add_option("--batch,-b", ca.batch, "Batch size")->capture_default_str();
  cost_cmd->add_option("--sweep", ca.sweep, "Comma-separated batch sizes")->delimiter(',');
  cost_cmd->add_flag("--csv", ca.csv, "CSV output");
  cost_cmd->add_option("--profile", ca.profile, "memory or compute")->capture_default_str();
  cost_cmd->add_option("--bandwidth", ca.bandwidth, "Memory bandwidth, bytes/s");
  cost_cmd->add_option("--peak-flops", ca.peak_flops, "Peak compute, flop/s");
  cost_cmd->add_option("--weight-bytes", ca.weight_bytes, "Bytes per weight");
  cost_cmd->add_option("--kv-bytes", ca.kv_bytes, "Bytes per stored K or V element");
  cost_cmd->add_option("--act-bytes", ca.act_bytes, "Bytes per activation element");
  cost_cmd->add_option("--d-model", ca.d_model, "Model width");
  cost_cmd->add_option("--layers", ca.layers, "Layer count");
  cost_cmd->add_option("--heads", ca.heads, "Attention heads");
  cost_cmd->add_option("--kv-heads", ca.kv_heads, "Key/value heads");
  cost_cmd->add_option("--d-ff", ca.d_ff, "MLP width");
  cost_cmd->add_option("--vocab", ca.vocab, "Vocabulary size");
  cost_cmd->add_option("--out,-o", ca.out, "Write a manifest to this directory");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Wall-clock per-token decode timings");
  bench_cmd->add_option("checkpoint", ba.checkpoint, "Checkpoint file")->required();
  bench_cmd->add_option("--steps", ba.steps, "Decode steps per run")->capture_default_str();
  bench_cmd->add_option("--modes", ba.modes, "Comma-separated modes")->delimiter(',');
  bench_cmd->add_option("--warmup", ba.warmup, "Untimed runs")->capture_default_str();
  bench_cmd->add_option("--repeats", ba.repeats, "Timed runs")->capture_default_str();
  bench_cmd->add_option("--seed", ba.seed, "Seed for the first token")->capture_default_str();
  bench_cmd->add_option("--out,-o", ba.out, "Write a manifest to this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(ta, args, out);
    if (*gen_cmd) return cmd_generate(ga, args, out);
    if (*verify_cmd) return cmd_verify(va, args, out);
    if (*cost_cmd) return cmd_cost(ca, args, out);
    if (*bench_cmd) return cmd_bench(ba, args, out);
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}

}  // namespace plt::cli
