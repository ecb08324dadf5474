#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "plt/config.hpp"
#include "plt/decode.hpp"
#include "plt/errors.hpp"
#include "plt/model.hpp"
#include "plt/optim.hpp"
#include "plt/parameters.hpp"
#include "plt/tasks.hpp"

namespace plt {

struct TrainConfig {
  int batch = 16;
  int steps = 500;
  double lr = 3e-3;
  int warmup = 50;
  double min_lr_ratio = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  double init_std = 0.02;
  int log_every = 1;
  int eval_batches = 4;

  void validate() const {
    if (steps < 1) throw ConfigError("train: steps must be >= 1");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (!(lr > 0)) throw ConfigError("train: lr must be > 0");
    if (warmup < 0) throw ConfigError("train: warmup must be >= 0");
    if (min_lr_ratio < 0 || min_lr_ratio > 1) throw ConfigError("train: min_lr_ratio must lie in [0, 1]");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("train: betas must lie in [0, 1)");
    if (!(adam_eps > 0)) throw ConfigError("train: adam_eps must be > 0");
    if (grad_clip < 0) throw ConfigError("train: grad_clip must be >= 0");
    if (!(init_std > 0)) throw ConfigError("train: init_std must be > 0");
    if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
    if (eval_batches < 0) throw ConfigError("train: eval_batches must be >= 0");
  }

  LrSchedule schedule() const { return {lr, warmup, steps, min_lr_ratio}; }
};

struct LossPoint {
  int step = 0;
  double loss = 0;
  double lr = 0;
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;  // argmax hits over scored positions
  std::size_t scored = 0;
};

struct TrainResult {
  Parameters params;
  std::vector<LossPoint> curve;
  double final_loss = 0;
  EvalResult eval;
};

/// Seed of the held-out example stream for a task.
inline std::uint64_t eval_stream_seed(const TaskSpec& task) { return task.seed ^ 0x9e3779b97f4a7c15ULL; }

inline void check_task_model(const ModelConfig& cfg, const TaskSpec& task) {
  if (task.vocab() != cfg.vocab) {
    throw ConfigError("task vocabulary " + std::to_string(task.vocab()) + " does not match model vocab " +
                      std::to_string(cfg.vocab));
  }
  if (task.length() > cfg.max_seq) throw ConfigError("task sequences are longer than model max_seq");
}

/// Weighted next-token loss of one batch.
inline Tensor batch_loss(const Parameters& p, const ModelConfig& cfg, const Batch& b) {
  const ForwardOutput out = teacher_forced_forward(p, cfg, b.ids, b.batch);
  return cross_entropy(out.logits, b.targets, b.weights);
}

inline EvalResult evaluate(const Parameters& p, const ModelConfig& cfg, const TaskSpec& task, int batches,
                           int batch_size) {
  NoGradGuard no_grad;
  TaskGenerator gen(task, eval_stream_seed(task));
  EvalResult r;
  double weighted_loss = 0, weight = 0, hits = 0;
  for (int i = 0; i < batches; ++i) {
    const Batch b = gen.next_batch(static_cast<std::size_t>(batch_size));
    const Tensor logits = teacher_forced_forward(p, cfg, b.ids, b.batch).logits;
    double w = 0;
    for (double x : b.weights) w += x;
    weighted_loss += cross_entropy(logits, b.targets, b.weights).item() * w;
    weight += w;
    for (std::size_t row = 0; row < b.targets.size(); ++row) {
      if (b.weights[row] == 0.0) continue;
      hits += b.weights[row] * (argmax(logits.row(row)) == b.targets[row] ? 1.0 : 0.0);
      ++r.scored;
    }
  }
  if (weight > 0) {
    r.loss = weighted_loss / weight;
    r.accuracy = hits / weight;
  }
  return r;
}

/// Trains from a seeded initialization. Deterministic for fixed inputs.
inline TrainResult train(const ModelConfig& cfg, const TaskSpec& task, const TrainConfig& tc,
                         const std::function<void(const LossPoint&)>& on_log = {}) {
  cfg.validate();
  tc.validate();
  task.validate();
  check_task_model(cfg, task);

  Rng init_rng(tc.seed);
  InitOptions init;
  init.stddev = tc.init_std;
  TrainResult result;
  result.params = init_parameters(cfg, init_rng, init);
  std::vector<Tensor> params = result.params.tensors();
  Adam opt(params, {tc.beta1, tc.beta2, tc.adam_eps});
  const LrSchedule sched = tc.schedule();
  TaskGenerator gen(task, task.seed);

  for (int step = 0; step < tc.steps; ++step) {
    const Batch b = gen.next_batch(static_cast<std::size_t>(tc.batch));
    result.params.zero_grad();
    const Tensor loss = batch_loss(result.params, cfg, b);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": loss is not finite");
    }
    loss.backward();
    clip_grad_norm(params, tc.grad_clip);
    const double lr = sched.at(step);
    opt.step(lr);
    result.final_loss = value;
    if (step % tc.log_every == 0 || step + 1 == tc.steps) {
      result.curve.push_back({step, value, lr});
      if (on_log) on_log(result.curve.back());
    }
  }
  for (Tensor& p : params) p.zero_grad();
  if (tc.eval_batches > 0) result.eval = evaluate(result.params, cfg, task, tc.eval_batches, tc.batch);
  return result;
}

inline std::string loss_csv(const std::vector<LossPoint>& curve) {
  std::ostringstream os;
  os << "step,loss,lr\n" << std::setprecision(17);
  for (const LossPoint& p : curve) os << p.step << ',' << p.loss << ',' << p.lr << '\n';
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

// Ablation ladder: the same base model trained as each architecture variant
// with identical seeds and token budgets.

struct AblationVariant {
  std::string name;
  ModelConfig cfg;
};

inline std::vector<AblationVariant> default_ladder(ModelConfig base, int window, bool include_plt3) {
  base.kv_share = false;
  base.gswa = false;
  base.window = 0;
  std::vector<AblationVariant> out;
  ModelConfig c = with_mode(base, Mode::vanilla);
  out.push_back({"vanilla", c});
  c = with_mode(base, Mode::vanilla_loop);
  c.loops = 2;
  out.push_back({"loop-2", c});
  c = with_mode(base, Mode::plt);
  c.loops = 2;
  out.push_back({"loop-2+clp", c});
  c.kv_share = true;
  out.push_back({"loop-2+clp+kvshare", c});
  c.window = window;
  c.gswa = window > 0;
  out.push_back({"plt-2", c});
  if (include_plt3) {
    c.loops = 3;
    out.push_back({"plt-3", c});
  }
  return out;
}

struct AblationResult {
  std::string name;
  std::size_t params = 0;
  double final_loss = 0;
  double eval_loss = 0;
  double eval_accuracy = 0;
  std::size_t kv_entries = 0;  // per layer, after one full task sequence
  double kv_ratio = 1;         // relative to the first variant
  double passes_per_token = 0;
};

/// Cache entries and decode passes per token for one task-length sequence.
inline std::pair<std::size_t, double> decode_accounting(const Parameters& p, const ModelConfig& cfg,
                                                        const TaskSpec& task) {
  TaskGenerator gen(task, eval_stream_seed(task));
  const Example e = gen.next();
  DecodeSession s = prefill(TokenSequence{{e.ids.begin(), e.ids.begin() + 1}}, p, cfg);
  for (std::size_t i = 1; i < e.ids.size(); ++i) step(s, e.ids[i]);
  const double passes = static_cast<double>(s.decode_passes) / static_cast<double>(e.ids.size() - 1);
  return {kv_entry_count(s).total(), passes};
}

inline std::vector<AblationResult> ablation_run(const std::vector<AblationVariant>& ladder, const TaskSpec& task,
                                                const TrainConfig& tc,
                                                const std::function<void(const std::string&)>& on_done = {}) {
  if (ladder.empty()) throw EmptyInputError("ablation: empty ladder");
  std::vector<AblationResult> out;
  for (const AblationVariant& v : ladder) {
    const TrainResult tr = train(v.cfg, task, tc);
    AblationResult r;
    r.name = v.name;
    r.params = count_params(tr.params);
    r.final_loss = tr.final_loss;
    r.eval_loss = tr.eval.loss;
    r.eval_accuracy = tr.eval.accuracy;
    std::tie(r.kv_entries, r.passes_per_token) = decode_accounting(tr.params, v.cfg, task);
    r.kv_ratio = static_cast<double>(r.kv_entries) / static_cast<double>(out.empty() ? r.kv_entries : out[0].kv_entries);
    out.push_back(r);
    if (on_done) on_done(v.name);
  }
  return out;
}

inline std::string format_ablation(const std::vector<AblationResult>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %8s %11s %10s %9s %6s %7s %12s\n", "variant", "params", "final_loss",
                "eval_loss", "eval_acc", "kv", "kv_x", "passes/token");
  os << buf;
  for (const AblationResult& r : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %8zu %11.5f %10.5f %9.4f %6zu %7.3f %12.2f\n", r.name.c_str(), r.params,
                  r.final_loss, r.eval_loss, r.eval_accuracy, r.kv_entries, r.kv_ratio, r.passes_per_token);
    os << buf;
  }
  return os.str();
}

}  // namespace plt
