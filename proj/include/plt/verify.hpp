#pragma once

// Self-consistency checks over one set of weights: decode versus
// teacher-forced forward in every mode, causality, gate limits, cache bounds,
// and a finite-difference gradient check.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "plt/decode.hpp"
#include "plt/grad_check.hpp"
#include "plt/model.hpp"
#include "plt/rng.hpp"

namespace plt {

struct CheckResult {
  std::string name;
  double max_error = 0;
  double tolerance = 0;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  double tolerance = 1e-9;  // decode versus forward
  double gate_tolerance = 1e-12;
  double grad_tolerance = 1e-4;
  std::size_t grad_coordinates = 6000;  // 0 checks every coordinate
  std::size_t seq_len = 12;
  int sequences = 3;
  int causality_trials = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: PLT_THREADS or hardware concurrency
};

inline std::string fmt_error(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

inline std::size_t worker_limit(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("PLT_THREADS")) n = static_cast<std::size_t>(std::max(1L, std::atol(env)));
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Runs tasks on at most `workers` threads; results keep task order.
template <typename R>
std::vector<R> run_parallel(const std::vector<std::function<R()>>& tasks, std::size_t workers) {
  std::vector<R> out(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= tasks.size()) return;
        i = next++;
      }
      try {
        out[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(workers, tasks.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<std::vector<int>> random_sequences(const ModelConfig& cfg, int count, std::size_t len,
                                                      std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = std::min(len, static_cast<std::size_t>(cfg.max_seq));
  std::vector<std::vector<int>> out;
  for (int i = 0; i < count; ++i) {
    std::vector<int> ids(n);
    for (int& t : ids) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab)));
    out.push_back(std::move(ids));
  }
  return out;
}

/// Largest logit gap between one-token-at-a-time decoding from a one-token
/// prompt and the teacher-forced forward over the same sequence.
inline double decode_forward_gap(const Parameters& p, const ModelConfig& cfg, const std::vector<int>& ids) {
  NoGradGuard no_grad;
  const Tensor full = teacher_forced_forward(p, cfg, ids).logits;
  DecodeSession s = prefill(TokenSequence{{ids.front()}}, p, cfg);
  auto gap = [&](std::size_t row, const Tensor& logits) {
    double m = 0;
    for (std::size_t c = 0; c < logits.size(); ++c) m = std::max(m, std::abs(full.at(row, c) - logits[c]));
    return m;
  };
  double worst = gap(0, s.last_logits);
  for (std::size_t i = 1; i < ids.size(); ++i) worst = std::max(worst, gap(i, step(s, ids[i]).second));
  return worst;
}

/// The same weights run in each mode the config supports.
inline std::vector<ModelConfig> mode_family(const ModelConfig& cfg) {
  std::vector<ModelConfig> out = {cfg};
  if (cfg.mode != Mode::vanilla) {
    ModelConfig loop = with_mode(cfg, Mode::vanilla_loop);
    if (cfg.mode != Mode::vanilla_loop) out.push_back(loop);
    out.push_back(with_mode(cfg, Mode::vanilla));
  }
  return out;
}

inline CheckResult check_teacher_forcing(const Parameters& p, const ModelConfig& cfg, const VerifyOptions& opt) {
  CheckResult r{"teacher_forcing", 0, opt.tolerance, false, ""};
  for (const ModelConfig& c : mode_family(cfg)) {
    double worst = 0;
    for (const auto& ids : random_sequences(c, opt.sequences, opt.seq_len, opt.seed + 1))
      worst = std::max(worst, decode_forward_gap(p, c, ids));
    r.detail += std::string(r.detail.empty() ? "" : " ") + std::string(to_string(c.mode)) + "=" + fmt_error(worst);
    r.max_error = std::max(r.max_error, worst);
  }
  r.passed = r.max_error < r.tolerance;
  return r;
}

/// Perturbs one token and measures any change at earlier positions; must be
/// exactly zero.
inline CheckResult check_causality(const Parameters& p, const ModelConfig& cfg, const VerifyOptions& opt) {
  CheckResult r{"causality", 0, 0, false, ""};
  Rng rng(opt.seed + 2);
  NoGradGuard no_grad;
  int trials = 0;
  for (const ModelConfig& c : mode_family(cfg)) {
    for (int t = 0; t < opt.causality_trials; ++t) {
      auto ids = random_sequences(c, 1, opt.seq_len, rng.below(1u << 30)).front();
      if (ids.size() < 2 || c.vocab < 2) continue;
      const std::size_t pos = 1 + rng.below(ids.size() - 1);
      const Tensor base = teacher_forced_forward(p, c, ids).logits;
      ids[pos] = (ids[pos] + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.vocab - 1)))) % c.vocab;
      const Tensor pert = teacher_forced_forward(p, c, ids).logits;
      for (std::size_t row = 0; row < pos; ++row)
        for (std::size_t col = 0; col < base.cols(); ++col)
          r.max_error = std::max(r.max_error, std::abs(base.at(row, col) - pert.at(row, col)));
      ++trials;
    }
  }
  r.detail = std::to_string(trials) + " trials";
  r.passed = r.max_error == 0.0;
  return r;
}

/// Forcing the gate to 0 must reproduce pure shared attention and forcing it
/// to 1 pure window attention. Skipped when the gate is not in use.
inline CheckResult check_gate_limits(const Parameters& p, const ModelConfig& cfg, const VerifyOptions& opt) {
  CheckResult r{"gate_limits", 0, opt.gate_tolerance, true, ""};
  if (!cfg.uses_gate() || p.layers.empty()) {
    r.detail = "skipped (no gate)";
    return r;
  }
  NoGradGuard no_grad;
  const auto ids = random_sequences(cfg, 1, opt.seq_len, opt.seed + 3).front();
  const double inf = std::numeric_limits<double>::infinity();
  const auto forced = [&](double bias) {
    Parameters q = p.clone();
    for (auto& layer : q.layers)
      for (auto& g : layer.gates)
        for (double& b : g.bias.mutable_data()) b = bias;
    return q;
  };
  // g = 0: the gated model equals the model without a gate.
  ModelConfig plain = cfg;
  plain.gswa = false;
  const Parameters closed = forced(-inf);
  const double global_gap =
      max_abs_diff(teacher_forced_forward(closed, cfg, ids).logits, teacher_forced_forward(closed, plain, ids).logits);
  // g = 1: the mixed output equals window attention over the loop's own keys.
  const Parameters open = forced(inf);
  double local_gap = 0;
  std::vector<int> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
  const ForwardOutput fw = teacher_forced_forward(open, cfg, ids);
  const Tensor e = embedding(open.embedding, ids);
  const HeadLayout heads = HeadLayout::of(cfg);
  for (int loop = 2; loop <= cfg.loops; ++loop) {
    Tensor x = add(e, shift_right(fw.acts.H[static_cast<std::size_t>(loop - 2)], ids.size()));
    for (std::size_t layer = 0; layer < open.layers.size(); ++layer) {
      const LayerParams& lp = open.layers[layer];
      const QKV qkv = project_qkv(rmsnorm(x, lp.attn_norm, cfg.norm_eps), lp, positions, cfg);
      const Tensor local = window_attend(qkv.q, qkv.k, qkv.v, positions, positions, cfg.window, heads);
      const Tensor global = causal_attend(qkv.q, fw.kv[0][layer].k, fw.kv[0][layer].v, positions, positions, heads);
      const Tensor mixed = gated_fuse(qkv.q_pre, local, global, open.gate(layer, loop));
      local_gap = std::max(local_gap, max_abs_diff(mixed, local));
      x = mlp_sublayer(add(x, matmul(mixed, lp.wo)), lp, cfg);
    }
    local_gap = std::max(local_gap, max_abs_diff(x, fw.acts.H[static_cast<std::size_t>(loop - 1)]));
  }
  r.max_error = std::max(global_gap, local_gap);
  r.detail = "g=0 " + fmt_error(global_gap) + " g=1 " + fmt_error(local_gap);
  r.passed = r.max_error < r.tolerance;
  return r;
}

/// Cache occupancy while decoding: one shared entry per position and at most
/// w entries per (layer, loop) window.
inline CheckResult check_cache_bounds(const Parameters& p, const ModelConfig& cfg, const VerifyOptions& opt) {
  CheckResult r{"cache_bounds", 0, 0, false, ""};
  const auto ids = random_sequences(cfg, 1, opt.seq_len, opt.seed + 4).front();
  DecodeSession s = prefill(TokenSequence{{ids.front()}}, p, cfg);
  std::size_t violations = 0;
  const auto L = static_cast<std::size_t>(cfg.loops);
  for (std::size_t i = 0;; ++i) {
    const KVEntryCount c = kv_entry_count(s);
    std::size_t expected = s.step;
    if (cfg.shares_kv()) {
      if (cfg.uses_gate()) expected += (L - 1) * std::min(s.step, static_cast<std::size_t>(cfg.window));
      for (std::size_t layer = 0; layer < p.layers.size() && cfg.uses_gate(); ++layer)
        for (int loop = 2; loop <= cfg.loops; ++loop)
          if (s.window.ring(layer, loop).size() > static_cast<std::size_t>(cfg.window)) ++violations;
    } else {
      expected = L * s.step;
    }
    if (c.total() != expected || s.shared.size() != s.step) ++violations;
    if (i + 1 >= ids.size()) break;
    step(s, ids[i + 1]);
  }
  r.max_error = static_cast<double>(violations);
  r.detail = std::to_string(ids.size()) + " positions";
  r.passed = violations == 0;
  return r;
}

/// Finite differences on the weighted next-token loss of a short sequence.
inline CheckResult check_gradients(const Parameters& p, const ModelConfig& cfg, const VerifyOptions& opt) {
  CheckResult r{"gradients", 0, opt.grad_tolerance, false, ""};
  const Parameters q = p.clone();
  const auto ids = random_sequences(cfg, 1, std::min<std::size_t>(opt.seq_len, 8), opt.seed + 5).front();
  std::vector<int> targets(ids.begin() + 1, ids.end());
  targets.push_back(0);
  std::vector<double> weights(ids.size(), 1.0);
  weights.back() = 0.0;
  if (ids.size() < 2) {
    r.passed = true;
    r.detail = "skipped (sequence too short)";
    return r;
  }
  const GradCheckReport g = grad_check(
      [&] { return cross_entropy(teacher_forced_forward(q, cfg, ids).logits, targets, weights); }, q.tensors(), 1e-3,
      opt.grad_tolerance, 4, opt.grad_coordinates);
  r.max_error = g.max_rel_err;
  r.detail = std::to_string(g.coordinates) + " coordinates, worst tensor " + std::to_string(g.worst_tensor);
  r.passed = g.passed;
  return r;
}

inline std::vector<CheckResult> verify_model(const Parameters& p, const ModelConfig& cfg, const VerifyOptions& opt) {
  cfg.validate();
  using Check = std::function<CheckResult()>;
  std::vector<Check> checks = {
      [&] { return check_teacher_forcing(p, cfg, opt); }, [&] { return check_causality(p, cfg, opt); },
      [&] { return check_gate_limits(p, cfg, opt); },     [&] { return check_cache_bounds(p, cfg, opt); },
      [&] { return check_gradients(p, cfg, opt); }};
  return run_parallel(checks, worker_limit(opt.threads));
}

}  // namespace plt
