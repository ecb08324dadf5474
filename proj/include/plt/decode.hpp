#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plt/attention.hpp"
#include "plt/kv_cache.hpp"
#include "plt/model.hpp"
#include "plt/rng.hpp"

namespace plt {

/// Stored KV entries per layer, split by cache kind.
struct KVEntryCount {
  std::size_t shared = 0;         // loop 1 entries that later loops read
  std::size_t window = 0;         // sliding-window entries over all non-first loops
  std::size_t per_loop_full = 0;  // full-length caches owned by a single loop
  std::size_t total() const { return shared + window + per_loop_full; }
};

/// In-flight state of incremental generation.
///
/// For plt, inflight[r] is loop r+1's last-layer state at the most recent
/// position; the next step adds it to the new embedding to form the input of
/// loop r+2. The loop-L state is consumed by the head immediately.
struct DecodeSession {
  ModelConfig cfg;
  std::shared_ptr<const Parameters> params;
  SharedKVCache shared;               // loop 1 cache, one entry per processed position
  std::vector<SharedKVCache> private_full;  // loops 2..L that keep full caches
  WindowKVCache window;
  std::vector<std::vector<double>> inflight;
  std::size_t step = 0;  // processed positions
  std::vector<int> tokens;
  std::vector<int> emitted;
  Tensor last_logits;  // [vocab]
  int next_token = -1;
  std::size_t prefill_passes = 0;
  std::size_t decode_passes = 0;
  std::size_t decoded_tokens = 0;
};

/// Index of the largest logit; ties go to the lowest id.
inline int argmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

inline KVEntryCount kv_entry_count(const DecodeSession& s) {
  KVEntryCount c;
  if (s.cfg.shares_kv()) {
    c.shared = s.shared.size();
    c.window = s.cfg.uses_gate() ? s.window.size(0) : 0;
  } else {
    c.per_loop_full = s.shared.size();
  }
  for (const auto& f : s.private_full) c.per_loop_full += f.size();
  return c;
}

namespace detail {

inline std::vector<double> row_copy(const Tensor& t, std::size_t r) {
  auto row = t.row(r);
  return {row.begin(), row.end()};
}

inline Tensor row_tensor(std::span<const double> row) {
  return Tensor({1, row.size()}, std::vector<double>(row.begin(), row.end()));
}

inline void check_capacity(const DecodeSession& s) {
  if (s.step >= static_cast<std::size_t>(s.cfg.max_seq)) {
    throw CapacityError("decode: position " + std::to_string(s.step) + " reaches max_seq " +
                        std::to_string(s.cfg.max_seq));
  }
}

inline void check_token(const DecodeSession& s, int token) {
  if (token < 0 || token >= s.cfg.vocab) {
    throw DimensionError("decode: token id " + std::to_string(token) + " outside vocab");
  }
}

inline void finish_step(DecodeSession& s, int token, const Tensor& logits_row) {
  s.tokens.push_back(token);
  s.last_logits = Tensor({logits_row.size()}, std::vector<double>(logits_row.data().begin(), logits_row.data().end()));
  s.next_token = argmax(s.last_logits.data());
  ++s.step;
  ++s.decoded_tokens;
}

// Causal attention of one query row over a full cache that already holds it.
inline Tensor attend_cache(const Tensor& q, const SharedKVCache& cache, std::size_t layer, int position,
                           const ModelConfig& cfg) {
  const int qp[] = {position};
  return causal_attend(q, cache.keys(layer), cache.values(layer), qp, cache.positions(layer),
                       HeadLayout::of(cfg));
}

}  // namespace detail

/// Runs the training-mode forward over the prompt and keeps what decoding
/// needs: loop 1's cache, the last w private entries of each later loop (or
/// full private caches when KV is not shared), and the displaced states.
inline DecodeSession prefill(const TokenSequence& tokens, std::shared_ptr<const Parameters> params,
                             const ModelConfig& cfg) {
  cfg.validate();
  if (tokens.empty()) throw EmptyInputError("prefill: prompt must hold at least one token");
  tokens.validate(cfg.vocab);
  NoGradGuard no_grad;

  DecodeSession s;
  s.cfg = cfg;
  s.params = std::move(params);
  const std::size_t layers = s.params->layers.size();
  const auto width = static_cast<std::size_t>(cfg.d_kv());
  const std::size_t n = tokens.size();
  const int L = cfg.loops;

  PassCounter counter;
  const ForwardOutput fw = teacher_forced_forward(*s.params, cfg, tokens.ids, 1, &counter);
  s.prefill_passes = counter.passes;

  s.shared = SharedKVCache(layers, width);
  s.window = WindowKVCache(layers, L, cfg.uses_gate() ? static_cast<std::size_t>(cfg.window) : 0, width);
  if (!cfg.shares_kv() && L > 1) s.private_full.assign(static_cast<std::size_t>(L - 1), SharedKVCache(layers, width));

  for (int loop = 1; loop <= L; ++loop) {
    const LoopKV& kv = fw.kv[static_cast<std::size_t>(loop - 1)];
    for (std::size_t layer = 0; layer < layers; ++layer) {
      std::size_t first = 0;
      if (loop > 1 && cfg.shares_kv()) {
        if (!cfg.uses_gate()) continue;
        const auto w = static_cast<std::size_t>(cfg.window);
        first = n > w ? n - w : 0;
      }
      for (std::size_t i = first; i < n; ++i) {
        const int pos = static_cast<int>(i);
        if (loop == 1) {
          s.shared.append(layer, pos, kv[layer].k.row(i), kv[layer].v.row(i));
        } else if (cfg.shares_kv()) {
          s.window.append(layer, loop, pos, kv[layer].k.row(i), kv[layer].v.row(i));
        } else {
          s.private_full[static_cast<std::size_t>(loop - 2)].append(layer, pos, kv[layer].k.row(i),
                                                                     kv[layer].v.row(i));
        }
      }
    }
  }

  if (cfg.mode == Mode::plt) {
    for (int r = 0; r + 1 < L; ++r) s.inflight.push_back(detail::row_copy(fw.acts.H[static_cast<std::size_t>(r)], n - 1));
  }
  s.step = n;
  s.tokens = tokens.ids;
  const Tensor last = take_rows(fw.logits, std::vector<std::size_t>{n - 1});
  s.last_logits = Tensor({last.size()}, std::vector<double>(last.data().begin(), last.data().end()));
  s.next_token = argmax(s.last_logits.data());
  return s;
}

inline DecodeSession prefill(const TokenSequence& tokens, const Parameters& params, const ModelConfig& cfg) {
  return prefill(tokens, std::make_shared<const Parameters>(params), cfg);
}

/// One PLT decoding step at position i = session.step.
///
/// Builds the displaced micro-batch {e_i, e_i + inflight[0], ...} and runs it
/// through the block stack in a single batched pass. Within each layer, row 0
/// appends its K/V to the shared cache before any row attends, so later loops
/// see position i. Returns the next token and the logits of the loop-L row.
inline std::pair<int, Tensor> decode_step(DecodeSession& s, int token) {
  if (s.cfg.mode != Mode::plt) throw ConfigError("decode_step requires a plt session");
  detail::check_capacity(s);
  detail::check_token(s, token);
  NoGradGuard no_grad;
  const Parameters& p = *s.params;
  const ModelConfig& cfg = s.cfg;
  const int L = cfg.loops;
  const int pos = static_cast<int>(s.step);
  const auto d = static_cast<std::size_t>(cfg.d_model);

  const int tok[] = {token};
  const Tensor e = embedding(p.embedding, tok);
  std::vector<double> rows(static_cast<std::size_t>(L) * d);
  for (int r = 0; r < L; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      rows[static_cast<std::size_t>(r) * d + c] = r == 0 ? e[c] : e[c] + s.inflight[static_cast<std::size_t>(r - 1)][c];
    }
  }
  Tensor x({static_cast<std::size_t>(L), d}, std::move(rows));
  const std::vector<int> positions(static_cast<std::size_t>(L), pos);

  for (std::size_t layer = 0; layer < p.layers.size(); ++layer) {
    const LayerParams& lp = p.layers[layer];
    const Tensor h = rmsnorm(x, lp.attn_norm, cfg.norm_eps);
    const QKV qkv = project_qkv(h, lp, positions, cfg);
    s.shared.append(layer, pos, qkv.k.row(0), qkv.v.row(0));
    std::vector<Tensor> ys;
    for (int r = 0; r < L; ++r) {
      const int loop = r + 1;
      const Tensor q = detail::row_tensor(qkv.q.row(static_cast<std::size_t>(r)));
      if (loop == 1) {
        ys.push_back(detail::attend_cache(q, s.shared, layer, pos, cfg));
      } else if (cfg.shares_kv()) {
        if (cfg.uses_gate()) {
          s.window.append(layer, loop, pos, qkv.k.row(static_cast<std::size_t>(r)), qkv.v.row(static_cast<std::size_t>(r)));
        }
        const QKV xr{detail::row_tensor(qkv.q_pre.row(static_cast<std::size_t>(r))), q, {}, {}};
        const int qp[] = {pos};
        ys.push_back(nonfirst_mix(xr, s.shared, &s.window, p, layer, loop, qp, cfg));
      } else {
        SharedKVCache& own = s.private_full[static_cast<std::size_t>(loop - 2)];
        own.append(layer, pos, qkv.k.row(static_cast<std::size_t>(r)), qkv.v.row(static_cast<std::size_t>(r)));
        ys.push_back(detail::attend_cache(q, own, layer, pos, cfg));
      }
    }
    x = add(x, matmul(concat_rows(ys), lp.wo));
    x = mlp_sublayer(x, lp, cfg);
  }
  ++s.decode_passes;

  for (int r = 0; r + 1 < L; ++r) s.inflight[static_cast<std::size_t>(r)] = detail::row_copy(x, static_cast<std::size_t>(r));
  const Tensor logits = head_forward(detail::row_tensor(x.row(static_cast<std::size_t>(L - 1))), p, cfg);
  detail::finish_step(s, token, logits);
  return {s.next_token, s.last_logits};
}

/// Serial looped decoding: L block-stack passes per token, each loop reading
/// and writing its own full-length cache. Also serves mode=vanilla (L = 1).
inline std::pair<int, Tensor> loop_decode_step(DecodeSession& s, int token) {
  if (s.cfg.mode == Mode::plt) throw ConfigError("loop_decode_step requires a vanilla or vanilla_loop session");
  detail::check_capacity(s);
  detail::check_token(s, token);
  NoGradGuard no_grad;
  const Parameters& p = *s.params;
  const ModelConfig& cfg = s.cfg;
  const int pos = static_cast<int>(s.step);
  const int positions[] = {pos};

  const int tok[] = {token};
  Tensor x = embedding(p.embedding, tok);
  for (int loop = 1; loop <= cfg.loops; ++loop) {
    SharedKVCache& cache = loop == 1 ? s.shared : s.private_full[static_cast<std::size_t>(loop - 2)];
    for (std::size_t layer = 0; layer < p.layers.size(); ++layer) {
      const LayerParams& lp = p.layers[layer];
      const Tensor h = rmsnorm(x, lp.attn_norm, cfg.norm_eps);
      const QKV qkv = project_qkv(h, lp, positions, cfg);
      cache.append(layer, pos, qkv.k.row(0), qkv.v.row(0));
      x = add(x, matmul(detail::attend_cache(qkv.q, cache, layer, pos, cfg), lp.wo));
      x = mlp_sublayer(x, lp, cfg);
    }
    ++s.decode_passes;
  }
  detail::finish_step(s, token, head_forward(x, p, cfg));
  return {s.next_token, s.last_logits};
}

/// Mode-appropriate decoding step.
inline std::pair<int, Tensor> step(DecodeSession& s, int token) {
  return s.cfg.mode == Mode::plt ? decode_step(s, token) : loop_decode_step(s, token);
}

struct Sampling {
  /// 0 selects greedy argmax.
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

inline int sample_token(std::span<const double> logits, double temperature, Rng& rng) {
  if (temperature <= 0.0) return argmax(logits);
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  std::vector<double> w(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) sum += (w[i] = std::exp((logits[i] - mx) / temperature));
  double u = rng.uniform() * sum;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return static_cast<int>(i);
    u -= w[i];
  }
  return static_cast<int>(w.size() - 1);
}

/// Emits max_new tokens. The first is chosen from the logits the session
/// already holds (the prefill prediction); each later one costs one step.
inline std::vector<int> generate(DecodeSession& s, int max_new, const Sampling& sampling = {}) {
  if (max_new < 1) throw ConfigError("generate: max_new must be >= 1");
  Rng rng(sampling.seed);
  std::vector<int> out;
  int tok = sample_token(s.last_logits.data(), sampling.temperature, rng);
  out.push_back(tok);
  for (int i = 1; i < max_new; ++i) {
    step(s, tok);
    tok = sample_token(s.last_logits.data(), sampling.temperature, rng);
    out.push_back(tok);
  }
  s.emitted.insert(s.emitted.end(), out.begin(), out.end());
  return out;
}

}  // namespace plt
