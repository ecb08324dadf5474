#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "plt/attention.hpp"
#include "plt/config.hpp"
#include "plt/errors.hpp"
#include "plt/ops.hpp"
#include "plt/parameters.hpp"

namespace plt {

/// Token ids of one sequence.
struct TokenSequence {
  std::vector<int> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  void validate(int vocab) const {
    for (int id : ids) {
      if (id < 0 || id >= vocab) {
        throw DimensionError("token id " + std::to_string(id) + " outside vocab " + std::to_string(vocab));
      }
    }
  }
};

/// Keys (rotated) and values one loop produced in one layer.
struct LayerKV {
  Tensor k;
  Tensor v;
};
using LoopKV = std::vector<LayerKV>;

/// Last-layer hidden states of every loop; H[l - 1] belongs to loop l.
struct LoopActivations {
  std::vector<Tensor> H;
};

struct ForwardOutput {
  Tensor logits;  // [batch*n x vocab]
  LoopActivations acts;
  std::vector<LoopKV> kv;  // kv[l - 1][layer]
};

/// Counts block-stack applications. A single pass may carry several rows.
struct PassCounter {
  std::size_t passes = 0;
};

namespace detail {

inline std::vector<int> tile_positions(std::span<const int> positions, std::size_t batch) {
  std::vector<int> out;
  out.reserve(positions.size() * batch);
  for (std::size_t b = 0; b < batch; ++b) out.insert(out.end(), positions.begin(), positions.end());
  return out;
}

}  // namespace detail

/// Pre-norm SwiGLU feed-forward with residual.
inline Tensor mlp_sublayer(const Tensor& x, const LayerParams& lp, const ModelConfig& cfg) {
  const Tensor h = rmsnorm(x, lp.mlp_norm, cfg.norm_eps);
  const Tensor act = mul(silu(matmul(h, lp.w_gate)), matmul(h, lp.w_up));
  return add(x, matmul(act, lp.w_down));
}

/// Final norm and classifier head.
inline Tensor head_forward(const Tensor& h, const Parameters& p, const ModelConfig& cfg) {
  const Tensor n = rmsnorm(h, p.final_norm, cfg.norm_eps);
  return matmul(n, cfg.weight_tying ? transpose(p.embedding) : p.head);
}

/// One application of the shared block stack (one loop) to a teacher-forced
/// batch of `batch` sequences sharing `positions`.
///
/// Loop 1, and every loop of a model without KV sharing, attends causally to
/// its own keys. Later loops of a sharing model attend `shared` (loop 1's
/// keys/values), fused with sliding-window attention over their own keys when
/// the gate is enabled. The keys/values this loop computes land in `own`.
inline Tensor block_stack_forward(const Parameters& p, const ModelConfig& cfg, Tensor x, int loop,
                                  std::span<const int> positions, std::size_t batch,
                                  const LoopKV* shared, LoopKV* own) {
  if (loop < 1 || loop > cfg.loops) throw InvalidLoopError("block_stack_forward: loop out of range");
  const bool use_shared = loop > 1 && cfg.shares_kv();
  if (use_shared && (!shared || shared->size() != p.layers.size())) {
    throw EmptyContextError("block_stack_forward: later loop needs loop 1's cache");
  }
  for (int pos : positions) {
    if (pos >= cfg.max_seq) throw CapacityError("position " + std::to_string(pos) + " exceeds max_seq");
  }
  const HeadLayout heads = HeadLayout::of(cfg);
  const std::vector<int> row_pos = detail::tile_positions(positions, batch);
  if (own) own->clear();
  for (std::size_t layer = 0; layer < p.layers.size(); ++layer) {
    const LayerParams& lp = p.layers[layer];
    const Tensor h = rmsnorm(x, lp.attn_norm, cfg.norm_eps);
    const QKV qkv = project_qkv(h, lp, row_pos, cfg);
    if (own) own->push_back({qkv.k, qkv.v});
    Tensor y;
    if (!use_shared) {
      y = causal_attend(qkv.q, qkv.k, qkv.v, positions, positions, heads, batch);
    } else {
      const LayerKV& s = (*shared)[layer];
      const Tensor y_global = causal_attend(qkv.q, s.k, s.v, positions, positions, heads, batch);
      if (cfg.uses_gate()) {
        const Tensor y_local =
            window_attend(qkv.q, qkv.k, qkv.v, positions, positions, cfg.window, heads, batch);
        y = gated_fuse(qkv.q_pre, y_local, y_global, p.gate(layer, loop));
      } else {
        y = y_global;
      }
    }
    x = add(x, matmul(y, lp.wo));
    x = mlp_sublayer(x, lp, cfg);
  }
  return x;
}

/// Teacher-forced forward for any mode over `batch` equal-length sequences
/// laid out back to back in `ids`.
///
/// vanilla_loop feeds each loop the previous loop's states at the same
/// position. plt feeds loop l >= 2 the embeddings plus loop l-1's states
/// shifted right by one position, zero at the first position.
inline ForwardOutput teacher_forced_forward(const Parameters& p, const ModelConfig& cfg,
                                            std::span<const int> ids, std::size_t batch = 1,
                                            PassCounter* counter = nullptr) {
  if (ids.empty() || batch == 0) throw EmptyInputError("forward: empty token sequence");
  if (ids.size() % batch != 0) throw DimensionError("forward: ids not divisible by batch");
  const std::size_t n = ids.size() / batch;
  if (n > static_cast<std::size_t>(cfg.max_seq)) {
    throw CapacityError("forward: sequence length " + std::to_string(n) + " exceeds max_seq");
  }
  std::vector<int> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i);

  ForwardOutput out;
  const Tensor e = embedding(p.embedding, ids);
  out.kv.resize(static_cast<std::size_t>(cfg.loops));
  Tensor x = e;
  for (int loop = 1; loop <= cfg.loops; ++loop) {
    if (loop > 1) {
      const Tensor& prev = out.acts.H.back();
      x = cfg.mode == Mode::plt ? add(e, shift_right(prev, n)) : prev;
    }
    const LoopKV* shared = loop > 1 ? &out.kv[0] : nullptr;
    out.acts.H.push_back(block_stack_forward(p, cfg, x, loop, positions, batch, shared,
                                             &out.kv[static_cast<std::size_t>(loop - 1)]));
    if (counter) ++counter->passes;
  }
  out.logits = head_forward(out.acts.H.back(), p, cfg);
  return out;
}

/// Training-mode PLT forward: parallel over tokens, serial over loops.
inline ForwardOutput plt_train_forward(const TokenSequence& tokens, const Parameters& p,
                                       const ModelConfig& cfg) {
  if (cfg.mode != Mode::plt) throw ConfigError("plt_train_forward requires mode=plt");
  if (tokens.empty()) throw EmptyInputError("plt_train_forward: empty token sequence");
  tokens.validate(cfg.vocab);
  return teacher_forced_forward(p, cfg, tokens.ids);
}

/// Serial looped forward: each loop consumes the previous loop's states.
inline ForwardOutput vanilla_loop_forward(const TokenSequence& tokens, const Parameters& p,
                                          const ModelConfig& cfg) {
  if (cfg.mode != Mode::vanilla_loop) throw ConfigError("vanilla_loop_forward requires mode=vanilla_loop");
  if (tokens.empty()) throw EmptyInputError("vanilla_loop_forward: empty token sequence");
  tokens.validate(cfg.vocab);
  return teacher_forced_forward(p, cfg, tokens.ids);
}

inline ForwardOutput vanilla_forward(const TokenSequence& tokens, const Parameters& p,
                                     const ModelConfig& cfg) {
  if (cfg.mode != Mode::vanilla) throw ConfigError("vanilla_forward requires mode=vanilla");
  if (tokens.empty()) throw EmptyInputError("vanilla_forward: empty token sequence");
  tokens.validate(cfg.vocab);
  return teacher_forced_forward(p, cfg, tokens.ids);
}

/// Multiply-add FLOPs (2 per MAC) for one decoded token, excluding attention
/// score/value products, which depend on context length.
struct FlopCount {
  std::size_t block_per_pass = 0;  // projections and MLP of one loop
  std::size_t gate_per_pass = 0;   // gate projection of one non-first loop
  std::size_t head = 0;
  std::size_t loops = 1;

  std::size_t blocks() const { return loops * block_per_pass; }
  std::size_t total() const {
    return blocks() + (loops > 1 ? (loops - 1) * gate_per_pass : 0) + head;
  }
};

inline FlopCount count_flops_per_token(const ModelConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto dkv = static_cast<std::size_t>(cfg.d_kv());
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  const auto layers = static_cast<std::size_t>(cfg.n_layers);
  FlopCount f;
  f.loops = static_cast<std::size_t>(cfg.loops);
  f.block_per_pass = layers * 2 * (d * d + 2 * d * dkv + d * d + 3 * d * ff);
  f.gate_per_pass = cfg.uses_gate() ? layers * 2 * d * static_cast<std::size_t>(cfg.n_heads) : 0;
  f.head = 2 * d * static_cast<std::size_t>(cfg.vocab);
  return f;
}

/// Attention FLOPs for one query row attending `context` keys in every layer.
inline std::size_t attention_flops(const ModelConfig& cfg, std::size_t context) {
  return static_cast<std::size_t>(cfg.n_layers) * 4 * context * static_cast<std::size_t>(cfg.d_model);
}

}  // namespace plt
