#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "plt/config.hpp"
#include "plt/errors.hpp"
#include "plt/kv_cache.hpp"
#include "plt/ops.hpp"
#include "plt/parameters.hpp"

namespace plt {

struct HeadLayout {
  std::size_t n_heads = 1;
  std::size_t n_kv_heads = 1;

  static HeadLayout of(const ModelConfig& cfg) {
    return {static_cast<std::size_t>(cfg.n_heads), static_cast<std::size_t>(cfg.n_kv_heads)};
  }
};

/// Row i attends every key whose position is <= q_positions[i].
inline Tensor causal_attend(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::span<const int> q_positions, std::span<const int> k_positions,
                            HeadLayout heads, std::size_t batch = 1) {
  AttentionLayout layout;
  layout.batch = batch;
  layout.n_heads = heads.n_heads;
  layout.n_kv_heads = heads.n_kv_heads;
  layout.q_pos.assign(q_positions.begin(), q_positions.end());
  layout.k_pos.assign(k_positions.begin(), k_positions.end());
  return masked_attention(q, k, v, layout);
}

/// Causal attention restricted to keys in [p - w + 1, p].
inline Tensor window_attend(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::span<const int> q_positions, std::span<const int> k_positions,
                            int window, HeadLayout heads, std::size_t batch = 1) {
  if (window < 1) throw ConfigError("sliding-window attention needs window >= 1");
  AttentionLayout layout;
  layout.batch = batch;
  layout.n_heads = heads.n_heads;
  layout.n_kv_heads = heads.n_kv_heads;
  layout.q_pos.assign(q_positions.begin(), q_positions.end());
  layout.k_pos.assign(k_positions.begin(), k_positions.end());
  layout.window = window;
  return masked_attention(q, k, v, layout);
}

/// Sliding-window attention over the private entries a non-first loop keeps
/// in the window cache. The cache must already hold the query's own position.
inline Tensor swa_attend(const Tensor& q, const WindowKVCache& cache, int loop, std::size_t layer,
                         std::span<const int> q_positions, int window, HeadLayout heads) {
  if (loop < 2) throw InvalidLoopError("swa_attend: loop 1 has no window cache");
  const KVRing& ring = cache.ring(layer, loop);
  const auto positions = ring.positions();
  return window_attend(q, ring.keys(), ring.values(), q_positions, positions, window, heads);
}

/// g = sigmoid(q_pre W + b), one value per head.
inline Tensor gate_values(const Tensor& q_pre, const GateParams& gate) {
  return sigmoid(add_row_bias(matmul(q_pre, gate.weight), gate.bias));
}

/// g * y_local + (1 - g) * y_global with g from the pre-rotary query.
inline Tensor gated_fuse(const Tensor& q_pre, const Tensor& y_local, const Tensor& y_global,
                         const GateParams& gate) {
  if (y_local.shape() != y_global.shape()) {
    throw DimensionError("gated_fuse: local and global outputs differ in shape");
  }
  return gated_mix(gate_values(q_pre, gate), y_local, y_global);
}

/// Projected and rotated attention inputs for a block of rows.
struct QKV {
  Tensor q_pre;  // query before rotary encoding, the gate input
  Tensor q;
  Tensor k;
  Tensor v;
};

inline QKV project_qkv(const Tensor& h, const LayerParams& lp, std::span<const int> positions,
                       const ModelConfig& cfg) {
  QKV out;
  out.q_pre = matmul(h, lp.wq);
  out.q = rope(out.q_pre, positions, static_cast<std::size_t>(cfg.n_heads), cfg.rope_base);
  out.k = rope(matmul(h, lp.wk), positions, static_cast<std::size_t>(cfg.n_kv_heads), cfg.rope_base);
  out.v = matmul(h, lp.wv);
  return out;
}

/// Attention output (before the output projection) of one non-first-loop row
/// block whose own K/V were already appended to the caches. Global attention
/// reads `global`; the gated local branch reads the loop's window ring.
inline Tensor nonfirst_mix(const QKV& x, const SharedKVCache& global, const WindowKVCache* window,
                           const Parameters& params, std::size_t layer, int loop,
                           std::span<const int> positions, const ModelConfig& cfg) {
  const HeadLayout heads = HeadLayout::of(cfg);
  const Tensor y_global = causal_attend(x.q, global.keys(layer), global.values(layer), positions,
                                        global.positions(layer), heads);
  if (!cfg.uses_gate()) return y_global;
  const Tensor y_local = swa_attend(x.q, *window, loop, layer, positions, cfg.window, heads);
  return gated_fuse(x.q_pre, y_local, y_global, params.gate(layer, loop));
}

/// Attention sublayer of a non-first loop over cached state.
///
/// `h` holds normalized hidden rows at `positions` (increasing). Their keys
/// and values go into the loop's window ring; the shared cache must already
/// cover every position up to the last query. Returns the output projection
/// of the gated fusion of shared-cache attention and sliding-window attention.
inline Tensor nonfirst_loop_attention(const Tensor& h, const SharedKVCache& shared,
                                      WindowKVCache& window, const Parameters& params,
                                      std::size_t layer, int loop, std::span<const int> positions,
                                      const ModelConfig& cfg) {
  if (loop < 2) throw InvalidLoopError("nonfirst_loop_attention: loop must be >= 2");
  if (!positions.empty() && (shared.size(layer) == 0 ||
                             shared.positions(layer).back() < positions.back())) {
    throw EmptyContextError("nonfirst_loop_attention: shared cache does not reach the query");
  }
  const LayerParams& lp = params.layers.at(layer);
  const QKV x = project_qkv(h, lp, positions, cfg);
  // Row by row, so a ring smaller than the block still holds each query's window.
  std::vector<Tensor> rows;
  for (std::size_t r = 0; r < positions.size(); ++r) {
    if (cfg.uses_gate()) window.append(layer, loop, positions[r], x.k.row(r), x.v.row(r));
    const std::size_t idx[] = {r};
    const QKV xr{take_rows(x.q_pre, idx), take_rows(x.q, idx), {}, {}};
    rows.push_back(nonfirst_mix(xr, shared, &window, params, layer, loop, positions.subspan(r, 1), cfg));
  }
  return matmul(concat_rows(rows), lp.wo);
}

}  // namespace plt
