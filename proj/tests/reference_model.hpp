#pragma once

// Plain-loop transcription of the looped model, used as an oracle. Shares no
// code with the library beyond the parameter containers.

#include <algorithm>
#include <cmath>
#include <vector>

#include "plt/config.hpp"
#include "plt/parameters.hpp"

namespace plt::testing {

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

inline Vec ref_linear(const Vec& x, const Tensor& w) {
  const std::size_t in = w.shape()[0], out = w.shape()[1];
  Vec y(out, 0.0);
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j) y[j] += x[i] * w.at(i, j);
  return y;
}

inline Vec ref_rmsnorm(const Vec& x, const Tensor& g, double eps) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double r = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * r * g[i];
  return y;
}

inline Vec ref_rope(Vec x, int pos, std::size_t dh, double base) {
  for (std::size_t h = 0; h < x.size() / dh; ++h)
    for (std::size_t i = 0; i < dh / 2; ++i) {
      const double ang = pos * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
      const double a = x[h * dh + 2 * i], b = x[h * dh + 2 * i + 1];
      x[h * dh + 2 * i] = a * std::cos(ang) - b * std::sin(ang);
      x[h * dh + 2 * i + 1] = a * std::sin(ang) + b * std::cos(ang);
    }
  return x;
}

// Attention of one query over the given key rows, grouped-query layout.
inline Vec ref_attend(const Vec& q, const Rows& ks, const Rows& vs, std::size_t heads, std::size_t kv_heads,
                      std::size_t dh) {
  Vec out(heads * dh, 0.0);
  const std::size_t group = heads / kv_heads;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t kh = h / group;
    Vec s(ks.size());
    double mx = -1e300;
    for (std::size_t j = 0; j < ks.size(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < dh; ++c) dot += q[h * dh + c] * ks[j][kh * dh + c];
      s[j] = dot / std::sqrt(static_cast<double>(dh));
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (double& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < ks.size(); ++j)
      for (std::size_t c = 0; c < dh; ++c) out[h * dh + c] += s[j] / z * vs[j][kh * dh + c];
  }
  return out;
}

inline Vec ref_mlp(const Vec& x, const LayerParams& lp, double eps) {
  const Vec h = ref_rmsnorm(x, lp.mlp_norm, eps);
  Vec a = ref_linear(h, lp.w_gate);
  const Vec b = ref_linear(h, lp.w_up);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] / (1.0 + std::exp(-a[i])) * b[i];
  const Vec y = ref_linear(a, lp.w_down);
  Vec out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return out;
}

struct RefOutput {
  Rows logits;
  std::vector<Rows> states;  // states[l - 1][j]
};

// Teacher-forced logits for every position, any mode.
inline RefOutput reference_forward(const Parameters& p, const ModelConfig& cfg, const std::vector<int>& ids) {
  const std::size_t n = ids.size(), d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads), Hkv = static_cast<std::size_t>(cfg.n_kv_heads);
  const std::size_t dh = d / H, layers = p.layers.size();
  const bool plt = cfg.mode == Mode::plt;
  const bool share = plt && cfg.kv_share && cfg.loops > 1;
  const bool gate = share && cfg.gswa;
  const auto w = static_cast<std::size_t>(cfg.window);

  Rows E(n);
  for (std::size_t j = 0; j < n; ++j) E[j] = Vec(p.embedding.row(static_cast<std::size_t>(ids[j])).begin(),
                                                 p.embedding.row(static_cast<std::size_t>(ids[j])).end());
  RefOutput out;
  std::vector<Rows> K1(layers), V1(layers);
  for (int loop = 1; loop <= cfg.loops; ++loop) {
    Rows X(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (loop == 1) {
        X[j] = E[j];
      } else if (plt) {
        X[j] = E[j];
        if (j > 0)
          for (std::size_t c = 0; c < d; ++c) X[j][c] += out.states.back()[j - 1][c];
      } else {
        X[j] = out.states.back()[j];
      }
    }
    for (std::size_t layer = 0; layer < layers; ++layer) {
      const LayerParams& lp = p.layers[layer];
      Rows Q(n), Qpre(n), K(n), V(n);
      for (std::size_t j = 0; j < n; ++j) {
        const Vec h = ref_rmsnorm(X[j], lp.attn_norm, cfg.norm_eps);
        Qpre[j] = ref_linear(h, lp.wq);
        Q[j] = ref_rope(Qpre[j], static_cast<int>(j), dh, cfg.rope_base);
        K[j] = ref_rope(ref_linear(h, lp.wk), static_cast<int>(j), dh, cfg.rope_base);
        V[j] = ref_linear(h, lp.wv);
      }
      if (loop == 1) {
        K1[layer] = K;
        V1[layer] = V;
      }
      Rows Y(n);
      for (std::size_t j = 0; j < n; ++j) {
        Vec y;
        if (!share || loop == 1) {
          y = ref_attend(Q[j], Rows(K.begin(), K.begin() + j + 1), Rows(V.begin(), V.begin() + j + 1), H, Hkv, dh);
        } else {
          const Vec global = ref_attend(Q[j], Rows(K1[layer].begin(), K1[layer].begin() + j + 1),
                                        Rows(V1[layer].begin(), V1[layer].begin() + j + 1), H, Hkv, dh);
          if (!gate) {
            y = global;
          } else {
            const std::size_t lo = j + 1 > w ? j + 1 - w : 0;
            const Vec local = ref_attend(Q[j], Rows(K.begin() + lo, K.begin() + j + 1),
                                         Rows(V.begin() + lo, V.begin() + j + 1), H, Hkv, dh);
            const GateParams& gp = p.gate(layer, loop);
            const Vec logit = ref_linear(Qpre[j], gp.weight);
            y.resize(d);
            for (std::size_t hh = 0; hh < H; ++hh) {
              const double g = 1.0 / (1.0 + std::exp(-(logit[hh] + gp.bias[hh])));
              for (std::size_t c = 0; c < dh; ++c)
                y[hh * dh + c] = g * local[hh * dh + c] + (1.0 - g) * global[hh * dh + c];
            }
          }
        }
        Y[j] = ref_linear(y, lp.wo);
      }
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < d; ++c) X[j][c] += Y[j][c];
        X[j] = ref_mlp(X[j], lp, cfg.norm_eps);
      }
    }
    out.states.push_back(X);
  }
  for (std::size_t j = 0; j < n; ++j) {
    const Vec h = ref_rmsnorm(out.states.back()[j], p.final_norm, cfg.norm_eps);
    Vec logit(static_cast<std::size_t>(cfg.vocab), 0.0);
    for (std::size_t t = 0; t < logit.size(); ++t)
      for (std::size_t c = 0; c < d; ++c)
        logit[t] += h[c] * (cfg.weight_tying ? p.embedding.at(t, c) : p.head.at(c, t));
    out.logits.push_back(logit);
  }
  return out;
}

inline double max_abs_diff(const Tensor& t, const Rows& rows) {
  double m = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m = std::max(m, std::abs(t.at(r, c) - rows[r][c]));
  return m;
}

}  // namespace plt::testing
