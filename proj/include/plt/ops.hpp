#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "plt/errors.hpp"
#include "plt/tensor.hpp"

// Differentiable tensor operations. Every op computes its forward values
// eagerly and, when recording, attaches a closure that accumulates into the
// gradients of its inputs.
namespace plt {

namespace detail {

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n]
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](detail::Node& self) {
    const double* g = self.grad.data();
    if (auto* ga = detail::grad_of(a)) {
      // ga += g * b^T
      const double* bd = b.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bd[p * n + j];
          (*ga)[i * k + p] += s;
        }
      }
    }
    if (auto* gb = detail::grad_of(b)) {
      // gb += a^T * g
      const double* ad = a.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = ad[i * k + p];
          double* row = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += aip * g[i * n + j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return detail::make_result({n, m}, std::move(out), {a}, [a, m, n](detail::Node& self) {
    auto* ga = detail::grad_of(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += self.grad[j * m + i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [a, b](detail::Node& self) {
    for (const Tensor* t : {&a, &b}) {
      if (auto* g = detail::grad_of(*t))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [a, b](detail::Node& self) {
    if (auto* ga = detail::grad_of(a))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * b[i];
    if (auto* gb = detail::grad_of(b))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * a[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return detail::make_result(a.shape(), std::move(out), {a}, [a, s](detail::Node& self) {
    auto* g = detail::grad_of(a);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
  });
}

/// x[m x n] + bias[n] broadcast over rows.
inline Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  detail::require_rank2(x, "add_row_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.size() != n) throw DimensionError("add_row_bias: bias length mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + bias[j];
  return detail::make_result(x.shape(), std::move(out), {x, bias},
                             [x, bias, m, n](detail::Node& self) {
                               if (auto* gx = detail::grad_of(x))
                                 for (std::size_t i = 0; i < gx->size(); ++i)
                                   (*gx)[i] += self.grad[i];
                               if (auto* gb = detail::grad_of(bias))
                                 for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j)
                                     (*gb)[j] += self.grad[i * n + j];
                             });
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::sigmoid_scalar(x[i]);
  auto result = detail::make_result(x.shape(), std::move(out), {x}, {});
  if (result.requires_grad()) {
    // Capture the output values, not the handle, to avoid a self-cycle.
    std::vector<double> s(result.data().begin(), result.data().end());
    result.node()->backward = [x, s = std::move(s)](detail::Node& self) {
      auto* g = detail::grad_of(x);
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s[i] * (1.0 - s[i]);
    };
  }
  return result;
}

/// x * sigmoid(x)
inline Tensor silu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * detail::sigmoid_scalar(x[i]);
  return detail::make_result(x.shape(), std::move(out), {x}, [x](detail::Node& self) {
    auto* g = detail::grad_of(x);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double s = detail::sigmoid_scalar(x[i]);
      (*g)[i] += self.grad[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

/// Row-wise softmax with per-row max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.data().data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(xi[j])) throw NumericError("softmax_rows: NaN input");
      mx = std::max(mx, xi[j]);
    }
    if (!std::isfinite(mx)) throw NumericError("softmax_rows: row has no finite maximum");
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += (out[i * n + j] = std::exp(xi[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= sum;
  }
  auto result = detail::make_result(x.shape(), std::move(out), {x}, {});
  if (result.requires_grad()) {
    std::vector<double> s(result.data().begin(), result.data().end());
    result.node()->backward = [x, s = std::move(s), m, n](detail::Node& self) {
      auto* g = detail::grad_of(x);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += s[i * n + j] * self.grad[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          (*g)[i * n + j] += s[i * n + j] * (self.grad[i * n + j] - dot);
      }
    };
  }
  return result;
}

/// Scales each row of x[.. x d] by 1/sqrt(mean(x^2) + eps), then by gain.
inline Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
  const std::size_t d = x.shape().back();
  if (d == 0 || gain.size() != d) {
    throw DimensionError("rmsnorm: gain length " + std::to_string(gain.size()) +
                         " does not match trailing extent " + std::to_string(d));
  }
  if (!(eps > 0.0)) throw NumericError("rmsnorm: eps must be positive");
  const std::size_t m = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> inv(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += x[i * d + j] * x[i * d + j];
    inv[i] = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] * inv[i] * gain[j];
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gain}, [x, gain, m, d, inv = std::move(inv)](detail::Node& self) {
        const double* g = self.grad.data();
        if (auto* gx = detail::grad_of(x)) {
          for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * gain[j] * x[i * d + j];
            const double r = inv[i];
            const double c = r * r * r * dot / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j)
              (*gx)[i * d + j] += r * gain[j] * g[i * d + j] - c * x[i * d + j];
          }
        }
        if (auto* gg = detail::grad_of(gain)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) (*gg)[j] += g[i * d + j] * x[i * d + j] * inv[i];
        }
      });
}

/// Gathers rows of table[vocab x d] by id.
inline Tensor embedding(const Tensor& table, std::span<const int> ids) {
  detail::require_rank2(table, "embedding");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw DimensionError("embedding: token id " + std::to_string(ids[i]) + " outside vocab " +
                           std::to_string(vocab));
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return detail::make_result({ids.size(), d}, std::move(out), {table},
                             [table, idv = std::move(idv), d](detail::Node& self) {
                               auto* g = detail::grad_of(table);
                               for (std::size_t i = 0; i < idv.size(); ++i)
                                 for (std::size_t j = 0; j < d; ++j)
                                   (*g)[static_cast<std::size_t>(idv[i]) * d + j] +=
                                       self.grad[i * d + j];
                             });
}

/// Rotary position encoding. x is [rows x heads*d_head]; row r is rotated by
/// its absolute position positions[r]. Pairs (2i, 2i+1) within each head use
/// frequency base^(-2i/d_head).
inline Tensor rope(const Tensor& x, std::span<const int> positions, std::size_t heads,
                   double base = 10000.0) {
  detail::require_rank2(x, "rope");
  const std::size_t m = x.shape()[0], width = x.shape()[1];
  if (positions.size() != m) throw DimensionError("rope: one position per row required");
  if (heads == 0 || width % heads != 0 || (width / heads) % 2 != 0) {
    throw DimensionError("rope: head width must be even");
  }
  const std::size_t dh = width / heads;
  std::vector<double> cs(m * dh / 2), sn(m * dh / 2);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t i = 0; i < dh / 2; ++i) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
      const double angle = static_cast<double>(positions[r]) * freq;
      cs[r * dh / 2 + i] = std::cos(angle);
      sn[r * dh / 2 + i] = std::sin(angle);
    }
  }
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = r * width + h * dh;
      for (std::size_t i = 0; i < dh / 2; ++i) {
        const double c = cs[r * dh / 2 + i], s = sn[r * dh / 2 + i];
        const double a = x[off + 2 * i], b = x[off + 2 * i + 1];
        out[off + 2 * i] = a * c - b * s;
        out[off + 2 * i + 1] = a * s + b * c;
      }
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x},
      [x, m, width, heads, dh, cs = std::move(cs), sn = std::move(sn)](detail::Node& self) {
        auto* g = detail::grad_of(x);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = r * width + h * dh;
            for (std::size_t i = 0; i < dh / 2; ++i) {
              const double c = cs[r * dh / 2 + i], s = sn[r * dh / 2 + i];
              const double ga = self.grad[off + 2 * i], gb = self.grad[off + 2 * i + 1];
              (*g)[off + 2 * i] += ga * c + gb * s;
              (*g)[off + 2 * i + 1] += -ga * s + gb * c;
            }
          }
        }
      });
}

/// Layout and mask for masked_attention. Queries and keys are grouped into
/// `batch` equal blocks; query i of a block may attend key j of the same block
/// iff k_pos[j] <= q_pos[i] and, when window > 0, k_pos[j] > q_pos[i] - window.
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t n_heads = 1;
  std::size_t n_kv_heads = 1;
  std::vector<int> q_pos;
  std::vector<int> k_pos;
  int window = 0;
};

inline bool attention_allowed(int q, int k, int window) {
  return k <= q && (window <= 0 || k > q - window);
}

/// Multi-head scaled dot-product attention under a position mask.
/// q is [batch*nq x n_heads*d_head]; k and v are [batch*nk x n_kv_heads*d_head].
/// Masked keys are skipped entirely, which equals a -inf logit.
inline Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const AttentionLayout& layout) {
  detail::require_rank2(q, "attention");
  detail::require_rank2(k, "attention");
  detail::require_same_shape(k, v, "attention");
  const std::size_t B = layout.batch, H = layout.n_heads, Hkv = layout.n_kv_heads;
  const std::size_t nq = layout.q_pos.size(), nk = layout.k_pos.size();
  if (B == 0 || H == 0 || Hkv == 0 || H % Hkv != 0) throw DimensionError("attention: bad head layout");
  if (q.shape()[0] != B * nq || k.shape()[0] != B * nk) {
    throw DimensionError("attention: row count does not match batch x positions");
  }
  if (q.shape()[1] % H != 0) throw DimensionError("attention: query width not divisible by heads");
  const std::size_t dh = q.shape()[1] / H;
  if (k.shape()[1] != Hkv * dh) {
    throw DimensionError("attention: key width " + std::to_string(k.shape()[1]) +
                         " does not match kv heads x head dim");
  }
  const std::size_t group = H / Hkv;
  const std::size_t qw = H * dh, kw = Hkv * dh;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

  // Allowed key indices per query, shared by every batch block and head.
  std::vector<std::vector<std::size_t>> allowed(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < nk; ++j)
      if (attention_allowed(layout.q_pos[i], layout.k_pos[j], layout.window)) allowed[i].push_back(j);
    if (allowed[i].empty()) {
      throw EmptyContextError("attention: query at position " + std::to_string(layout.q_pos[i]) +
                              " has no visible key");
    }
  }

  const bool record = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  std::vector<double> out(B * nq * qw, 0.0);
  // Probabilities, stored per (b, h, i) in the order of allowed[i].
  std::vector<std::vector<double>> probs;
  if (record) probs.resize(B * H * nq);
  std::vector<double> p;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t kh = h / group;
      for (std::size_t i = 0; i < nq; ++i) {
        const double* qi = q.data().data() + (b * nq + i) * qw + h * dh;
        const auto& keys = allowed[i];
        p.assign(keys.size(), 0.0);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < keys.size(); ++t) {
          const double* kj = k.data().data() + (b * nk + keys[t]) * kw + kh * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          p[t] = s * scl;
          mx = std::max(mx, p[t]);
        }
        if (std::isnan(mx)) throw NumericError("attention: NaN score");
        double sum = 0.0;
        for (double& x : p) sum += (x = std::exp(x - mx));
        double* oi = out.data() + (b * nq + i) * qw + h * dh;
        for (std::size_t t = 0; t < keys.size(); ++t) {
          p[t] /= sum;
          const double* vj = v.data().data() + (b * nk + keys[t]) * kw + kh * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[t] * vj[c];
        }
        if (record) probs[(b * H + h) * nq + i] = p;
      }
    }
  }
  if (!record) return Tensor({B * nq, qw}, std::move(out));
  return detail::make_result(
      {B * nq, qw}, std::move(out), {q, k, v},
      [q, k, v, B, H, nq, nk, dh, group, qw, kw, scl, allowed = std::move(allowed),
       probs = std::move(probs)](detail::Node& self) {
        auto* gq = detail::grad_of(q);
        auto* gk = detail::grad_of(k);
        auto* gv = detail::grad_of(v);
        std::vector<double> dp;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            const std::size_t kh = h / group;
            for (std::size_t i = 0; i < nq; ++i) {
              const auto& keys = allowed[i];
              const auto& pi = probs[(b * H + h) * nq + i];
              const double* go = self.grad.data() + (b * nq + i) * qw + h * dh;
              const double* qi = q.data().data() + (b * nq + i) * qw + h * dh;
              dp.assign(keys.size(), 0.0);
              double dot = 0.0;
              for (std::size_t t = 0; t < keys.size(); ++t) {
                const std::size_t vrow = (b * nk + keys[t]) * kw + kh * dh;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += go[c] * v[vrow + c];
                dp[t] = s;
                dot += pi[t] * s;
                if (gv)
                  for (std::size_t c = 0; c < dh; ++c) (*gv)[vrow + c] += pi[t] * go[c];
              }
              for (std::size_t t = 0; t < keys.size(); ++t) {
                const double ds = pi[t] * (dp[t] - dot) * scl;
                const std::size_t krow = (b * nk + keys[t]) * kw + kh * dh;
                if (gq)
                  for (std::size_t c = 0; c < dh; ++c)
                    (*gq)[(b * nq + i) * qw + h * dh + c] += ds * k[krow + c];
                if (gk)
                  for (std::size_t c = 0; c < dh; ++c) (*gk)[krow + c] += ds * qi[c];
              }
            }
          }
        }
      });
}

/// Per-head convex mix: out = g * local + (1 - g) * global, where g[rows x heads]
/// is broadcast across each head's d_head columns.
inline Tensor gated_mix(const Tensor& g, const Tensor& local, const Tensor& global) {
  detail::require_rank2(g, "gated_mix");
  detail::require_same_shape(local, global, "gated_mix");
  detail::require_rank2(local, "gated_mix");
  const std::size_t m = local.shape()[0], width = local.shape()[1], heads = g.shape()[1];
  if (g.shape()[0] != m || heads == 0 || width % heads != 0) {
    throw DimensionError("gated_mix: gate shape " + shape_string(g.shape()) +
                         " does not fit output " + shape_string(local.shape()));
  }
  const std::size_t dh = width / heads;
  std::vector<double> out(local.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t h = 0; h < heads; ++h) {
      const double gv = g[r * heads + h];
      for (std::size_t c = 0; c < dh; ++c) {
        const std::size_t idx = r * width + h * dh + c;
        out[idx] = gv * local[idx] + (1.0 - gv) * global[idx];
      }
    }
  return detail::make_result(
      local.shape(), std::move(out), {g, local, global},
      [g, local, global, m, width, heads, dh](detail::Node& self) {
        auto* gg = detail::grad_of(g);
        auto* gl = detail::grad_of(local);
        auto* gG = detail::grad_of(global);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t h = 0; h < heads; ++h) {
            const double gv = g[r * heads + h];
            double acc = 0.0;
            for (std::size_t c = 0; c < dh; ++c) {
              const std::size_t idx = r * width + h * dh + c;
              const double up = self.grad[idx];
              if (gl) (*gl)[idx] += gv * up;
              if (gG) (*gG)[idx] += (1.0 - gv) * up;
              acc += up * (local[idx] - global[idx]);
            }
            if (gg) (*gg)[r * heads + h] += acc;
          }
      });
}

/// Shifts each length-`len` block of rows down by one, zero-filling the first
/// row of every block and dropping the last.
inline Tensor shift_right(const Tensor& x, std::size_t len) {
  detail::require_rank2(x, "shift_right");
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  if (len == 0 || rows % len != 0) throw DimensionError("shift_right: rows not a multiple of length");
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (r % len == 0) continue;
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>((r - 1) * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return detail::make_result(x.shape(), std::move(out), {x}, [x, rows, d, len](detail::Node& self) {
    auto* g = detail::grad_of(x);
    for (std::size_t r = 0; r < rows; ++r) {
      if (r % len == 0) continue;
      for (std::size_t c = 0; c < d; ++c) (*g)[(r - 1) * d + c] += self.grad[r * d + c];
    }
  });
}

/// Selected rows of a matrix, in the given order.
inline Tensor take_rows(const Tensor& x, std::span<const std::size_t> rows) {
  detail::require_rank2(x, "take_rows");
  const std::size_t d = x.shape()[1];
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.shape()[0]) throw DimensionError("take_rows: row index out of range");
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return detail::make_result({rows.size(), d}, std::move(out), {x},
                             [x, idx = std::move(idx), d](detail::Node& self) {
                               auto* g = detail::grad_of(x);
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t c = 0; c < d; ++c)
                                   (*g)[idx[i] * d + c] += self.grad[i * d + c];
                             });
}

/// Row-wise concatenation of matrices with equal column counts.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t d = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) throw DimensionError("concat_rows: column mismatch");
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_result({rows, d}, std::move(out), parts, [parts](detail::Node& self) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (auto* g = detail::grad_of(p))
        for (std::size_t i = 0; i < p.size(); ++i) (*g)[i] += self.grad[off + i];
      off += p.size();
    }
  });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result({1}, {s}, {x}, [x](detail::Node& self) {
    auto* g = detail::grad_of(x);
    for (double& gi : *g) gi += self.grad[0];
  });
}

inline Tensor sum_squares(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return detail::make_result({1}, {s}, {x}, [x](detail::Node& self) {
    auto* g = detail::grad_of(x);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += 2.0 * x[i] * self.grad[0];
  });
}

/// Weighted mean negative log-likelihood. Row r of logits[rows x vocab] is
/// scored against targets[r] with weight weights[r]; zero-weight rows are
/// skipped. Throws if every weight is zero.
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                            std::span<const double> weights) {
  detail::require_rank2(logits, "cross_entropy");
  const std::size_t m = logits.shape()[0], V = logits.shape()[1];
  if (targets.size() != m || weights.size() != m) {
    throw DimensionError("cross_entropy: targets/weights must have one entry per row");
  }
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (!(wsum > 0.0)) throw EmptyInputError("cross_entropy: every position is masked");
  std::vector<double> soft(m * V, 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (weights[r] == 0.0) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= V) {
      throw DimensionError("cross_entropy: target outside vocab");
    }
    const double* row = logits.data().data() + r * V;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < V; ++j) mx = std::max(mx, row[j]);
    if (!std::isfinite(mx)) throw NumericError("cross_entropy: non-finite logits");
    double sum = 0.0;
    for (std::size_t j = 0; j < V; ++j) sum += (soft[r * V + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < V; ++j) soft[r * V + j] /= sum;
    const double lse = mx + std::log(sum);
    loss += weights[r] * (lse - row[targets[r]]);
  }
  loss /= wsum;
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> wt(weights.begin(), weights.end());
  return detail::make_result({1}, {loss}, {logits},
                             [logits, m, V, wsum, tg = std::move(tg), wt = std::move(wt),
                              soft = std::move(soft)](detail::Node& self) {
                               auto* g = detail::grad_of(logits);
                               const double up = self.grad[0] / wsum;
                               for (std::size_t r = 0; r < m; ++r) {
                                 if (wt[r] == 0.0) continue;
                                 for (std::size_t j = 0; j < V; ++j) {
                                   const double onehot =
                                       (static_cast<int>(j) == tg[r]) ? 1.0 : 0.0;
                                   (*g)[r * V + j] += up * wt[r] * (soft[r * V + j] - onehot);
                                 }
                               }
                             });
}

}  // namespace plt
