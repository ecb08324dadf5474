#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "plt/errors.hpp"
#include "plt/tensor.hpp"

namespace plt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

/// Adam with bias correction and no weight decay.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (const Tensor& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::size_t steps() const { return t_; }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad()) continue;
      const auto g = p.grad();
      auto x = p.mutable_data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        x[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Scales every gradient so the global L2 norm is at most max_norm. Returns
/// the norm before clipping.
inline double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double ss = 0.0;
  for (const Tensor& p : params)
    for (double g : p.grad()) ss += g * g;
  const double norm = std::sqrt(ss);
  if (!std::isfinite(norm)) throw DivergenceError("gradient norm is not finite");
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& p : params)
      for (double& g : p.mutable_grad()) g *= s;
  }
  return norm;
}

struct LrSchedule {
  double peak = 3e-3;
  int warmup = 0;
  int total = 1;
  double min_ratio = 0.1;

  /// Linear warmup to peak, then cosine decay to min_ratio * peak.
  double at(int step) const {
    if (warmup > 0 && step < warmup) return peak * static_cast<double>(step + 1) / warmup;
    const int span = std::max(1, total - warmup);
    const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
    const double lo = peak * min_ratio;
    return lo + 0.5 * (peak - lo) * (1.0 + std::cos(std::numbers::pi * progress));
  }
};

}  // namespace plt
