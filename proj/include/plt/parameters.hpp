#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "plt/config.hpp"
#include "plt/rng.hpp"
#include "plt/tensor.hpp"

namespace plt {

/// Head-wise gate: one scalar logit per head from the pre-rotary query.
struct GateParams {
  Tensor weight;  // [d_model x n_heads]
  Tensor bias;    // [n_heads]
};

struct LayerParams {
  Tensor attn_norm;  // [d_model]
  Tensor wq;         // [d_model x d_model]
  Tensor wk;         // [d_model x d_kv]
  Tensor wv;         // [d_model x d_kv]
  Tensor wo;         // [d_model x d_model]
  Tensor mlp_norm;   // [d_model]
  Tensor w_gate;     // [d_model x d_ff], SwiGLU gate branch
  Tensor w_up;       // [d_model x d_ff]
  Tensor w_down;     // [d_ff x d_model]
  std::vector<GateParams> gates;
};

/// One weight set shared by every loop.
struct Parameters {
  Tensor embedding;  // [vocab x d_model]
  std::vector<LayerParams> layers;
  Tensor final_norm;  // [d_model]
  Tensor head;        // [d_model x vocab]; undefined when tied to the embedding

  /// Gate used by `loop` (>= 2) in `layer`.
  const GateParams& gate(std::size_t layer, int loop) const {
    const auto& g = layers.at(layer).gates;
    if (g.empty()) throw ConfigError("model has no gate parameters");
    return g.size() == 1 ? g.front() : g.at(static_cast<std::size_t>(loop - 2));
  }

  /// Every tensor with a stable name, in serialization order.
  std::vector<std::pair<std::string, Tensor>> named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embedding", embedding);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const std::string p = "layers." + std::to_string(i) + ".";
      out.emplace_back(p + "attn_norm", l.attn_norm);
      out.emplace_back(p + "wq", l.wq);
      out.emplace_back(p + "wk", l.wk);
      out.emplace_back(p + "wv", l.wv);
      out.emplace_back(p + "wo", l.wo);
      for (std::size_t g = 0; g < l.gates.size(); ++g) {
        const std::string gp = p + "gate." + std::to_string(g) + ".";
        out.emplace_back(gp + "weight", l.gates[g].weight);
        out.emplace_back(gp + "bias", l.gates[g].bias);
      }
      out.emplace_back(p + "mlp_norm", l.mlp_norm);
      out.emplace_back(p + "w_gate", l.w_gate);
      out.emplace_back(p + "w_up", l.w_up);
      out.emplace_back(p + "w_down", l.w_down);
    }
    out.emplace_back("final_norm", final_norm);
    if (head.defined()) out.emplace_back("head", head);
    return out;
  }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  void zero_grad() const {
    for (auto t : tensors()) t.zero_grad();
  }

  Parameters clone() const;
};

/// Shapes each named tensor must have for `cfg`.
inline std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto dkv = static_cast<std::size_t>(cfg.d_kv());
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  const auto V = static_cast<std::size_t>(cfg.vocab);
  const auto H = static_cast<std::size_t>(cfg.n_heads);
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("embedding", Shape{V, d});
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    out.emplace_back(p + "attn_norm", Shape{d});
    out.emplace_back(p + "wq", Shape{d, d});
    out.emplace_back(p + "wk", Shape{d, dkv});
    out.emplace_back(p + "wv", Shape{d, dkv});
    out.emplace_back(p + "wo", Shape{d, d});
    for (int g = 0; g < cfg.gate_sets(); ++g) {
      const std::string gp = p + "gate." + std::to_string(g) + ".";
      out.emplace_back(gp + "weight", Shape{d, H});
      out.emplace_back(gp + "bias", Shape{H});
    }
    out.emplace_back(p + "mlp_norm", Shape{d});
    out.emplace_back(p + "w_gate", Shape{d, ff});
    out.emplace_back(p + "w_up", Shape{d, ff});
    out.emplace_back(p + "w_down", Shape{ff, d});
  }
  out.emplace_back("final_norm", Shape{d});
  if (!cfg.weight_tying) out.emplace_back("head", Shape{d, V});
  return out;
}

/// Builds Parameters from tensors listed in parameter_layout order.
inline Parameters assemble_parameters(const ModelConfig& cfg, std::vector<Tensor> flat) {
  const auto layout = parameter_layout(cfg);
  if (flat.size() != layout.size()) throw DimensionError("parameter count does not match config");
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i].shape() != layout[i].second) {
      throw DimensionError("parameter " + layout[i].first + " has shape " +
                           shape_string(flat[i].shape()) + ", expected " +
                           shape_string(layout[i].second));
    }
    flat[i].set_requires_grad(true);
  }
  std::size_t k = 0;
  Parameters p;
  p.embedding = flat[k++];
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : p.layers) {
    l.attn_norm = flat[k++];
    l.wq = flat[k++];
    l.wk = flat[k++];
    l.wv = flat[k++];
    l.wo = flat[k++];
    for (int g = 0; g < cfg.gate_sets(); ++g) {
      GateParams gp;
      gp.weight = flat[k++];
      gp.bias = flat[k++];
      l.gates.push_back(std::move(gp));
    }
    l.mlp_norm = flat[k++];
    l.w_gate = flat[k++];
    l.w_up = flat[k++];
    l.w_down = flat[k++];
  }
  p.final_norm = flat[k++];
  if (!cfg.weight_tying) p.head = flat[k++];
  return p;
}

inline Parameters Parameters::clone() const {
  std::vector<Tensor> flat;
  for (const auto& t : tensors()) flat.push_back(t.clone());
  // Rebuild through the same order named() produced.
  Parameters p = *this;
  std::size_t k = 0;
  p.embedding = flat[k++];
  for (auto& l : p.layers) {
    l.attn_norm = flat[k++];
    l.wq = flat[k++];
    l.wk = flat[k++];
    l.wv = flat[k++];
    l.wo = flat[k++];
    for (auto& g : l.gates) {
      g.weight = flat[k++];
      g.bias = flat[k++];
    }
    l.mlp_norm = flat[k++];
    l.w_gate = flat[k++];
    l.w_up = flat[k++];
    l.w_down = flat[k++];
  }
  p.final_norm = flat[k++];
  if (head.defined()) p.head = flat[k++];
  for (auto& t : p.tensors()) t.set_requires_grad(true);
  return p;
}

struct InitOptions {
  double stddev = 0.02;
  /// Scale residual output projections by 1/sqrt(2 * n_layers).
  bool scale_residual = true;
  /// Draw norm gains and gate weights randomly instead of ones/zeros; used by
  /// equivalence tests that want every parameter to matter.
  bool randomize_all = false;
};

inline Parameters init_parameters(const ModelConfig& cfg, Rng& rng, const InitOptions& opt = {}) {
  cfg.validate();
  const double resid = opt.scale_residual && cfg.n_layers > 0
                           ? opt.stddev / std::sqrt(2.0 * cfg.n_layers)
                           : opt.stddev;
  std::vector<Tensor> flat;
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    std::vector<double> data(shape_size(shape));
    const bool is_norm = name.ends_with("norm");
    const bool is_gate = name.find(".gate.") != std::string::npos;
    const bool is_resid = name.ends_with(".wo") || name.ends_with(".w_down");
    for (double& x : data) {
      if (is_norm) {
        x = opt.randomize_all ? 1.0 + 0.2 * rng.normal() : 1.0;
      } else if (is_gate) {
        x = opt.randomize_all ? opt.stddev * rng.normal() : 0.0;
      } else {
        x = rng.normal(0.0, is_resid ? resid : opt.stddev);
      }
    }
    flat.emplace_back(shape, std::move(data), true);
  }
  return assemble_parameters(cfg, std::move(flat));
}

inline std::size_t count_params(const Parameters& p) {
  std::size_t n = 0;
  for (const auto& t : p.tensors()) n += t.size();
  return n;
}

inline std::size_t count_params(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& [name, shape] : parameter_layout(cfg)) n += shape_size(shape);
  return n;
}

}  // namespace plt
