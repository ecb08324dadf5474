#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "plt/config.hpp"
#include "plt/model.hpp"
#include "plt/parameters.hpp"
#include "plt/rng.hpp"

namespace plt::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
  std::vector<double> data(shape_size(shape));
  for (double& x : data) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

inline std::vector<int> random_tokens(std::size_t n, int vocab, Rng& rng) {
  std::vector<int> ids(n);
  for (int& t : ids) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
  return ids;
}

inline ModelConfig small_config(Mode mode, int loops, int window = 0, int d = 16, int layers = 2) {
  ModelConfig c;
  c.vocab = 13;
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = 2;
  c.n_kv_heads = 1;
  c.d_ff = 2 * d;
  c.loops = mode == Mode::vanilla ? 1 : loops;
  c.mode = mode;
  c.window = window;
  c.kv_share = mode == Mode::plt;
  c.gswa = mode == Mode::plt && window > 0;
  c.max_seq = 64;
  return c;
}

/// Weights large enough that every path visibly moves the logits.
inline Parameters random_params(const ModelConfig& cfg, std::uint64_t seed, double stddev = 0.3) {
  Rng rng(seed);
  InitOptions opt;
  opt.stddev = stddev;
  opt.scale_residual = false;
  opt.randomize_all = true;
  return init_parameters(cfg, rng, opt);
}

}  // namespace plt::testing
