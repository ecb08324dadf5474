#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "json.hpp"
#include "plt/errors.hpp"

namespace plt {

enum class Mode { vanilla, vanilla_loop, plt };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::vanilla: return "vanilla";
    case Mode::vanilla_loop: return "vanilla_loop";
    case Mode::plt: return "plt";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "vanilla") return Mode::vanilla;
  if (s == "vanilla_loop" || s == "loop") return Mode::vanilla_loop;
  if (s == "plt") return Mode::plt;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected vanilla, vanilla_loop or plt)");
}

/// Architecture hyperparameters.
///
/// mode=plt with kv_share=false is the cross-loop-parallel model whose later
/// loops keep their own full KV caches; kv_share=true makes every later loop
/// attend loop 1's cache, and gswa adds the gated sliding-window branch.
struct ModelConfig {
  int vocab = 16;
  int d_model = 16;
  int n_layers = 2;
  int n_heads = 2;
  int n_kv_heads = 2;
  int d_ff = 32;
  int loops = 1;
  int window = 0;
  Mode mode = Mode::vanilla;
  bool kv_share = false;
  bool gswa = false;
  bool weight_tying = false;
  /// One gate per non-first loop instead of one per layer.
  bool gate_per_loop = false;
  int max_seq = 64;
  double rope_base = 10000.0;
  double norm_eps = 1e-6;

  int d_head() const { return d_model / n_heads; }
  int d_kv() const { return n_kv_heads * d_head(); }

  /// Later loops attend loop 1's cache.
  bool shares_kv() const { return mode == Mode::plt && kv_share; }
  /// Later loops run the gated local/global attention.
  bool uses_gate() const { return mode == Mode::plt && gswa && loops > 1; }
  int gate_sets() const { return uses_gate() ? (gate_per_loop ? loops - 1 : 1) : 0; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (vocab < 1) fail("vocab must be >= 1");
    if (d_model < 1 || n_heads < 1 || n_kv_heads < 1) fail("dimensions must be >= 1");
    if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (n_heads % n_kv_heads != 0) fail("n_heads must be divisible by n_kv_heads");
    if (d_head() % 2 != 0) fail("head dimension must be even for rotary encoding");
    if (n_layers < 0) fail("n_layers must be >= 0");
    if (d_ff < 1) fail("d_ff must be >= 1");
    if (loops < 1) fail("loops must be >= 1");
    if (window < 0) fail("window must be >= 0");
    if (max_seq < 1) fail("max_seq must be >= 1");
    if (mode == Mode::vanilla && loops != 1) fail("mode=vanilla requires loops=1");
    if (kv_share && mode != Mode::plt) fail("kv_share requires mode=plt");
    if (gswa && !kv_share) fail("gswa requires kv_share");
    if (gswa && window < 1) fail("gswa requires window >= 1");
    if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
    if (!(rope_base > 1.0)) fail("rope_base must exceed 1");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab", c.vocab},
                     {"d_model", c.d_model},
                     {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"n_kv_heads", c.n_kv_heads},
                     {"d_ff", c.d_ff},
                     {"loops", c.loops},
                     {"window", c.window},
                     {"mode", std::string(to_string(c.mode))},
                     {"kv_share", c.kv_share},
                     {"gswa", c.gswa},
                     {"weight_tying", c.weight_tying},
                     {"gate_per_loop", c.gate_per_loop},
                     {"max_seq", c.max_seq},
                     {"rope_base", c.rope_base},
                     {"norm_eps", c.norm_eps}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("vocab").get_to(c.vocab);
  j.at("d_model").get_to(c.d_model);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("n_kv_heads").get_to(c.n_kv_heads);
  j.at("d_ff").get_to(c.d_ff);
  j.at("loops").get_to(c.loops);
  j.at("window").get_to(c.window);
  c.mode = parse_mode(j.at("mode").get<std::string>());
  j.at("kv_share").get_to(c.kv_share);
  j.at("gswa").get_to(c.gswa);
  j.at("weight_tying").get_to(c.weight_tying);
  j.at("gate_per_loop").get_to(c.gate_per_loop);
  j.at("max_seq").get_to(c.max_seq);
  j.at("rope_base").get_to(c.rope_base);
  j.at("norm_eps").get_to(c.norm_eps);
}

/// Same weights, different execution mode. Gate parameters are kept but only
/// consulted when the target mode uses them.
inline ModelConfig with_mode(ModelConfig cfg, Mode mode) {
  cfg.mode = mode;
  if (mode != Mode::plt) {
    cfg.kv_share = false;
    cfg.gswa = false;
  }
  if (mode == Mode::vanilla) cfg.loops = 1;
  return cfg;
}

}  // namespace plt
