#pragma once

// First-order roofline accounting for per-token decode cost of the looped
// architecture family: parameters, FLOPs, KV-cache bytes, latency.

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "plt/config.hpp"
#include "plt/errors.hpp"
#include "plt/model.hpp"
#include "plt/parameters.hpp"

namespace plt {

struct HardwareProfile {
  double mem_bandwidth = 2.0e11;        // bytes/s
  double peak_flops = 1.0e14;           // flop/s
  double weight_bytes_per_param = 1.0;  // low-bit weights plus overhead
  double kv_bytes_per_element = 1.0;    // one stored K or V scalar
  double act_bytes_per_element = 1.0;   // micro-batch activation traffic

  void validate() const {
    if (!(mem_bandwidth > 0) || !(peak_flops > 0) || !(weight_bytes_per_param > 0) || !(kv_bytes_per_element > 0) ||
        !(act_bytes_per_element > 0)) {
      throw ConfigError("hardware profile: every field must be positive");
    }
  }

  /// Calibrated so the reference model decodes near 4.8 ms at batch 4.
  static HardwareProfile memory_bound() { return {}; }
  /// Bandwidth effectively unlimited; FLOPs decide latency.
  static HardwareProfile compute_bound() {
    HardwareProfile h;
    h.mem_bandwidth = 1.0e30;
    h.peak_flops = 1.0e12;
    return h;
  }
};

enum class ArchRow { vanilla, loop, loop_clp, loop_clp_kvshare, plt };

inline const char* to_string(ArchRow r) {
  switch (r) {
    case ArchRow::vanilla: return "vanilla";
    case ArchRow::loop: return "loop";
    case ArchRow::loop_clp: return "loop+clp";
    case ArchRow::loop_clp_kvshare: return "loop+clp+kvshare";
    case ArchRow::plt: return "plt";
  }
  return "?";
}

inline ArchRow parse_arch_row(const std::string& s) {
  for (ArchRow r : {ArchRow::vanilla, ArchRow::loop, ArchRow::loop_clp, ArchRow::loop_clp_kvshare, ArchRow::plt}) {
    if (s == to_string(r)) return r;
  }
  throw ConfigError("unknown architecture row '" + s + "'");
}

struct ArchSpec {
  ArchRow row = ArchRow::vanilla;
  ModelConfig cfg;  // loops and window are read from here
  std::size_t seq_len = 0;
  std::size_t batch = 1;

  int loops() const { return row == ArchRow::vanilla ? 1 : cfg.loops; }
  std::size_t window() const { return row == ArchRow::plt ? static_cast<std::size_t>(cfg.window) : 0; }

  void validate() const {
    cfg.validate();
    if (batch < 1) throw ConfigError("arch spec: batch must be >= 1");
    if (row == ArchRow::vanilla && cfg.loops != 1) throw ConfigError("arch spec: vanilla row requires loops=1");
    if (row != ArchRow::vanilla && cfg.mode == Mode::vanilla) throw ConfigError("arch spec: looped row needs a looped config");
    const bool sharing = row == ArchRow::loop_clp_kvshare || row == ArchRow::plt;
    if (sharing != cfg.shares_kv() && cfg.loops > 1) {
      throw ConfigError(std::string("arch spec: row ") + to_string(row) + " inconsistent with kv_share flag");
    }
    if (row != ArchRow::plt && cfg.gswa) throw ConfigError("arch spec: only the plt row uses gated window attention");
  }
};

/// Config for one row built from a vanilla base, with L loops and window w.
inline ArchSpec make_arch(ArchRow row, ModelConfig base, int loops, int window, std::size_t seq_len,
                          std::size_t batch) {
  base.window = 0;
  base.gswa = false;
  base.kv_share = false;
  switch (row) {
    case ArchRow::vanilla:
      base.mode = Mode::vanilla;
      base.loops = 1;
      break;
    case ArchRow::loop:
      base.mode = Mode::vanilla_loop;
      base.loops = loops;
      break;
    case ArchRow::loop_clp:
      base.mode = Mode::plt;
      base.loops = loops;
      break;
    case ArchRow::loop_clp_kvshare:
      base.mode = Mode::plt;
      base.loops = loops;
      base.kv_share = true;
      break;
    case ArchRow::plt:
      base.mode = Mode::plt;
      base.loops = loops;
      base.kv_share = true;
      base.window = window;
      base.gswa = window > 0;
      break;
  }
  return {row, base, seq_len, batch};
}

/// Stored K/V positions per sequence per layer.
inline std::size_t kv_entries(const ArchSpec& s) {
  const auto L = static_cast<std::size_t>(s.loops());
  const std::size_t n = s.seq_len;
  switch (s.row) {
    case ArchRow::vanilla:
    case ArchRow::loop_clp_kvshare: return n;
    case ArchRow::loop:
    case ArchRow::loop_clp: return L * n;
    case ArchRow::plt: return n + (L - 1) * std::min(s.window(), n);
  }
  return 0;
}

inline double kv_bytes(const ArchSpec& s, const HardwareProfile& hw) {
  const double per_entry = 2.0 * s.cfg.d_kv() * hw.kv_bytes_per_element;
  return static_cast<double>(kv_entries(s)) * per_entry * s.cfg.n_layers * static_cast<double>(s.batch);
}

inline double weight_bytes(const ArchSpec& s, const HardwareProfile& hw) {
  return static_cast<double>(count_params(s.cfg)) * hw.weight_bytes_per_param;
}

/// Micro-batch activations moved per step: b*rows token states, each writing
/// and reading attention and MLP inputs/outputs in every layer.
inline double activation_bytes(const ArchSpec& s, const HardwareProfile& hw, int rows) {
  const double per_row = 4.0 * s.cfg.d_model + 2.0 * s.cfg.d_ff;
  return static_cast<double>(s.batch) * rows * per_row * hw.act_bytes_per_element * s.cfg.n_layers;
}

/// FLOPs of one decode step for the whole batch.
inline double step_flops(const ArchSpec& s) {
  const FlopCount f = count_flops_per_token(s.cfg);
  const auto L = static_cast<double>(s.loops());
  const std::size_t n = s.seq_len;
  double attn = static_cast<double>(attention_flops(s.cfg, n)) * L;
  if (s.row == ArchRow::plt) attn += (L - 1) * static_cast<double>(attention_flops(s.cfg, std::min(s.window(), n)));
  const double gate = s.row == ArchRow::plt ? (L - 1) * static_cast<double>(f.gate_per_pass) : 0.0;
  const double per_token = L * static_cast<double>(f.block_per_pass) + gate + static_cast<double>(f.head) + attn;
  return per_token * static_cast<double>(s.batch);
}

/// Bytes moved by one decode step. Serial loops are accounted as L vanilla
/// steps; under cross-loop parallelism weights are read once and only the
/// cache and the b*L micro-batch rows grow.
inline double step_bytes(const ArchSpec& s, const HardwareProfile& hw) {
  return weight_bytes(s, hw) + kv_bytes(s, hw) + activation_bytes(s, hw, s.loops());
}

inline double roofline(double bytes, double flops, const HardwareProfile& hw) {
  return std::max(bytes / hw.mem_bandwidth, flops / hw.peak_flops);
}

inline double decode_latency(const ArchSpec& s, const HardwareProfile& hw) {
  s.validate();
  hw.validate();
  if (s.row == ArchRow::loop) {
    // L dependent passes, each a full vanilla step over its own cache.
    const ArchSpec single = make_arch(ArchRow::vanilla, s.cfg, 1, 0, s.seq_len, s.batch);
    return s.loops() * decode_latency(single, hw);
  }
  return roofline(step_bytes(s, hw), step_flops(s), hw);
}

struct CostRow {
  std::string row;
  int loops = 1;
  std::size_t window = 0;
  std::size_t batch = 1;
  std::size_t params = 0;
  double flops = 0;
  double kv_bytes = 0;
  double latency_s = 0;
  double latency_ratio = 1;
  double kv_ratio = 1;
};

/// One row per spec, normalized to the first vanilla row (or the first row).
inline std::vector<CostRow> report(const std::vector<ArchSpec>& specs, const HardwareProfile& hw) {
  if (specs.empty()) throw EmptyInputError("cost report: no architecture rows");
  std::vector<CostRow> rows;
  for (const ArchSpec& s : specs) {
    CostRow r;
    r.row = to_string(s.row);
    r.loops = s.loops();
    r.window = s.window();
    r.batch = s.batch;
    r.params = count_params(s.cfg);
    r.flops = step_flops(s);
    r.kv_bytes = kv_bytes(s, hw);
    r.latency_s = decode_latency(s, hw);
    rows.push_back(r);
  }
  std::size_t base = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].row == ArchRow::vanilla) {
      base = i;
      break;
    }
  }
  for (CostRow& r : rows) {
    r.latency_ratio = r.latency_s / rows[base].latency_s;
    r.kv_ratio = rows[base].kv_bytes > 0 ? r.kv_bytes / rows[base].kv_bytes : 1.0;
  }
  return rows;
}

/// The five rows at one batch size.
inline std::vector<ArchSpec> table_rows(const ModelConfig& base, int loops, int window, std::size_t seq_len,
                                        std::size_t batch) {
  std::vector<ArchSpec> out;
  for (ArchRow r : {ArchRow::vanilla, ArchRow::loop, ArchRow::loop_clp, ArchRow::loop_clp_kvshare, ArchRow::plt}) {
    out.push_back(make_arch(r, base, loops, window, seq_len, batch));
  }
  return out;
}

/// Dense model of roughly 680M parameters used for latency calibration.
inline ModelConfig reference_cost_config() {
  ModelConfig c;
  c.vocab = 65536;
  c.d_model = 1536;
  c.n_layers = 28;
  c.n_heads = 12;
  c.n_kv_heads = 2;
  c.d_ff = 3328;
  c.weight_tying = true;
  c.max_seq = 8192;
  return c;
}

inline std::string format_csv(const std::vector<CostRow>& rows) {
  std::ostringstream os;
  os << "row,L,window,batch,params,flops,kv_bytes,latency_s,latency_ratio,kv_ratio\n";
  char buf[256];
  for (const CostRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%zu,%zu,%zu,%.6e,%.6e,%.6e,%.6f,%.6f\n", r.row.c_str(), r.loops, r.window,
                  r.batch, r.params, r.flops,
                  r.kv_bytes, r.latency_s, r.latency_ratio, r.kv_ratio);
    os << buf;
  }
  return os.str();
}

inline std::string format_table(const std::vector<CostRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-18s %3s %5s %13s %12s %12s %11s %9s %9s\n", "row", "L", "batch", "params",
                "flops", "kv_bytes", "latency_ms", "lat_x", "kv_x");
  os << buf;
  for (const CostRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-18s %3d %5zu %13zu %12.4e %12.4e %11.4f %9.4f %9.4f\n", r.row.c_str(), r.loops,
                  r.batch, r.params, r.flops, r.kv_bytes, r.latency_s * 1e3, r.latency_ratio, r.kv_ratio);
    os << buf;
  }
  return os.str();
}

}  // namespace plt
