#pragma once

// Synthetic training tasks. Every example is a token sequence plus per-position
// loss weights for next-token prediction (weight[j] scores the prediction of
// token j+1 made at position j).

#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "plt/errors.hpp"
#include "plt/rng.hpp"

namespace plt {

enum class TaskKind { copy, reverse, modular_add, char_lm };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::modular_add: return "modular_add";
    case TaskKind::char_lm: return "char_lm";
  }
  return "?";
}

inline TaskKind parse_task_kind(const std::string& s) {
  for (TaskKind k : {TaskKind::copy, TaskKind::reverse, TaskKind::modular_add, TaskKind::char_lm}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown task '" + s + "'");
}

struct TaskSpec {
  TaskKind kind = TaskKind::copy;
  /// copy/reverse: symbols to reproduce; modular_add: operand count;
  /// char_lm: window length.
  int seq_len = 8;
  /// copy/reverse: symbol alphabet size; modular_add: the modulus. The model
  /// vocabulary adds the task's special tokens (see vocab()).
  int symbols = 10;
  std::string corpus_path;  // char_lm; empty selects the built-in text
  std::uint64_t seed = 0;

  int vocab() const {
    switch (kind) {
      case TaskKind::copy:
      case TaskKind::reverse: return symbols + 2;  // BOS, SEP
      case TaskKind::modular_add: return symbols + 3;  // BOS, '+', '='
      case TaskKind::char_lm: return 256;
    }
    return 0;
  }
  int bos() const { return symbols; }
  int sep() const { return symbols + 1; }
  int plus() const { return symbols + 1; }
  int equals() const { return symbols + 2; }

  /// Tokens per example.
  int length() const {
    switch (kind) {
      case TaskKind::copy:
      case TaskKind::reverse: return 2 * seq_len + 2;
      case TaskKind::modular_add: return 2 * seq_len + 2;
      case TaskKind::char_lm: return seq_len;
    }
    return 0;
  }

  void validate() const {
    if (seq_len < 1) throw ConfigError("task: seq_len must be >= 1");
    if (kind != TaskKind::char_lm && symbols < 2) throw ConfigError("task: symbols must be >= 2");
    if (kind == TaskKind::char_lm && seq_len < 2) throw ConfigError("task: char_lm needs seq_len >= 2");
  }
};

struct Example {
  std::vector<int> ids;
  std::vector<double> weights;  // one per position; the last is always 0
};

struct Batch {
  std::vector<int> ids;  // batch * length, back to back
  std::vector<int> targets;
  std::vector<double> weights;
  std::size_t batch = 0;
  std::size_t length = 0;
};

inline const std::string& builtin_corpus() {
  static const std::string text =
      "the quick brown fox jumps over the lazy dog. a journey of a thousand miles begins with a single step. "
      "all that glitters is not gold. to be or not to be, that is the question. the early bird catches the worm. "
      "practice makes perfect. where there is a will there is a way. knowledge is power. time is money. "
      "actions speak louder than words. the pen is mightier than the sword. better late than never. ";
  return text;
}

/// Deterministic example stream for one task.
class TaskGenerator {
 public:
  TaskGenerator(TaskSpec spec, std::uint64_t stream_seed) : spec_(std::move(spec)), rng_(stream_seed) {
    spec_.validate();
    if (spec_.kind == TaskKind::char_lm) load_corpus();
  }

  const TaskSpec& spec() const { return spec_; }

  Example next() {
    switch (spec_.kind) {
      case TaskKind::copy: return sequence_task(false);
      case TaskKind::reverse: return sequence_task(true);
      case TaskKind::modular_add: return modular_add();
      case TaskKind::char_lm: return char_window();
    }
    throw ConfigError("task: unknown kind");
  }

  Batch next_batch(std::size_t batch) {
    Batch b;
    b.batch = batch;
    b.length = static_cast<std::size_t>(spec_.length());
    for (std::size_t i = 0; i < batch; ++i) {
      const Example e = next();
      b.ids.insert(b.ids.end(), e.ids.begin(), e.ids.end());
      for (std::size_t j = 0; j < e.ids.size(); ++j) b.targets.push_back(j + 1 < e.ids.size() ? e.ids[j + 1] : 0);
      b.weights.insert(b.weights.end(), e.weights.begin(), e.weights.end());
    }
    return b;
  }

 private:
  Example sequence_task(bool reversed) {
    const int m = spec_.seq_len;
    Example e;
    e.ids.push_back(spec_.bos());
    std::vector<int> xs(static_cast<std::size_t>(m));
    for (int& x : xs) x = static_cast<int>(rng_.below(static_cast<std::uint64_t>(spec_.symbols)));
    e.ids.insert(e.ids.end(), xs.begin(), xs.end());
    e.ids.push_back(spec_.sep());
    if (reversed) {
      e.ids.insert(e.ids.end(), xs.rbegin(), xs.rend());
    } else {
      e.ids.insert(e.ids.end(), xs.begin(), xs.end());
    }
    // Predictions made at SEP and at each output symbol except the last.
    e.weights.assign(e.ids.size(), 0.0);
    for (int j = m + 1; j <= 2 * m; ++j) e.weights[static_cast<std::size_t>(j)] = 1.0;
    return e;
  }

  Example modular_add() {
    // BOS a1 + a2 + ... + ak = c, with c = sum mod p.
    const int k = spec_.seq_len, p = spec_.symbols;
    Example e;
    e.ids.push_back(spec_.bos());
    int sum = 0;
    for (int i = 0; i < k; ++i) {
      const int a = static_cast<int>(rng_.below(static_cast<std::uint64_t>(p)));
      sum = (sum + a) % p;
      if (i > 0) e.ids.push_back(spec_.plus());
      e.ids.push_back(a);
    }
    e.ids.push_back(spec_.equals());
    e.ids.push_back(sum);
    e.weights.assign(e.ids.size(), 0.0);
    e.weights[static_cast<std::size_t>(2 * k)] = 1.0;  // the '=' position predicts c
    return e;
  }

  Example char_window() {
    const auto n = static_cast<std::size_t>(spec_.seq_len);
    const std::size_t start = rng_.below(corpus_.size() - n + 1);
    Example e;
    for (std::size_t i = 0; i < n; ++i) e.ids.push_back(static_cast<unsigned char>(corpus_[start + i]));
    e.weights.assign(n, 1.0);
    e.weights.back() = 0.0;
    return e;
  }

  void load_corpus() {
    if (spec_.corpus_path.empty()) {
      corpus_ = builtin_corpus();
    } else {
      std::ifstream in(spec_.corpus_path, std::ios::binary);
      if (!in) throw ConfigError("task: cannot read corpus '" + spec_.corpus_path + "'");
      corpus_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (corpus_.size() < static_cast<std::size_t>(spec_.seq_len)) {
      throw ConfigError("task: corpus shorter than seq_len");
    }
  }

  TaskSpec spec_;
  Rng rng_;
  std::string corpus_;
};

}  // namespace plt
