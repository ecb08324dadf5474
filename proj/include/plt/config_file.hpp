#pragma once

// INI run configuration with sections [model], [task], [train], [run].
// Unknown sections or keys are errors.

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"
#include "plt/checkpoint.hpp"
#include "plt/config.hpp"
#include "plt/errors.hpp"
#include "plt/tasks.hpp"
#include "plt/train.hpp"

namespace plt {

struct RunConfig {
  ModelConfig model;
  TaskSpec task;
  TrainConfig train;
  std::string out_dir = "run";
  StorageDtype dtype = StorageDtype::f64;
};

namespace detail {

template <typename T>
T parse_value(const std::string& section, const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("config: [" + section + "] " + key + " expects true/false, got '" + text + "'");
  } else {
    in >> value;
    if (!in || !(in >> std::ws).eof()) {
      throw ConfigError("config: [" + section + "] " + key + " has invalid value '" + text + "'");
    }
  }
  return value;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

template <typename T>
Setter bind(const char* section, const char* key, T RunConfig::*group, auto member) {
  return [=](RunConfig& rc, const std::string& text) {
    (rc.*group).*member = parse_value<std::remove_reference_t<decltype((rc.*group).*member)>>(section, key, text);
  };
}

inline const std::map<std::string, std::map<std::string, Setter>>& config_schema() {
  static const std::map<std::string, std::map<std::string, Setter>> schema = [] {
    std::map<std::string, std::map<std::string, Setter>> s;
    auto& m = s["model"];
    m["vocab"] = bind("model", "vocab", &RunConfig::model, &ModelConfig::vocab);
    m["d_model"] = bind("model", "d_model", &RunConfig::model, &ModelConfig::d_model);
    m["n_layers"] = bind("model", "n_layers", &RunConfig::model, &ModelConfig::n_layers);
    m["n_heads"] = bind("model", "n_heads", &RunConfig::model, &ModelConfig::n_heads);
    m["n_kv_heads"] = bind("model", "n_kv_heads", &RunConfig::model, &ModelConfig::n_kv_heads);
    m["d_ff"] = bind("model", "d_ff", &RunConfig::model, &ModelConfig::d_ff);
    m["loops"] = bind("model", "loops", &RunConfig::model, &ModelConfig::loops);
    m["window"] = bind("model", "window", &RunConfig::model, &ModelConfig::window);
    m["mode"] = [](RunConfig& rc, const std::string& v) { rc.model.mode = parse_mode(v); };
    m["kv_share"] = bind("model", "kv_share", &RunConfig::model, &ModelConfig::kv_share);
    m["gswa"] = bind("model", "gswa", &RunConfig::model, &ModelConfig::gswa);
    m["weight_tying"] = bind("model", "weight_tying", &RunConfig::model, &ModelConfig::weight_tying);
    m["gate_per_loop"] = bind("model", "gate_per_loop", &RunConfig::model, &ModelConfig::gate_per_loop);
    m["max_seq"] = bind("model", "max_seq", &RunConfig::model, &ModelConfig::max_seq);
    m["rope_base"] = bind("model", "rope_base", &RunConfig::model, &ModelConfig::rope_base);
    m["norm_eps"] = bind("model", "norm_eps", &RunConfig::model, &ModelConfig::norm_eps);

    auto& t = s["task"];
    t["kind"] = [](RunConfig& rc, const std::string& v) { rc.task.kind = parse_task_kind(v); };
    t["seq_len"] = bind("task", "seq_len", &RunConfig::task, &TaskSpec::seq_len);
    t["symbols"] = bind("task", "symbols", &RunConfig::task, &TaskSpec::symbols);
    t["corpus"] = [](RunConfig& rc, const std::string& v) { rc.task.corpus_path = v; };
    t["seed"] = bind("task", "seed", &RunConfig::task, &TaskSpec::seed);

    auto& tr = s["train"];
    tr["batch"] = bind("train", "batch", &RunConfig::train, &TrainConfig::batch);
    tr["steps"] = bind("train", "steps", &RunConfig::train, &TrainConfig::steps);
    tr["lr"] = bind("train", "lr", &RunConfig::train, &TrainConfig::lr);
    tr["warmup"] = bind("train", "warmup", &RunConfig::train, &TrainConfig::warmup);
    tr["min_lr_ratio"] = bind("train", "min_lr_ratio", &RunConfig::train, &TrainConfig::min_lr_ratio);
    tr["beta1"] = bind("train", "beta1", &RunConfig::train, &TrainConfig::beta1);
    tr["beta2"] = bind("train", "beta2", &RunConfig::train, &TrainConfig::beta2);
    tr["adam_eps"] = bind("train", "adam_eps", &RunConfig::train, &TrainConfig::adam_eps);
    tr["grad_clip"] = bind("train", "grad_clip", &RunConfig::train, &TrainConfig::grad_clip);
    tr["seed"] = bind("train", "seed", &RunConfig::train, &TrainConfig::seed);
    tr["init_std"] = bind("train", "init_std", &RunConfig::train, &TrainConfig::init_std);
    tr["log_every"] = bind("train", "log_every", &RunConfig::train, &TrainConfig::log_every);
    tr["eval_batches"] = bind("train", "eval_batches", &RunConfig::train, &TrainConfig::eval_batches);

    auto& r = s["run"];
    r["out_dir"] = [](RunConfig& rc, const std::string& v) { rc.out_dir = v; };
    r["dtype"] = [](RunConfig& rc, const std::string& v) { rc.dtype = parse_dtype(v); };
    return s;
  }();
  return schema;
}

}  // namespace detail

/// Applies "section.key=value" to a run config.
inline void apply_override(RunConfig& rc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string section = assignment.substr(0, dot), key = assignment.substr(dot + 1, eq - dot - 1);
  const auto& schema = detail::config_schema();
  const auto s = schema.find(section);
  if (s == schema.end()) throw ConfigError("config: unknown section [" + section + "]");
  const auto k = s->second.find(key);
  if (k == s->second.end()) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
  k->second(rc, assignment.substr(eq + 1));
}

/// Parses INI text, then applies "section.key=value" overrides. A model vocab
/// set in neither place is taken from the task.
inline RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides = {}) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig rc;
  bool vocab_set = false;
  const auto& schema = detail::config_schema();
  for (const auto& [section, body] : tree) {
    const auto s = schema.find(section);
    if (s == schema.end()) throw ConfigError("config: unknown section [" + section + "]");
    if (!body.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      const auto k = s->second.find(key);
      if (k == s->second.end()) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      k->second(rc, value.data());
      if (section == "model" && key == "vocab") vocab_set = true;
    }
  }
  for (const std::string& o : overrides) {
    apply_override(rc, o);
    if (o.rfind("model.vocab=", 0) == 0) vocab_set = true;
  }
  if (!vocab_set) rc.model.vocab = rc.task.vocab();
  return rc;
}

inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), overrides);
}

inline void validate(const RunConfig& rc) {
  rc.model.validate();
  rc.task.validate();
  rc.train.validate();
  check_task_model(rc.model, rc.task);
}

inline nlohmann::json to_json(const TaskSpec& t) {
  return {{"kind", to_string(t.kind)}, {"seq_len", t.seq_len}, {"symbols", t.symbols},
          {"corpus", t.corpus_path},   {"seed", t.seed}};
}

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"batch", t.batch},       {"steps", t.steps},       {"lr", t.lr},
          {"warmup", t.warmup},     {"min_lr_ratio", t.min_lr_ratio}, {"beta1", t.beta1},
          {"beta2", t.beta2},       {"adam_eps", t.adam_eps}, {"grad_clip", t.grad_clip},
          {"seed", t.seed},         {"init_std", t.init_std}, {"log_every", t.log_every},
          {"eval_batches", t.eval_batches}};
}

inline nlohmann::json to_json(const RunConfig& rc) {
  return {{"model", rc.model},
          {"task", to_json(rc.task)},
          {"train", to_json(rc.train)},
          {"run", {{"out_dir", rc.out_dir}, {"dtype", to_string(rc.dtype)}}}};
}

}  // namespace plt
