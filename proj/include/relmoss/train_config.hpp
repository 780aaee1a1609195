// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "relmoss/graph.hpp"
#include "relmoss/tensor.hpp"

namespace relmoss {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Optimizer { Adam, Sgd };
enum class BankRefresh { PerBatch, PerEpoch };

struct TrainConfig {
  double gamma = 0.5;
  double omega = 50.0;
  std::size_t bank_capacity = 1024;
  std::size_t batch_size = 512;
  double lr = 1e-3;
  std::size_t dim = 128;
  std::size_t d_cat = 16;
  std::size_t projection_depth = 1;
  double beta_alpha = 2.0;
  double beta_beta = 2.0;
  std::vector<std::size_t> fanouts{16, 16};  // one entry per layer
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  bool disable_gate = false;
  bool disable_syn = false;
  bool per_relation_qkv = false;
  std::size_t max_syn_per_batch = 0;  // 0 = batch size
  std::size_t eval_fanout = kUnlimitedFanout;
  std::size_t eval_batch_size = 0;  // 0 = batch size
  Optimizer optimizer = Optimizer::Adam;
  Reduction reduction = Reduction::Mean;
  BankRefresh bank_refresh = BankRefresh::PerBatch;

  std::size_t layers() const { return fanouts.size(); }
  std::size_t syn_quota_cap() const { return max_syn_per_batch ? max_syn_per_batch : batch_size; }
  std::size_t eval_batch() const { return eval_batch_size ? eval_batch_size : batch_size; }

  void validate() const {
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
    if (!(omega >= 0.0)) throw ConfigError("omega must be >= 0");
    if (bank_capacity < 2) throw ConfigError("bank_capacity must be >= 2");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (dim < 1) throw ConfigError("dim must be >= 1");
    if (d_cat < 1) throw ConfigError("d_cat must be >= 1");
    if (projection_depth < 1) throw ConfigError("projection_depth must be >= 1");
    if (!(beta_alpha > 0.0) || !(beta_beta > 0.0)) throw ConfigError("beta parameters must be > 0");
    if (fanouts.empty()) throw ConfigError("fanouts must list at least one layer");
    for (std::size_t f : fanouts)
      if (f == 0) throw ConfigError("fanouts must be positive");
    if (eval_fanout == 0) throw ConfigError("eval_fanout must be positive");
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "gamma",         "omega",          "bank_capacity",     "batch_size",   "lr",
      "dim",           "d_cat",          "projection_depth",  "beta_alpha",   "beta_beta",
      "fanouts",       "epochs",         "seed",              "disable_gate", "disable_syn",
      "per_relation_qkv", "max_syn_per_batch", "eval_fanout", "eval_batch_size", "optimizer",
      "loss_reduction", "bank_refresh"};
  detail::reject_unknown(j, known, "train config");
  TrainConfig c;
  detail::read_field(j, "gamma", c.gamma);
  detail::read_field(j, "omega", c.omega);
  detail::read_field(j, "bank_capacity", c.bank_capacity);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "lr", c.lr);
  detail::read_field(j, "dim", c.dim);
  detail::read_field(j, "d_cat", c.d_cat);
  detail::read_field(j, "projection_depth", c.projection_depth);
  detail::read_field(j, "beta_alpha", c.beta_alpha);
  detail::read_field(j, "beta_beta", c.beta_beta);
  detail::read_field(j, "fanouts", c.fanouts);
  detail::read_field(j, "epochs", c.epochs);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "disable_gate", c.disable_gate);
  detail::read_field(j, "disable_syn", c.disable_syn);
  detail::read_field(j, "per_relation_qkv", c.per_relation_qkv);
  detail::read_field(j, "max_syn_per_batch", c.max_syn_per_batch);
  detail::read_field(j, "eval_batch_size", c.eval_batch_size);
  if (j.contains("eval_fanout")) {
    const auto& v = j["eval_fanout"];
    if (v.is_string() && v.get<std::string>() == "unlimited") c.eval_fanout = kUnlimitedFanout;
    else detail::read_field(j, "eval_fanout", c.eval_fanout);
  }
  if (j.contains("optimizer")) {
    std::string s;
    detail::read_field(j, "optimizer", s);
    if (s == "adam") c.optimizer = Optimizer::Adam;
    else if (s == "sgd") c.optimizer = Optimizer::Sgd;
    else throw ConfigError("optimizer must be 'adam' or 'sgd'");
  }
  if (j.contains("loss_reduction")) {
    std::string s;
    detail::read_field(j, "loss_reduction", s);
    if (s == "mean") c.reduction = Reduction::Mean;
    else if (s == "sum") c.reduction = Reduction::Sum;
    else throw ConfigError("loss_reduction must be 'mean' or 'sum'");
  }
  if (j.contains("bank_refresh")) {
    std::string s;
    detail::read_field(j, "bank_refresh", s);
    if (s == "batch") c.bank_refresh = BankRefresh::PerBatch;
    else if (s == "epoch") c.bank_refresh = BankRefresh::PerEpoch;
    else throw ConfigError("bank_refresh must be 'batch' or 'epoch'");
  }
  c.validate();
  return c;
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["gamma"] = c.gamma;
  j["omega"] = c.omega;
  j["bank_capacity"] = c.bank_capacity;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["dim"] = c.dim;
  j["d_cat"] = c.d_cat;
  j["projection_depth"] = c.projection_depth;
  j["beta_alpha"] = c.beta_alpha;
  j["beta_beta"] = c.beta_beta;
  j["fanouts"] = c.fanouts;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["disable_gate"] = c.disable_gate;
  j["disable_syn"] = c.disable_syn;
  j["per_relation_qkv"] = c.per_relation_qkv;
  j["max_syn_per_batch"] = c.max_syn_per_batch;
  if (c.eval_fanout == kUnlimitedFanout) j["eval_fanout"] = "unlimited";
  else j["eval_fanout"] = c.eval_fanout;
  j["eval_batch_size"] = c.eval_batch_size;
  j["optimizer"] = c.optimizer == Optimizer::Adam ? "adam" : "sgd";
  j["loss_reduction"] = c.reduction == Reduction::Mean ? "mean" : "sum";
  j["bank_refresh"] = c.bank_refresh == BankRefresh::PerBatch ? "batch" : "epoch";
  return j;
}

}  // namespace relmoss
