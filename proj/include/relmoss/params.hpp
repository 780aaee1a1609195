// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "relmoss/rng.hpp"
#include "relmoss/tensor.hpp"

namespace relmoss {

// Named learnable tensors in registration order.
class ParameterStore {
 public:
  TensorPtr add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw std::invalid_argument("ParameterStore: duplicate name " + name);
    auto t = make_tensor(rows, cols);
    t->requires_grad = true;
    t->ensure_grad();
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
  }

  // Glorot-uniform initialisation.
  TensorPtr add_glorot(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
    auto t = add(name, rows, cols);
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& v : t->values) v = rng.uniform(-limit, limit);
    return t;
  }

  TensorPtr add_normal(const std::string& name, std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    auto t = add(name, rows, cols);
    for (double& v : t->values) v = rng.normal(0.0, stddev);
    return t;
  }

  TensorPtr get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter " + name);
    return entries_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, TensorPtr>>& entries() const { return entries_; }

  std::vector<TensorPtr> tensors() const {
    std::vector<TensorPtr> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
  }

  void zero_grad() {
    for (auto& e : entries_) {
      e.second->ensure_grad();
      e.second->zero_grad();
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second->size();
    return n;
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      for (double v : e.second->values)
        if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::vector<std::pair<std::string, TensorPtr>> entries_;
  std::map<std::string, std::size_t> index_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;

  void init(const std::vector<TensorPtr>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p->size(), 0.0);
      v.emplace_back(p->size(), 0.0);
    }
    step = 0;
  }
};

inline void adam_step(const std::vector<TensorPtr>& params, AdamState& state, const AdamOptions& opt) {
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state not initialised");
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    t.ensure_grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.values[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

inline void sgd_step(const std::vector<TensorPtr>& params, double lr) {
  for (const auto& p : params) {
    p->ensure_grad();
    for (std::size_t i = 0; i < p->size(); ++i) p->values[i] -= lr * p->grad[i];
  }
}

// Checkpoint format (JSON, version 1):
//   { "format": "relmoss-checkpoint", "version": 1,
//     "tensors": [ { "name": str, "shape": [rows, cols], "values": [f64...] } ],
//     "meta": { ... caller-defined ... } }
// Doubles are written in shortest round-trip form, so a save/load cycle is exact.
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const ParameterStore& store, nlohmann::json meta = nlohmann::json::object()) {
  nlohmann::json j;
  j["format"] = "relmoss-checkpoint";
  j["version"] = kCheckpointVersion;
  j["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : store.entries()) {
    j["tensors"].push_back({{"name", name}, {"shape", {t->rows(), t->cols()}}, {"values", t->values}});
  }
  j["meta"] = std::move(meta);
  return j;
}

inline void save_checkpoint(const std::string& path, const ParameterStore& store,
                            nlohmann::json meta = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << checkpoint_json(store, std::move(meta)).dump() << '\n';
}

inline nlohmann::json read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_checkpoint: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "relmoss-checkpoint" || j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("read_checkpoint: unsupported checkpoint format in " + path);
  }
  return j;
}

// Copy tensor values from a checkpoint into an already-built store.
inline void load_parameters(const nlohmann::json& ckpt, ParameterStore& store) {
  std::size_t loaded = 0;
  for (const auto& e : ckpt.at("tensors")) {
    const std::string name = e.at("name");
    auto t = store.get(name);
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != t->rows() || shape[1] != t->cols()) {
      throw std::runtime_error("load_parameters: shape mismatch for " + name);
    }
    t->values = e.at("values").get<std::vector<double>>();
    ++loaded;
  }
  if (loaded != store.entries().size()) {
    throw std::runtime_error("load_parameters: checkpoint does not cover every parameter");
  }
}

}  // namespace relmoss
