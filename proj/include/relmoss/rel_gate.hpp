// SPDX-License-Identifier: Apache-2.0
#pragma once

// Relation-wise gated message passing.
//
//   H_{e,r}   = mean_{v in N_r(e)} W_r X_v                    (zero if N_r(e) is empty)
//   a_{e,r}   = <Q X_e, K H_{e,r}>                            (scalar)
//   Psi_{e,r} = sigmoid(R_r + a_{e,r} * V H_{e,r} / sqrt(d))  (d-vector)
//   X'_e      = act(W_e X_e + sum_r Psi_{e,r} (.) H_{e,r})
//
// The ungated update drops Psi. Row-vector convention throughout: a
// representation is a 1 x d row and "W x" is computed as x * W.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "relmoss/params.hpp"
#include "relmoss/tensor.hpp"

namespace relmoss {

struct RelGateLayer {
  std::size_t dim = 0;
  bool per_relation_qkv = false;
  TensorPtr self_weight;                // W_e, d x d
  std::vector<TensorPtr> rel_weight;    // W_r, d x d
  std::vector<TensorPtr> rel_embed;     // R_r, 1 x d
  std::vector<TensorPtr> query, key, value;  // one shared set, or one per relation

  std::size_t relation_count() const { return rel_weight.size(); }
  const TensorPtr& q(std::size_t r) const { return per_relation_qkv ? query.at(r) : query.at(0); }
  const TensorPtr& k(std::size_t r) const { return per_relation_qkv ? key.at(r) : key.at(0); }
  const TensorPtr& v(std::size_t r) const { return per_relation_qkv ? value.at(r) : value.at(0); }
};

inline RelGateLayer make_rel_gate_layer(ParameterStore& params, const std::string& prefix, std::size_t dim,
                                        std::size_t relations, bool per_relation_qkv, Rng& rng) {
  RelGateLayer layer;
  layer.dim = dim;
  layer.per_relation_qkv = per_relation_qkv;
  layer.self_weight = params.add_glorot(prefix + ".w_self", dim, dim, rng);
  for (std::size_t r = 0; r < relations; ++r) {
    layer.rel_weight.push_back(params.add_glorot(prefix + ".w_rel" + std::to_string(r), dim, dim, rng));
    layer.rel_embed.push_back(params.add_normal(prefix + ".r_emb" + std::to_string(r), 1, dim, 0.1, rng));
  }
  const std::size_t sets = per_relation_qkv ? relations : 1;
  for (std::size_t s = 0; s < sets; ++s) {
    const std::string sfx = per_relation_qkv ? std::to_string(s) : "";
    layer.query.push_back(params.add_glorot(prefix + ".q" + sfx, dim, dim, rng));
    layer.key.push_back(params.add_glorot(prefix + ".k" + sfx, dim, dim, rng));
    layer.value.push_back(params.add_glorot(prefix + ".v" + sfx, dim, dim, rng));
  }
  return layer;
}

// H for every target segment. `neighbor_reps` holds the dst-type rows indexed
// by `neighbors`; segment t spans neighbors[offsets[t] .. offsets[t+1]).
// Averages first and applies W_r once, which equals averaging W_r X_v.
inline Var relation_messages(Tape& tape, const RelGateLayer& layer, std::size_t rel, Var neighbor_reps,
                             std::vector<std::size_t> offsets, std::vector<std::size_t> neighbors) {
  Var mean = segment_mean(neighbor_reps, std::move(offsets), std::move(neighbors));
  return matmul(mean, tape.leaf(layer.rel_weight.at(rel)));
}

inline Var gating_factor(Tape& tape, const RelGateLayer& layer, std::size_t rel, Var self_reps, Var messages) {
  Var qx = matmul(self_reps, tape.leaf(layer.q(rel)));
  Var kh = matmul(messages, tape.leaf(layer.k(rel)));
  Var vh = matmul(messages, tape.leaf(layer.v(rel)));
  Var score = rowdot(qx, kh);
  Var z = scale(mul_col(vh, score), 1.0 / std::sqrt(static_cast<double>(layer.dim)));
  return sigmoid(add_bias(z, tape.leaf(layer.rel_embed.at(rel))), /*open_interval=*/true);
}

inline Var gated_update(Tape& tape, const RelGateLayer& layer, Var self_reps, const std::vector<Var>& messages,
                        const std::vector<Var>& gates, bool activate) {
  if (messages.size() != gates.size()) throw std::invalid_argument("gated_update: messages and gates misaligned");
  Var z = matmul(self_reps, tape.leaf(layer.self_weight));
  for (std::size_t i = 0; i < messages.size(); ++i) z = add(z, mul(gates[i], messages[i]));
  return activate ? relu(z) : z;
}

inline Var ungated_update(Tape& tape, const RelGateLayer& layer, Var self_reps, const std::vector<Var>& messages,
                          bool activate) {
  Var z = matmul(self_reps, tape.leaf(layer.self_weight));
  for (const Var& m : messages) z = add(z, m);
  return activate ? relu(z) : z;
}

// Single-entity evaluation of the gate, outside any tape.
inline std::vector<double> gating_factor(const RelGateLayer& layer, std::span<const double> x_e,
                                         std::span<const double> h, std::size_t rel) {
  const std::size_t d = layer.dim;
  if (x_e.size() != d || h.size() != d) throw std::invalid_argument("gating_factor: width mismatch");
  auto row_times = [d](std::span<const double> x, const Tensor& w) {
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out[j] += x[i] * w.values[i * d + j];
    return out;
  };
  const auto qx = row_times(x_e, *layer.q(rel));
  const auto kh = row_times(h, *layer.k(rel));
  const auto vh = row_times(h, *layer.v(rel));
  double a = 0.0;
  for (std::size_t j = 0; j < d; ++j) a += qx[j] * kh[j];
  std::vector<double> psi(d);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  const double hi = std::nextafter(1.0, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double g = sigmoid_scalar(layer.rel_embed.at(rel)->values[j] + a * vh[j] * inv);
    psi[j] = std::clamp(g, std::numeric_limits<double>::denorm_min(), hi);
  }
  return psi;
}

}  // namespace relmoss
