// SPDX-License-Identifier: Apache-2.0
#pragma once

// Model assembly: per-table encoders, stacked relation-gated layers, the
// representation/signature fusion and the two heads.
//
//   X~ = relu(X W_x + S W_s + b)      logit = X~ w_cls + b_cls      S^ = X~ W_syn + b_syn

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relmoss/dataset.hpp"
#include "relmoss/encode.hpp"
#include "relmoss/params.hpp"
#include "relmoss/rel_gate.hpp"
#include "relmoss/train_config.hpp"

namespace relmoss {

struct RelMossModel {
  TrainConfig config;
  std::size_t sig_width = 0;
  std::size_t target = 0;
  int minority_label = 1;
  ParameterStore params;
  std::vector<TableEncoder> encoders;  // one per table
  std::vector<RelGateLayer> layers;
  TensorPtr fuse_x, fuse_s, fuse_b;
  TensorPtr cls_w, cls_b;
  TensorPtr syn_w, syn_b;
};

// Independent deterministic streams derived from one seed.
inline Rng derive_stream(std::uint64_t seed, std::uint64_t stream) {
  Rng r(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
  r.next_u64();
  return r.split();
}

inline RelMossModel make_model(const HeteroGraph& g, std::vector<TableFeatureSpec> specs, std::size_t target,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (specs.size() != g.type_count()) throw std::invalid_argument("make_model: one feature spec per table required");
  RelMossModel m;
  m.config = cfg;
  m.target = target;
  m.sig_width = SignatureLayout(g).width();
  Rng rng = derive_stream(cfg.seed, 0);
  const std::size_t d = cfg.dim;
  for (auto& s : specs) m.encoders.push_back(make_table_encoder(m.params, std::move(s), cfg.d_cat, d, rng, cfg.projection_depth));
  for (std::size_t l = 0; l < cfg.layers(); ++l) {
    m.layers.push_back(make_rel_gate_layer(m.params, "layer" + std::to_string(l), d, g.relation_count(),
                                           cfg.per_relation_qkv, rng));
  }
  m.fuse_x = m.params.add_glorot("fuse.w_x", d, d, rng);
  m.fuse_s = m.params.add_glorot("fuse.w_s", m.sig_width, d, rng);
  m.fuse_b = m.params.add("fuse.b", 1, d);
  m.cls_w = m.params.add_glorot("head.cls.w", d, 1, rng);
  m.cls_b = m.params.add("head.cls.b", 1, 1);
  m.syn_w = m.params.add_glorot("head.syn.w", d, m.sig_width, rng);
  m.syn_b = m.params.add("head.syn.b", 1, m.sig_width);
  return m;
}

inline std::vector<EncodedTable> precompute_tables(const RelMossModel& m, const RelationalDatabase& db) {
  std::vector<EncodedTable> out;
  for (std::size_t t = 0; t < db.table_count(); ++t) out.push_back(precompute_features(m.encoders[t].spec, db.rows[t]));
  return out;
}

// ---------------------------------------------------------------------------
// Message passing over a sampled neighbourhood

struct GateTrace {
  std::size_t layer = 0;
  std::size_t relation = 0;
  Var gate;
};

struct GnnOutput {
  Var reps;  // one row per seed, in seed order
  std::vector<GateTrace> gates;
};

// Layer l (0-based, of L) produces outputs for local nodes within L-1-l hops
// of the seeds, reading the previous layer's rows of their sampled
// neighbours. Seeds must all belong to the target type.
inline GnnOutput propagate(Tape& tape, const RelMossModel& m, const HeteroGraph& g,
                           const std::vector<EncodedTable>& tables, const NeighborSample& s, bool disable_gate) {
  const std::size_t L = m.layers.size();
  if (s.hops != L) throw std::invalid_argument("propagate: sample hops do not match layer count");
  for (const NodeRef& n : s.seeds)
    if (n.type_id != m.target) throw std::invalid_argument("propagate: seed outside the target table");

  std::vector<std::optional<Var>> h(g.type_count());
  for (std::size_t t = 0; t < g.type_count(); ++t) {
    if (!s.rows[t].empty()) h[t] = encode_rows(tape, m.encoders[t], tables[t], s.rows[t]);
  }
  GnnOutput out;
  for (std::size_t l = 0; l < L; ++l) {
    const RelGateLayer& layer = m.layers[l];
    const std::size_t out_depth = L - 1 - l;
    std::vector<std::optional<Var>> next(g.type_count());
    for (std::size_t t = 0; t < g.type_count(); ++t) {
      const std::size_t n_out = s.prefix(t, out_depth);
      if (n_out == 0) continue;
      Var self = h[t]->rows() == n_out ? *h[t] : slice_rows(*h[t], 0, n_out);
      std::vector<Var> messages, gates;
      for (std::size_t r : g.relations_from(t)) {
        const auto& block = s.blocks[r];
        const std::size_t dst = g.relation(r).dst_type;
        if (block.offsets.size() <= n_out) throw std::logic_error("propagate: relation block shorter than layer output");
        if (!h[dst]) continue;
        std::vector<std::size_t> offsets(block.offsets.begin(), block.offsets.begin() + n_out + 1);
        if (offsets.back() == 0) continue;
        std::vector<std::size_t> nbrs(block.neighbors.begin(), block.neighbors.begin() + offsets.back());
        Var msg = relation_messages(tape, layer, r, *h[dst], std::move(offsets), std::move(nbrs));
        messages.push_back(msg);
        if (!disable_gate) {
          Var gate = gating_factor(tape, layer, r, self, msg);
          gates.push_back(gate);
          out.gates.push_back(GateTrace{l, r, gate});
        }
      }
      const bool activate = l + 1 < L;
      next[t] = disable_gate ? ungated_update(tape, layer, self, messages, activate)
                             : gated_update(tape, layer, self, messages, gates, activate);
    }
    h = std::move(next);
  }
  out.reps = *h[m.target];
  if (out.reps.rows() != s.seeds.size()) throw std::logic_error("propagate: seed rows misaligned");
  return out;
}

inline Var fuse(Tape& tape, const RelMossModel& m, Var reps, Var sigs) {
  Var z = add(matmul(reps, tape.leaf(m.fuse_x)), matmul(sigs, tape.leaf(m.fuse_s)));
  return relu(add_bias(z, tape.leaf(m.fuse_b)));
}

inline Var classify(Tape& tape, const RelMossModel& m, Var fused) {
  return add_bias(matmul(fused, tape.leaf(m.cls_w)), tape.leaf(m.cls_b));
}

inline Var reconstruct(Tape& tape, const RelMossModel& m, Var fused) {
  return add_bias(matmul(fused, tape.leaf(m.syn_w)), tape.leaf(m.syn_b));
}

// ---------------------------------------------------------------------------
// Objective

struct LossParts {
  Var total;
  double cls = 0.0;
  double syn = 0.0;
};

// L = BCE(logits, labels) + gamma * MSE(recon[mask], sigs[mask]). With mean
// reduction the BCE averages over rows and the MSE over masked elements; sum
// reduction uses plain sums for both. An empty mask contributes nothing.
inline LossParts combined_loss(Tape& tape, Var logits, std::span<const int> labels, Var recon, Var sigs,
                               double gamma, const std::vector<bool>& syn_mask, Reduction red = Reduction::Mean) {
  if (labels.size() != logits.rows() || syn_mask.size() != logits.rows()) {
    throw std::invalid_argument("combined_loss: labels/mask do not match logits");
  }
  Tensor y(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) y.values[i] = static_cast<double>(labels[i]);
  Var l_cls = bce_with_logits(logits, tape.constant(std::move(y)), red);
  LossParts out;
  out.total = l_cls;
  out.cls = l_cls.value().values[0];
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < syn_mask.size(); ++i)
    if (syn_mask[i]) idx.push_back(i);
  if (idx.empty() || gamma == 0.0) {
    if (!idx.empty()) {
      // Reported only.
      double acc = 0.0;
      const Tensor& R = recon.value();
      const Tensor& S = sigs.value();
      for (std::size_t i : idx)
        for (std::size_t c = 0; c < R.cols(); ++c) {
          const double d = R.at(i, c) - S.at(i, c);
          acc += d * d;
        }
      out.syn = red == Reduction::Mean ? acc / static_cast<double>(idx.size() * R.cols()) : acc;
    }
    return out;
  }
  const std::size_t elems = idx.size() * recon.cols();
  Var l_syn = mse(gather_rows(recon, idx), gather_rows(sigs, idx));
  if (red == Reduction::Sum) l_syn = scale(l_syn, static_cast<double>(elems));
  out.syn = l_syn.value().values[0];
  out.total = add(l_cls, scale(l_syn, gamma));
  return out;
}

// ---------------------------------------------------------------------------
// One batch: real seeds plus synthetic minority rows

struct SynthBatch {
  std::vector<std::size_t> anchor;  // seed position of each synthetic row's real endpoint
  std::vector<double> lambda;
  std::vector<std::vector<double>> partner_rep;
  std::vector<std::vector<double>> partner_sig;

  std::size_t size() const { return anchor.size(); }
};

struct BatchHeads {
  Var fused;
  Var logits;  // real rows first, then synthetic rows
  Var recon;
  LossParts loss;
  std::vector<std::vector<double>> syn_sigs;
};

inline Tensor signature_rows(const SignatureTable& sigs, const std::vector<NodeRef>& seeds) {
  Tensor t(seeds.size(), sigs.width);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto row = sigs.row(seeds[i].row_id);
    std::copy(row.begin(), row.end(), t.values.begin() + i * sigs.width);
  }
  return t;
}

// Appends the synthetic rows to the seed representations and runs fusion,
// both heads and the objective. Synthetic rows carry the minority label and,
// with the real minority rows, form the reconstruction subset.
inline BatchHeads batch_heads(Tape& tape, const RelMossModel& m, Var reps, const std::vector<NodeRef>& seeds,
                              const SignatureTable& sigs, std::span<const int> seed_labels, const SynthBatch& syn,
                              double gamma) {
  BatchHeads out;
  const std::size_t n = seeds.size(), k = syn.size(), d = m.config.dim, w = m.sig_width;
  if (seed_labels.size() != n) throw std::invalid_argument("batch_heads: one label per seed required");
  Tensor sig_all = signature_rows(sigs, seeds);
  std::vector<int> labels(seed_labels.begin(), seed_labels.end());
  std::vector<bool> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = labels[i] == m.minority_label;
  if (k > 0) {
    Tensor lam(k, 1), partner(k, d);
    for (std::size_t i = 0; i < k; ++i) {
      const double l = syn.lambda[i];
      lam.values[i] = l;
      for (std::size_t c = 0; c < d; ++c) partner.values[i * d + c] = (1.0 - l) * syn.partner_rep[i][c];
      const auto anchor_sig = sigs.row(seeds[syn.anchor[i]].row_id);
      std::vector<double> srow(w);
      for (std::size_t c = 0; c < w; ++c) srow[c] = l * anchor_sig[c] + (1.0 - l) * syn.partner_sig[i][c];
      sig_all.values.insert(sig_all.values.end(), srow.begin(), srow.end());
      out.syn_sigs.push_back(std::move(srow));
      labels.push_back(m.minority_label);
      mask.push_back(true);
    }
    sig_all.shape[0] = n + k;
    Var syn_reps = add(mul_col(gather_rows(reps, syn.anchor), tape.constant(std::move(lam))),
                       tape.constant(std::move(partner)));
    reps = vstack({reps, syn_reps});
  }
  Var sig_var = tape.constant(std::move(sig_all));
  out.fused = fuse(tape, m, reps, sig_var);
  out.logits = classify(tape, m, out.fused);
  out.recon = reconstruct(tape, m, out.fused);
  out.loss = combined_loss(tape, out.logits, labels, out.recon, sig_var, gamma, mask, m.config.reduction);
  return out;
}

}  // namespace relmoss
