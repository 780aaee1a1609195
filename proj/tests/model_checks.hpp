// SPDX-License-Identifier: Apache-2.0
#pragma once

// Micro-fixture forward pass helpers: the full differentiable pipeline on a
// handful of entities, and an independent dense re-implementation of it.

#include <Eigen/Dense>

#include "support.hpp"

namespace relmoss::testing {

struct MicroSetup {
  Dataset ds;
  RelMossModel model;
  std::vector<EncodedTable> tables;
  SynthBatch syn;
};

inline MicroSetup micro_setup(const TrainConfig& cfg) {
  Dataset ds(micro_database(), 0, micro_labels());
  auto specs = fit_statistics(ds.db, ds.train_masks());
  RelMossModel m = make_model(ds.graph, specs, ds.target, cfg);
  m.minority_label = 1;
  auto tables = precompute_tables(m, ds.db);
  // Perturb the zero-initialised biases so every parameter has a generic value.
  Rng rng(99);
  for (const auto& [name, t] : m.params.entries())
    if (name.ends_with(".b"))
      for (double& v : t->values) v = rng.uniform(-0.2, 0.2);
  SynthBatch syn;
  syn.anchor = {0, 2};
  syn.lambda = {0.3, 0.8};
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> rep(cfg.dim), sig(m.sig_width);
    for (double& v : rep) v = rng.uniform(0.0, 1.0);
    for (double& v : sig) v = rng.uniform(0.0, 1.0);
    syn.partner_rep.push_back(rep);
    syn.partner_sig.push_back(sig);
  }
  return MicroSetup{std::move(ds), std::move(m), std::move(tables), std::move(syn)};
}

inline std::vector<NodeRef> micro_seeds(const MicroSetup& s) {
  std::vector<NodeRef> seeds;
  for (std::size_t r = 0; r < s.ds.db.rows[0].size(); ++r) seeds.push_back({0, r});
  return seeds;
}

inline BatchHeads micro_forward(Tape& tape, const MicroSetup& s, double gamma, bool with_syn, bool disable_gate) {
  const std::vector<std::size_t> fan(s.model.config.layers(), kUnlimitedFanout);
  const NeighborSample sample = sample_neighborhood(s.ds.graph, micro_seeds(s), fan, Rng(1));
  GnnOutput gnn = propagate(tape, s.model, s.ds.graph, s.tables, sample, disable_gate);
  std::vector<int> labels;
  for (const NodeRef& n : sample.seeds) labels.push_back(s.ds.labels.label[n.row_id]);
  return batch_heads(tape, s.model, gnn.reps, sample.seeds, s.ds.signatures, labels, with_syn ? s.syn : SynthBatch{},
                     gamma);
}

inline GradReport micro_gradient_report(double gamma, bool disable_gate = false) {
  TrainConfig cfg = micro_config();
  cfg.disable_gate = disable_gate;
  MicroSetup s = micro_setup(cfg);
  return check_gradients(
      s.model.params.entries(),
      [&] {
        Tape tape;
        return micro_forward(tape, s, gamma, true, disable_gate).loss.total.value().values[0];
      },
      [&] {
        Tape tape;
        tape.backward(micro_forward(tape, s, gamma, true, disable_gate).loss.total);
      });
}

// ---------------------------------------------------------------------------
// Dense straight-line oracle over the whole graph.

using Mat = Eigen::MatrixXd;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  return m;
}

inline Mat oracle_encode(const TableEncoder& enc, const std::vector<RawEntity>& rows) {
  const std::size_t n = rows.size();
  Mat x(n, std::max<std::size_t>(enc.concat_width(), 1));
  x.setZero();
  for (std::size_t i = 0; i < n; ++i) {
    const EntityFeatures f = featurize(enc.spec, rows[i]);
    std::size_t c = 0;
    for (double v : f.dense) x(i, c++) = v;
    for (std::size_t k = 0; k < f.categories.size(); ++k)
      for (std::size_t j = 0; j < enc.d_cat; ++j) x(i, c++) = enc.embeddings[k]->at(f.categories[k], j);
  }
  Mat h = (x * to_mat(*enc.proj_w)).rowwise() + to_mat(*enc.proj_b).row(0);
  h = h.cwiseMax(0.0);
  for (const auto& [w, b] : enc.hidden) h = ((h * to_mat(*w)).rowwise() + to_mat(*b).row(0)).cwiseMax(0.0);
  return h;
}

inline Mat sigmoid_mat(const Mat& z) {
  Mat out = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-z.data()[i]));
  return out;
}

// Logits of every target row computed from the raw parameters, one entity at
// a time, with no sampling, tape or segment bookkeeping.
inline std::vector<double> oracle_logits(const MicroSetup& s, bool disable_gate) {
  const RelMossModel& m = s.model;
  const HeteroGraph& g = s.ds.graph;
  const double d = static_cast<double>(m.config.dim);
  std::vector<Mat> x;
  for (std::size_t t = 0; t < g.type_count(); ++t) x.push_back(oracle_encode(m.encoders[t], s.ds.db.rows[t]));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const RelGateLayer& layer = m.layers[l];
    std::vector<Mat> next;
    for (std::size_t t = 0; t < g.type_count(); ++t) {
      Mat out(x[t].rows(), x[t].cols());
      for (Eigen::Index e = 0; e < x[t].rows(); ++e) {
        Eigen::RowVectorXd z = x[t].row(e) * to_mat(*layer.self_weight);
        for (std::size_t r = 0; r < g.relation_count(); ++r) {
          const RelationType& rt = g.relation(r);
          if (rt.src_type != t) continue;
          const auto nb = g.neighbor_rows({t, static_cast<std::size_t>(e)}, r);
          if (nb.empty()) continue;
          Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(x[t].cols());
          for (std::size_t v : nb) h += x[rt.dst_type].row(static_cast<Eigen::Index>(v)) * to_mat(*layer.rel_weight[r]);
          h /= static_cast<double>(nb.size());
          if (disable_gate) {
            z += h;
            continue;
          }
          const double a = (x[t].row(e) * to_mat(*layer.q(r))).dot(h * to_mat(*layer.k(r)));
          const Mat pre = to_mat(*layer.rel_embed[r]) + (a / std::sqrt(d)) * (h * to_mat(*layer.v(r)));
          z += sigmoid_mat(pre).row(0).cwiseProduct(h);
        }
        out.row(e) = l + 1 < m.layers.size() ? Eigen::RowVectorXd(z.cwiseMax(0.0)) : z;
      }
      next.push_back(out);
    }
    x = std::move(next);
  }
  std::vector<double> logits;
  for (Eigen::Index e = 0; e < x[m.target].rows(); ++e) {
    const auto sig = s.ds.signatures.row(static_cast<std::size_t>(e));
    Eigen::RowVectorXd srow(sig.size());
    for (std::size_t c = 0; c < sig.size(); ++c) srow[static_cast<Eigen::Index>(c)] = sig[c];
    Eigen::RowVectorXd fused = x[m.target].row(e) * to_mat(*m.fuse_x) + srow * to_mat(*m.fuse_s) + to_mat(*m.fuse_b);
    fused = fused.cwiseMax(0.0);
    logits.push_back((fused * to_mat(*m.cls_w))(0, 0) + m.cls_b->values[0]);
  }
  return logits;
}

}  // namespace relmoss::testing
