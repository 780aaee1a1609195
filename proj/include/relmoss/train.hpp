// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training loop with per-batch minority synthesis and FIFO bank refresh, and
// full-neighbourhood evaluation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "relmoss/metrics.hpp"
#include "relmoss/model.hpp"
#include "relmoss/rel_syn.hpp"

namespace relmoss {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::size_t anchor_row = 0;
  std::size_t parent_row = 0;
  std::size_t parent_index = 0;
  double lambda = 0.0;
  double distance = 0.0;
};

struct GateStat {
  std::size_t epoch = 0;
  std::size_t layer = 0;
  std::size_t relation = 0;
  double mean = 0.0;
};

struct TrainResult {
  std::vector<MetricsReport> history;  // split "train", one per epoch
  std::vector<SynthRecord> synth_log;
  std::vector<GateStat> gate_log;
  std::vector<std::vector<double>> final_epoch_syn_sigs;
  std::size_t bank_capacity = 0;
  std::size_t synthesized = 0;
  std::size_t skipped_cold = 0;
};

// Less frequent label among training rows; ties favour label 1.
inline int find_minority_label(const Dataset& ds) {
  std::size_t pos = 0, neg = 0;
  for (std::size_t r : ds.rows_in(Split::Train)) (ds.labels.label[r] == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) throw TrainingError("degenerate single-class training set");
  return pos <= neg ? 1 : 0;
}

inline std::vector<NodeRef> as_nodes(std::size_t type, std::span<const std::size_t> rows) {
  std::vector<NodeRef> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back({type, r});
  return out;
}

inline std::vector<double> row_copy(const Tensor& t, std::size_t r) {
  const auto s = t.row(r);
  return {s.begin(), s.end()};
}

inline TrainResult train(RelMossModel& m, const Dataset& ds, const std::vector<EncodedTable>& tables) {
  const TrainConfig& cfg = m.config;
  m.minority_label = find_minority_label(ds);
  std::vector<std::size_t> train_rows = ds.rows_in(Split::Train);
  std::size_t n_minor_train = 0;
  for (std::size_t r : train_rows) n_minor_train += ds.labels.label[r] == m.minority_label;

  TrainResult res;
  res.bank_capacity = std::max<std::size_t>(2, std::min(cfg.bank_capacity, n_minor_train));
  MemoryBank bank(res.bank_capacity, cfg.dim, m.sig_width);
  std::vector<BankEntry> pending;

  Rng order_rng = derive_stream(cfg.seed, 1);
  Rng sample_rng = derive_stream(cfg.seed, 2);
  Rng syn_rng = derive_stream(cfg.seed, 3);
  const auto params = m.params.tensors();
  AdamState adam;
  adam.init(params);
  AdamOptions adam_opt;
  adam_opt.lr = cfg.lr;
  SynthesisOptions syn_opt;
  syn_opt.omega = cfg.omega;
  syn_opt.beta_alpha = cfg.beta_alpha;
  syn_opt.beta_beta = cfg.beta_beta;
  syn_opt.minority_label = m.minority_label;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(train_rows);
    double loss_cls = 0.0, loss_syn = 0.0;
    std::size_t batches = 0;
    ConfusionMatrix cm;
    std::vector<double> gate_sum, gate_cnt;
    const bool last_epoch = epoch == cfg.epochs;

    for (std::size_t start = 0; start < train_rows.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train_rows.size(), start + cfg.batch_size);
      const std::vector<NodeRef> seeds =
          as_nodes(ds.target, std::span<const std::size_t>(train_rows.data() + start, end - start));
      const NeighborSample sample = sample_neighborhood(ds.graph, seeds, cfg.fanouts, sample_rng.split());
      std::vector<int> labels;
      labels.reserve(sample.seeds.size());
      for (const NodeRef& n : sample.seeds) labels.push_back(ds.labels.label[n.row_id]);

      Tape tape;
      GnnOutput gnn = propagate(tape, m, ds.graph, tables, sample, cfg.disable_gate);
      const Tensor& reps = gnn.reps.value();

      std::vector<std::size_t> minors;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == m.minority_label) minors.push_back(i);
      std::vector<BankEntry> fresh;
      for (std::size_t i : minors) {
        const auto sig = ds.signatures.row(sample.seeds[i].row_id);
        fresh.push_back(BankEntry{row_copy(reps, i), {sig.begin(), sig.end()}, sample.seeds[i]});
      }
      if (cfg.bank_refresh == BankRefresh::PerBatch) {
        bank.push(std::move(fresh));
      } else {
        for (auto& e : fresh) pending.push_back(std::move(e));
      }

      SynthBatch syn;
      if (!cfg.disable_syn && !minors.empty()) {
        const std::size_t n_major = labels.size() - minors.size();
        const std::size_t quota = std::min(cfg.syn_quota_cap(), n_major > minors.size() ? n_major - minors.size() : 0);
        for (std::size_t q = 0; q < quota; ++q) {
          const std::size_t pos = minors[q % minors.size()];
          const auto x = reps.row(pos);
          const auto s = ds.signatures.row(sample.seeds[pos].row_id);
          if (bank.size() < 2) {
            ++res.skipped_cold;
            continue;
          }
          auto out = synthesize(x, s, bank, syn_opt, syn_rng, sample.seeds[pos]);
          if (!out) {
            ++res.skipped_cold;
            continue;
          }
          const BankEntry& partner = bank.at(out->parent_index);
          syn.anchor.push_back(pos);
          syn.lambda.push_back(out->lambda);
          syn.partner_rep.push_back(partner.rep);
          syn.partner_sig.push_back(partner.sig);
          res.synth_log.push_back(SynthRecord{epoch, batches, sample.seeds[pos].row_id, partner.node.row_id,
                                              out->parent_index, out->lambda, out->distance});
        }
      }

      const std::size_t n = labels.size(), k = syn.size();
      BatchHeads heads = batch_heads(tape, m, gnn.reps, sample.seeds, ds.signatures, labels, syn, cfg.gamma);
      const LossParts& loss = heads.loss;
      res.synthesized += k;
      if (last_epoch)
        for (auto& sr : heads.syn_sigs) res.final_epoch_syn_sigs.push_back(std::move(sr));

      m.params.zero_grad();
      tape.backward(loss.total);
      if (cfg.optimizer == Optimizer::Adam) adam_step(params, adam, adam_opt);
      else sgd_step(params, cfg.lr);
      if (!m.params.all_finite()) {
        throw TrainingError("non-finite parameter after optimizer step (epoch " + std::to_string(epoch) + ")");
      }

      const Tensor& lg = heads.logits.value();
      for (std::size_t i = 0; i < n; ++i) cm.add(labels[i], lg.values[i] >= 0.0 ? 1 : 0);
      for (const GateTrace& gt : gnn.gates) {
        const std::size_t slot = gt.layer * ds.graph.relation_count() + gt.relation;
        if (gate_sum.size() <= slot) {
          gate_sum.resize(slot + 1, 0.0);
          gate_cnt.resize(slot + 1, 0.0);
        }
        for (double v : gt.gate.value().values) gate_sum[slot] += v;
        gate_cnt[slot] += static_cast<double>(gt.gate.value().size());
      }
      loss_cls += loss.cls;
      loss_syn += loss.syn;
      ++batches;
    }
    if (cfg.bank_refresh == BankRefresh::PerEpoch) {
      bank.push(std::move(pending));
      pending.clear();
    }
    for (std::size_t slot = 0; slot < gate_sum.size(); ++slot) {
      if (gate_cnt[slot] == 0.0) continue;
      res.gate_log.push_back(GateStat{epoch, slot / ds.graph.relation_count(), slot % ds.graph.relation_count(),
                                      gate_sum[slot] / gate_cnt[slot]});
    }
    const double nb = batches ? static_cast<double>(batches) : 1.0;
    res.history.push_back(make_report(static_cast<int>(epoch), "train", cm, loss_cls / nb, loss_syn / nb));
  }
  return res;
}

struct RowOutputs {
  Tensor reps;    // rows x dim, before fusion
  Tensor logits;  // rows x 1
};

// Representations and logits of the given target rows with the configured
// evaluation fanout.
inline RowOutputs forward_rows(const RelMossModel& m, const Dataset& ds, const std::vector<EncodedTable>& tables,
                               const std::vector<std::size_t>& rows) {
  const TrainConfig& cfg = m.config;
  RowOutputs out{Tensor(0, cfg.dim), Tensor(0, 1)};
  const std::vector<std::size_t> fanouts(cfg.layers(), cfg.eval_fanout);
  Rng rng = derive_stream(cfg.seed, 4);
  for (std::size_t start = 0; start < rows.size(); start += cfg.eval_batch()) {
    const std::size_t end = std::min(rows.size(), start + cfg.eval_batch());
    const auto seeds = as_nodes(ds.target, std::span<const std::size_t>(rows.data() + start, end - start));
    const NeighborSample sample = sample_neighborhood(ds.graph, seeds, fanouts, rng.split());
    if (sample.seeds.size() != seeds.size()) throw std::invalid_argument("forward_rows: duplicate rows");
    Tape tape;
    GnnOutput gnn = propagate(tape, m, ds.graph, tables, sample, cfg.disable_gate);
    Var fused = fuse(tape, m, gnn.reps, tape.constant(signature_rows(ds.signatures, sample.seeds)));
    const Tensor& lg = classify(tape, m, fused).value();
    const Tensor& rp = gnn.reps.value();
    out.reps.values.insert(out.reps.values.end(), rp.values.begin(), rp.values.end());
    out.logits.values.insert(out.logits.values.end(), lg.values.begin(), lg.values.end());
  }
  out.reps.shape[0] = rows.size();
  out.logits.shape[0] = rows.size();
  return out;
}

inline std::vector<double> predict_logits(const RelMossModel& m, const Dataset& ds,
                                          const std::vector<EncodedTable>& tables, const std::vector<std::size_t>& rows) {
  return forward_rows(m, ds, tables, rows).logits.values;
}

inline MetricsReport evaluate(const RelMossModel& m, const Dataset& ds, const std::vector<EncodedTable>& tables,
                              Split split, int epoch = 0) {
  const auto rows = ds.rows_in(split);
  const auto logits = predict_logits(m, ds, tables, rows);
  const auto labels = ds.labels_of(rows);
  double bce = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    bce += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
  }
  if (!logits.empty()) bce /= static_cast<double>(logits.size());
  return make_report(epoch, to_string(split), confusion_from_logits(logits, labels), bce);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json model_meta(const RelMossModel& m, const Dataset& ds) {
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& e : m.encoders) specs.push_back(feature_spec_json(e.spec));
  return {{"config", to_json(m.config)},
          {"target_table", ds.db.schemas[ds.target].name},
          {"minority_label", m.minority_label},
          {"sig_width", m.sig_width},
          {"feature_specs", specs}};
}

inline void save_model(const std::filesystem::path& path, const RelMossModel& m, const Dataset& ds) {
  save_checkpoint(path.string(), m.params, model_meta(m, ds));
}

// Rebuilds the model recorded in a checkpoint against a dataset with the same schema.
inline RelMossModel load_model(const std::filesystem::path& path, const Dataset& ds) {
  const nlohmann::json ck = read_checkpoint(path.string());
  const auto& meta = ck.at("meta");
  const TrainConfig cfg = train_config_from_json(meta.at("config"));
  if (meta.at("target_table").get<std::string>() != ds.db.schemas[ds.target].name) {
    throw RdbError("checkpoint target table does not match the dataset");
  }
  std::vector<TableFeatureSpec> specs;
  for (const auto& s : meta.at("feature_specs")) specs.push_back(feature_spec_from_json(s));
  RelMossModel m = make_model(ds.graph, std::move(specs), ds.target, cfg);
  if (m.sig_width != meta.at("sig_width").get<std::size_t>()) throw RdbError("checkpoint signature width mismatch");
  m.minority_label = meta.at("minority_label").get<int>();
  load_parameters(ck, m.params);
  return m;
}

}  // namespace relmoss
