// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared fixtures and reference implementations for the test suite and the
// acceptance runner. Oracles here deliberately avoid the library's indexes
// (CSR, PK maps) and recompute everything by brute force.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "relmoss/dataset.hpp"
#include "relmoss/graph.hpp"
#include "relmoss/model.hpp"
#include "relmoss/rdb.hpp"
#include "relmoss/rel_syn.hpp"
#include "relmoss/rng.hpp"
#include "relmoss/tensor.hpp"

namespace relmoss::testing {

// ---------------------------------------------------------------------------
// Finite differences

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// `loss` builds a fresh tape and returns the scalar loss value; `backward`
// does the same and leaves gradients in the parameters.
inline GradReport check_gradients(const std::vector<std::pair<std::string, TensorPtr>>& params,
                                  const std::function<double()>& loss, const std::function<void()>& backward,
                                  double h = 1e-6) {
  for (const auto& [name, t] : params) {
    t->ensure_grad();
    t->zero_grad();
  }
  backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : params) analytic.push_back(t->grad);
  GradReport rep;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p].second;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double keep = t.values[i];
      t.values[i] = keep + h;
      const double up = loss();
      t.values[i] = keep - h;
      const double down = loss();
      t.values[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[p][i], numeric);
      ++rep.checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst = params[p].first + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[p][i]) +
                    " numeric " + std::to_string(numeric);
      }
    }
  }
  return rep;
}

inline TensorPtr random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = make_tensor(rows, cols);
  t->requires_grad = true;
  t->ensure_grad();
  for (double& v : t->values) v = rng.uniform(lo, hi);
  return t;
}

// ---------------------------------------------------------------------------
// Random relational databases

inline std::string key_of(std::size_t table, std::size_t row) {
  return "t" + std::to_string(table) + "k" + std::to_string(row * 7 + 3);
}

// 2-4 tables with a PK, a numeric, a categorical and a timestamp column and
// 0-2 foreign keys each (self references allowed). FK cells are null or
// dangling with small probability.
inline RelationalDatabase random_database(Rng& rng) {
  RelationalDatabase db;
  const std::size_t tables = 2 + static_cast<std::size_t>(rng.below(3));
  std::vector<std::size_t> sizes;
  for (std::size_t t = 0; t < tables; ++t) sizes.push_back(1 + static_cast<std::size_t>(rng.below(25)));
  for (std::size_t t = 0; t < tables; ++t) {
    TableSchema ts;
    ts.name = "table" + std::to_string(t);
    ts.file = ts.name + ".csv";
    ts.columns.push_back({"id", Modality::PrimaryKey, std::nullopt});
    ts.columns.push_back({"value", Modality::Numeric, std::nullopt});
    ts.columns.push_back({"kind", Modality::Categorical, std::nullopt});
    ts.columns.push_back({"at", Modality::Timestamp, std::nullopt});
    const std::size_t fks = static_cast<std::size_t>(rng.below(3));
    for (std::size_t f = 0; f < fks; ++f) {
      const std::size_t target = static_cast<std::size_t>(rng.below(tables));
      ts.columns.push_back({"ref" + std::to_string(f), Modality::ForeignKey, "table" + std::to_string(target)});
    }
    db.schemas.push_back(std::move(ts));
  }
  db.links = derive_links(db.schemas);
  db.rows.resize(tables);
  for (std::size_t t = 0; t < tables; ++t) {
    // Rows are stored in a shuffled key order so row index != key order.
    std::vector<std::size_t> order(sizes[t]);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i : order) {
      RawEntity e;
      e.cells.push_back(Cell{key_of(t, i)});
      e.cells.push_back(rng.bernoulli(0.1) ? Cell{} : Cell{rng.normal()});
      e.cells.push_back(rng.bernoulli(0.1) ? Cell{} : Cell{"c" + std::to_string(rng.below(4))});
      e.cells.push_back(Cell{static_cast<std::int64_t>(1600000000 + rng.below(1000000))});
      for (std::size_t c = 4; c < db.schemas[t].columns.size(); ++c) {
        const std::size_t target = db.table_index(*db.schemas[t].columns[c].fk_target);
        const double u = rng.uniform();
        if (u < 0.1) e.cells.push_back(Cell{});
        else if (u < 0.2) e.cells.push_back(Cell{"missing" + std::to_string(rng.below(5))});
        else e.cells.push_back(Cell{key_of(target, static_cast<std::size_t>(rng.below(sizes[target])))});
      }
      db.rows[t].push_back(std::move(e));
    }
  }
  db.index_keys();
  return db;
}

// Nested-loop join: (src row, dst row) for every FK cell equal to a PK.
inline std::vector<std::pair<std::size_t, std::size_t>> join_oracle(const RelationalDatabase& db, const Link& l) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t pk = db.schemas[l.target_table].pk_column();
  for (std::size_t i = 0; i < db.rows[l.source_table].size(); ++i) {
    const Cell& fk = db.rows[l.source_table][i].cells[l.fk_column];
    if (is_null(fk)) continue;
    for (std::size_t j = 0; j < db.rows[l.target_table].size(); ++j) {
      if (db.rows[l.target_table][j].cells[pk] == fk) out.emplace_back(i, j);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::pair<std::size_t, std::size_t>> adjacency_pairs(const HeteroGraph& g, std::size_t rel) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const RelationType& rt = g.relation(rel);
  for (std::size_t s = 0; s < g.node_count(rt.src_type); ++s)
    for (std::size_t d : g.adjacency(rel).slice(s)) out.emplace_back(s, d);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Random graphs with their edge lists kept for path enumeration

struct RandomGraph {
  std::vector<std::size_t> counts;
  std::vector<EdgeSet> sets;
  HeteroGraph graph;
};

inline RandomGraph random_graph(Rng& rng) {
  RandomGraph rg;
  const std::size_t types = 1 + static_cast<std::size_t>(rng.below(4));
  std::vector<std::string> names;
  for (std::size_t t = 0; t < types; ++t) {
    names.push_back("type" + std::to_string(t));
    rg.counts.push_back(1 + static_cast<std::size_t>(rng.below(12)));
  }
  const std::size_t links = 1 + static_cast<std::size_t>(rng.below(4));
  for (std::size_t l = 0; l < links; ++l) {
    EdgeSet es;
    es.src_type = static_cast<std::size_t>(rng.below(types));
    es.dst_type = static_cast<std::size_t>(rng.below(types));
    es.fk_column = "fk" + std::to_string(l);
    const double density = rng.uniform(0.0, 0.4);
    for (std::size_t a = 0; a < rg.counts[es.src_type]; ++a)
      for (std::size_t b = 0; b < rg.counts[es.dst_type]; ++b)
        if (rng.bernoulli(density)) es.edges.emplace_back(a, b);
    rg.sets.push_back(std::move(es));
  }
  rg.graph = HeteroGraph(names, rg.counts, rg.sets);
  return rg;
}

// Typed directed edge (relation, src type, src, dst type, dst), both directions.
using TypedEdge = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t>;

inline std::vector<TypedEdge> typed_edges(const RandomGraph& rg) {
  std::vector<TypedEdge> out;
  for (std::size_t l = 0; l < rg.sets.size(); ++l) {
    const EdgeSet& es = rg.sets[l];
    for (const auto& [a, b] : es.edges) {
      out.emplace_back(2 * l, es.src_type, a, es.dst_type, b);
      out.emplace_back(2 * l + 1, es.dst_type, b, es.src_type, a);
    }
  }
  return out;
}

inline void normalize_block(std::vector<double>& v, std::size_t begin, std::size_t len) {
  double total = 0.0;
  for (std::size_t i = 0; i < len; ++i) total += v[begin + i];
  if (total == 0.0) return;
  for (std::size_t i = 0; i < len; ++i) v[begin + i] /= total;
}

// Signature by explicit enumeration of all 1- and 2-step paths.
inline std::vector<double> signature_oracle(const RandomGraph& rg, std::size_t type, std::size_t row) {
  const std::size_t T = rg.counts.size(), R = 2 * rg.sets.size();
  const auto edges = typed_edges(rg);
  std::vector<double> sig(2 * T + 2 * R, 0.0);
  for (const auto& [r, st, s, dt, d] : edges) {
    if (st == type && s == row) {
      sig[dt] += 1.0;
      sig[2 * T + r] += 1.0;
      for (const auto& [r2, st2, s2, dt2, d2] : edges)
        if (st2 == dt && s2 == d) sig[T + dt2] += 1.0;
    }
    if (dt == type && d == row) sig[2 * T + R + r] += 1.0;
  }
  normalize_block(sig, 0, T);
  normalize_block(sig, T, T);
  normalize_block(sig, 2 * T, R);
  normalize_block(sig, 2 * T + R, R);
  return sig;
}

// ---------------------------------------------------------------------------
// Memory bank oracles

inline MemoryBank random_bank(Rng& rng, std::size_t capacity, std::size_t entries, std::size_t rep_w,
                              std::size_t sig_w, bool coarse) {
  MemoryBank bank(capacity, rep_w, sig_w);
  for (std::size_t i = 0; i < entries; ++i) {
    BankEntry e;
    // Coarse values produce exact distance ties.
    for (std::size_t c = 0; c < rep_w; ++c) e.rep.push_back(coarse ? static_cast<double>(rng.below(3)) : rng.normal());
    for (std::size_t c = 0; c < sig_w; ++c) e.sig.push_back(coarse ? static_cast<double>(rng.below(2)) : rng.uniform());
    e.node = NodeRef{0, i};
    bank.push(std::move(e));
  }
  return bank;
}

// Brute-force scan written independently of nearest_minority.
inline std::optional<std::size_t> brute_nearest(const MemoryBank& bank, const std::vector<double>& x,
                                                const std::vector<double>& s, double omega,
                                                std::optional<NodeRef> exclude) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const BankEntry& e = bank.at(i);
    if (exclude && e.node == *exclude) continue;
    double dx = 0.0, ds = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) dx += (x[c] - e.rep[c]) * (x[c] - e.rep[c]);
    for (std::size_t c = 0; c < s.size(); ++c) ds += (s[c] - e.sig[c]) * (s[c] - e.sig[c]);
    scored.emplace_back(dx + omega * ds, i);
  }
  if (scored.empty()) return std::nullopt;
  std::sort(scored.begin(), scored.end());  // ties broken by index
  return scored.front().second;
}

// Classic SMOTE neighbour choice: nearest in representation space only.
inline std::optional<std::size_t> smote_neighbor(const MemoryBank& bank, const std::vector<double>& x,
                                                 std::optional<NodeRef> exclude) {
  std::optional<std::size_t> best;
  double best_d = 0.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const BankEntry& e = bank.at(i);
    if (exclude && e.node == *exclude) continue;
    double d = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) d += (x[c] - e.rep[c]) * (x[c] - e.rep[c]);
    if (!best || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Micro relational fixture: 4 users, 3 items, 7 interactions

inline RelationalDatabase micro_database() {
  RelationalDatabase db;
  db.schemas.push_back({"users", "users.csv",
                        {{"user_id", Modality::PrimaryKey, std::nullopt},
                         {"age", Modality::Numeric, std::nullopt},
                         {"country", Modality::Categorical, std::nullopt}}});
  db.schemas.push_back({"items", "items.csv",
                        {{"item_id", Modality::PrimaryKey, std::nullopt},
                         {"category", Modality::Categorical, std::nullopt},
                         {"price", Modality::Numeric, std::nullopt}}});
  db.schemas.push_back({"interactions", "interactions.csv",
                        {{"interaction_id", Modality::PrimaryKey, std::nullopt},
                         {"user_id", Modality::ForeignKey, "users"},
                         {"item_id", Modality::ForeignKey, "items"},
                         {"rating", Modality::Numeric, std::nullopt},
                         {"ts", Modality::Timestamp, std::nullopt}}});
  db.links = derive_links(db.schemas);
  db.rows.resize(3);
  const double ages[] = {23.0, 41.0, 35.0, 58.0};
  const char* countries[] = {"a", "b", "a", "c"};
  for (int u = 0; u < 4; ++u)
    db.rows[0].push_back({{Cell{"u" + std::to_string(u)}, Cell{ages[u]}, Cell{std::string(countries[u])}}});
  const char* cats[] = {"rare", "x", "y"};
  const double prices[] = {9.5, 3.0, 4.25};
  for (int i = 0; i < 3; ++i)
    db.rows[1].push_back({{Cell{"i" + std::to_string(i)}, Cell{std::string(cats[i])}, Cell{prices[i]}}});
  const int pairs[][2] = {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 0}, {2, 2}, {3, 1}};
  for (int k = 0; k < 7; ++k) {
    db.rows[2].push_back({{Cell{"x" + std::to_string(k)}, Cell{"u" + std::to_string(pairs[k][0])},
                           Cell{"i" + std::to_string(pairs[k][1])}, Cell{1.0 + 0.5 * k},
                           Cell{static_cast<std::int64_t>(1700000000 + 86400 * k)}}});
  }
  db.index_keys();
  return db;
}

inline TaskLabels micro_labels() {
  TaskLabels t;
  t.label = {1, 0, 1, 0};
  t.split = {Split::Train, Split::Train, Split::Train, Split::Train};
  return t;
}

inline TrainConfig micro_config() {
  TrainConfig cfg;
  cfg.dim = 4;
  cfg.d_cat = 2;
  cfg.batch_size = 4;
  cfg.bank_capacity = 4;
  cfg.fanouts = {kUnlimitedFanout, kUnlimitedFanout};
  cfg.epochs = 1;
  cfg.seed = 7;
  return cfg;
}

}  // namespace relmoss::testing
