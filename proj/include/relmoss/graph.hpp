// SPDX-License-Identifier: Apache-2.0
#pragma once

// Heterogeneous entity graph: one node type per table, one relation per FK
// link plus its materialised reverse. Adjacency is CSR per relation.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "relmoss/rdb.hpp"
#include "relmoss/rng.hpp"

namespace relmoss {

struct NodeRef {
  std::size_t type_id = 0;
  std::size_t row_id = 0;
  bool operator==(const NodeRef&) const = default;
  auto operator<=>(const NodeRef&) const = default;
};

enum class Direction { Forward, Reverse };

struct RelationType {
  std::size_t rel_id = 0;
  std::size_t src_type = 0;
  std::size_t dst_type = 0;
  std::string fk_column;
  Direction direction = Direction::Forward;
  std::size_t paired = 0;  // rel_id of the opposite direction
  std::string name;
};

struct Csr {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> targets;

  std::size_t degree(std::size_t row) const { return offsets[row + 1] - offsets[row]; }
  std::span<const std::size_t> slice(std::size_t row) const {
    return {targets.data() + offsets[row], offsets[row + 1] - offsets[row]};
  }
  std::size_t edge_count() const { return targets.size(); }
};

// Forward edge list of one relation, used to assemble graphs directly.
struct EdgeSet {
  std::size_t src_type = 0;
  std::size_t dst_type = 0;
  std::string fk_column;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (src row, dst row)
};

class HeteroGraph {
 public:
  HeteroGraph() = default;

  // Builds forward CSR from `sets` and materialises every reverse relation.
  HeteroGraph(std::vector<std::string> type_names, std::vector<std::size_t> node_counts, const std::vector<EdgeSet>& sets)
      : type_names_(std::move(type_names)), node_counts_(std::move(node_counts)) {
    if (type_names_.size() != node_counts_.size()) throw std::invalid_argument("HeteroGraph: type count mismatch");
    for (const EdgeSet& es : sets) {
      if (es.src_type >= node_counts_.size() || es.dst_type >= node_counts_.size()) {
        throw std::out_of_range("HeteroGraph: edge set refers to an unknown type");
      }
      const std::size_t fwd = relations_.size();
      const std::string base = type_names_[es.src_type] + "." + es.fk_column + "->" + type_names_[es.dst_type];
      relations_.push_back({fwd, es.src_type, es.dst_type, es.fk_column, Direction::Forward, fwd + 1, base});
      relations_.push_back({fwd + 1, es.dst_type, es.src_type, es.fk_column, Direction::Reverse, fwd, "rev:" + base});
      adjacency_.push_back(build_csr(node_counts_[es.src_type], node_counts_[es.dst_type], es.edges, false));
      adjacency_.push_back(build_csr(node_counts_[es.dst_type], node_counts_[es.src_type], es.edges, true));
    }
    for (std::size_t t = 0; t < node_counts_.size(); ++t) {
      std::vector<std::size_t> rs;
      for (const auto& r : relations_)
        if (r.src_type == t) rs.push_back(r.rel_id);
      outgoing_.push_back(std::move(rs));
    }
  }

  std::size_t type_count() const { return node_counts_.size(); }
  std::size_t relation_count() const { return relations_.size(); }
  std::size_t node_count(std::size_t type) const { return node_counts_.at(type); }
  const std::vector<std::size_t>& node_counts() const { return node_counts_; }
  const std::string& type_name(std::size_t type) const { return type_names_.at(type); }
  const std::vector<RelationType>& relations() const { return relations_; }
  const RelationType& relation(std::size_t r) const { return relations_.at(r); }
  const Csr& adjacency(std::size_t r) const { return adjacency_.at(r); }

  // Relations whose source type is `type`, in rel_id order.
  const std::vector<std::size_t>& relations_from(std::size_t type) const { return outgoing_.at(type); }

  std::span<const std::size_t> neighbor_rows(NodeRef node, std::size_t rel) const {
    const RelationType& rt = relations_.at(rel);
    if (node.type_id != rt.src_type) {
      throw std::invalid_argument("neighbors: node type " + type_names_.at(node.type_id) +
                                  " does not match source type of relation " + rt.name);
    }
    if (node.row_id >= node_counts_[node.type_id]) throw std::out_of_range("neighbors: row out of range");
    return adjacency_[rel].slice(node.row_id);
  }

  std::vector<NodeRef> neighbors(NodeRef node, std::size_t rel) const {
    std::vector<NodeRef> out;
    const std::size_t dst = relations_.at(rel).dst_type;
    for (std::size_t v : neighbor_rows(node, rel)) out.push_back({dst, v});
    return out;
  }

  std::size_t degree(NodeRef node, std::size_t rel) const { return neighbor_rows(node, rel).size(); }

 private:
  static Csr build_csr(std::size_t n_src, std::size_t n_dst, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                       bool transpose) {
    Csr csr;
    csr.offsets.assign(n_src + 1, 0);
    for (const auto& [a, b] : edges) {
      const std::size_t s = transpose ? b : a, d = transpose ? a : b;
      if (s >= n_src || d >= n_dst) throw std::out_of_range("HeteroGraph: edge endpoint out of range");
      ++csr.offsets[s + 1];
    }
    for (std::size_t i = 0; i < n_src; ++i) csr.offsets[i + 1] += csr.offsets[i];
    csr.targets.resize(edges.size());
    std::vector<std::size_t> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
    for (const auto& [a, b] : edges) {
      const std::size_t s = transpose ? b : a, d = transpose ? a : b;
      csr.targets[cursor[s]++] = d;
    }
    return csr;
  }

  std::vector<std::string> type_names_;
  std::vector<std::size_t> node_counts_;
  std::vector<RelationType> relations_;
  std::vector<Csr> adjacency_;
  std::vector<std::vector<std::size_t>> outgoing_;
};

// One relation pair per FK link, in link order. Null and dangling FK cells
// contribute no edge.
inline HeteroGraph build_graph(const RelationalDatabase& db) {
  std::vector<std::string> names;
  std::vector<std::size_t> counts;
  for (std::size_t t = 0; t < db.table_count(); ++t) {
    names.push_back(db.schemas[t].name);
    counts.push_back(db.rows[t].size());
  }
  std::vector<EdgeSet> sets;
  for (const Link& l : db.links) {
    EdgeSet es{l.source_table, l.target_table, db.schemas[l.source_table].columns[l.fk_column].name, {}};
    const auto& rows = db.rows[l.source_table];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Cell& c = rows[i].cells[l.fk_column];
      if (is_null(c)) continue;
      if (auto j = db.find_pk(l.target_table, std::get<std::string>(c))) es.edges.emplace_back(i, *j);
    }
    sets.push_back(std::move(es));
  }
  return HeteroGraph(std::move(names), std::move(counts), sets);
}

// JSON lines, one record per relation.
inline void dump_graph(const HeteroGraph& g, std::ostream& out) {
  for (const auto& r : g.relations()) {
    nlohmann::json edges = nlohmann::json::array();
    const Csr& csr = g.adjacency(r.rel_id);
    for (std::size_t s = 0; s < g.node_count(r.src_type); ++s)
      for (std::size_t d : csr.slice(s)) edges.push_back({s, d});
    nlohmann::json j{{"relation", r.rel_id},
                     {"name", r.name},
                     {"src", g.type_name(r.src_type)},
                     {"dst", g.type_name(r.dst_type)},
                     {"direction", r.direction == Direction::Forward ? "forward" : "reverse"},
                     {"edges", std::move(edges)}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Mini-batch neighbourhood sampling

inline constexpr std::size_t kUnlimitedFanout = std::numeric_limits<std::size_t>::max();

// Local index of a sampled subgraph. Nodes of each type are numbered in
// discovery (BFS) order, so the nodes within k hops of the seeds always form
// a prefix of each type's local list.
struct NeighborSample {
  struct Block {
    std::vector<std::size_t> offsets{0};  // one segment per expanded local src node
    std::vector<std::size_t> neighbors;   // local ids in the relation's dst type
  };

  std::vector<NodeRef> seeds;
  std::size_t hops = 0;
  std::vector<std::vector<std::size_t>> rows;  // per type: global row of each local node
  std::vector<std::vector<std::size_t>> depth;  // per type: hop at first discovery
  std::vector<Block> blocks;                    // per relation

  // Number of local nodes of `type` at hop <= h.
  std::size_t prefix(std::size_t type, std::size_t h) const {
    const auto& d = depth[type];
    return static_cast<std::size_t>(std::upper_bound(d.begin(), d.end(), h) - d.begin());
  }

  std::size_t local_count() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.size();
    return n;
  }

  bool operator==(const NeighborSample& o) const {
    if (seeds != o.seeds || hops != o.hops || rows != o.rows || depth != o.depth || blocks.size() != o.blocks.size())
      return false;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      if (blocks[i].offsets != o.blocks[i].offsets || blocks[i].neighbors != o.blocks[i].neighbors) return false;
    return true;
  }
};

// Optional neighbour filter (e.g. temporal: drop neighbours stamped after the
// seed's label time). Returns true to keep the candidate.
using NeighborFilter = std::function<bool(const NodeRef& from, const NodeRef& candidate)>;

inline NeighborSample sample_neighborhood(const HeteroGraph& g, const std::vector<NodeRef>& seeds,
                                          const std::vector<std::size_t>& fanouts, Rng rng,
                                          const NeighborFilter& filter = {}) {
  if (seeds.empty()) throw std::invalid_argument("sample_neighborhood: empty seed list");
  NeighborSample s;
  s.hops = fanouts.size();
  s.rows.resize(g.type_count());
  s.depth.resize(g.type_count());
  s.blocks.resize(g.relation_count());

  std::vector<std::vector<std::size_t>> local_of(g.type_count());
  for (std::size_t t = 0; t < g.type_count(); ++t) local_of[t].assign(g.node_count(t), kUnlimitedFanout);

  auto intern = [&](NodeRef n, std::size_t d) {
    auto& slot = local_of[n.type_id][n.row_id];
    if (slot == kUnlimitedFanout) {
      slot = s.rows[n.type_id].size();
      s.rows[n.type_id].push_back(n.row_id);
      s.depth[n.type_id].push_back(d);
    }
    return slot;
  };

  for (const NodeRef& n : seeds) {
    if (n.type_id >= g.type_count() || n.row_id >= g.node_count(n.type_id)) {
      throw std::out_of_range("sample_neighborhood: seed out of range");
    }
    if (local_of[n.type_id][n.row_id] == kUnlimitedFanout) s.seeds.push_back(n);
    intern(n, 0);
  }

  std::vector<std::size_t> candidates;
  for (std::size_t h = 0; h < s.hops; ++h) {
    const std::size_t fanout = fanouts[h];
    for (std::size_t t = 0; t < g.type_count(); ++t) {
      // Nodes at depth h of type t are contiguous; new discoveries are at h+1.
      const std::size_t lo = h == 0 ? 0 : s.prefix(t, h - 1);
      const std::size_t hi = s.prefix(t, h);
      for (std::size_t local = lo; local < hi; ++local) {
        const NodeRef node{t, s.rows[t][local]};
        for (std::size_t r : g.relations_from(t)) {
          const std::size_t dst = g.relation(r).dst_type;
          candidates.clear();
          for (std::size_t v : g.neighbor_rows(node, r))
            if (!filter || filter(node, NodeRef{dst, v})) candidates.push_back(v);
          if (candidates.size() > fanout) {
            // Partial Fisher-Yates, then restore adjacency order.
            for (std::size_t i = 0; i < fanout; ++i) {
              const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
              std::swap(candidates[i], candidates[j]);
            }
            candidates.resize(fanout);
            std::sort(candidates.begin(), candidates.end());
          }
          auto& block = s.blocks[r];
          for (std::size_t v : candidates) block.neighbors.push_back(intern(NodeRef{dst, v}, h + 1));
          block.offsets.push_back(block.neighbors.size());
        }
      }
    }
  }
  return s;
}

}  // namespace relmoss
