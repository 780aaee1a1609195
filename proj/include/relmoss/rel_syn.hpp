// SPDX-License-Identifier: Apache-2.0
#pragma once

// Relation-guided minority synthesis: relational signatures, a FIFO memory
// bank of minority (representation, signature) pairs, joint-distance
// nearest-neighbour lookup and Beta-interpolated synthetic samples.

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "relmoss/graph.hpp"
#include "relmoss/rng.hpp"

namespace relmoss {

// Signature layout for a graph with T types and R relations (reverse
// relations included):
//   [0, T)            1-hop neighbour type histogram
//   [T, 2T)           2-hop type histogram (multiset over all length-2 paths)
//   [2T, 2T+R)        fan-out per relation (out-degree as relation source)
//   [2T+R, 2T+2R)     fan-in per relation (edges of the relation ending here)
// Each block is L1-normalised; an all-zero block stays zero.
struct SignatureLayout {
  std::size_t types = 0;
  std::size_t relations = 0;

  explicit SignatureLayout(const HeteroGraph& g) : types(g.type_count()), relations(g.relation_count()) {}
  std::size_t width() const { return 2 * types + 2 * relations; }
  std::vector<std::pair<std::size_t, std::size_t>> blocks() const {
    return {{0, types}, {types, types}, {2 * types, relations}, {2 * types + relations, relations}};
  }
};

inline void normalize_blocks(std::vector<double>& sig, const SignatureLayout& layout) {
  for (const auto& [begin, len] : layout.blocks()) {
    double total = 0.0;
    for (std::size_t i = begin; i < begin + len; ++i) total += sig[i];
    if (total > 0.0)
      for (std::size_t i = begin; i < begin + len; ++i) sig[i] /= total;
  }
}

inline std::vector<double> compute_signature(const HeteroGraph& g, NodeRef node) {
  if (node.type_id >= g.type_count() || node.row_id >= g.node_count(node.type_id)) {
    throw std::out_of_range("compute_signature: node out of range");
  }
  const SignatureLayout layout(g);
  const std::size_t T = layout.types, R = layout.relations;
  std::vector<double> sig(layout.width(), 0.0);
  for (std::size_t r : g.relations_from(node.type_id)) {
    const RelationType& rt = g.relation(r);
    const auto nbrs = g.neighbor_rows(node, r);
    sig[rt.dst_type] += static_cast<double>(nbrs.size());
    sig[2 * T + r] = static_cast<double>(nbrs.size());
    // Edges of the paired relation that end at this node.
    sig[2 * T + R + rt.paired] = static_cast<double>(nbrs.size());
    for (std::size_t v : nbrs) {
      for (std::size_t r2 : g.relations_from(rt.dst_type)) {
        sig[T + g.relation(r2).dst_type] += static_cast<double>(g.adjacency(r2).degree(v));
      }
    }
  }
  normalize_blocks(sig, layout);
  return sig;
}

// Signatures of every node of one type, row-major (rows x width).
struct SignatureTable {
  std::size_t width = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * width, width}; }
  std::size_t rows() const { return width ? values.size() / width : 0; }
};

inline SignatureTable compute_signatures(const HeteroGraph& g, std::size_t type) {
  SignatureTable t;
  t.width = SignatureLayout(g).width();
  t.values.reserve(g.node_count(type) * t.width);
  for (std::size_t i = 0; i < g.node_count(type); ++i) {
    const auto s = compute_signature(g, {type, i});
    t.values.insert(t.values.end(), s.begin(), s.end());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Memory bank

struct BankEntry {
  std::vector<double> rep;
  std::vector<double> sig;
  NodeRef node;
};

// Fixed-capacity FIFO. Index 0 is always the oldest retained entry.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t rep_width, std::size_t sig_width)
      : capacity_(capacity), rep_width_(rep_width), sig_width_(sig_width) {
    if (capacity == 0) throw std::invalid_argument("MemoryBank: capacity must be positive");
    ring_.reserve(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return ring_.size(); }
  bool empty() const { return ring_.empty(); }
  std::size_t rep_width() const { return rep_width_; }
  std::size_t sig_width() const { return sig_width_; }

  const BankEntry& at(std::size_t i) const {
    if (i >= ring_.size()) throw std::out_of_range("MemoryBank: index out of range");
    return ring_[(start_ + i) % ring_.size()];
  }

  void push(BankEntry e) {
    if (e.rep.size() != rep_width_ || e.sig.size() != sig_width_) {
      throw std::invalid_argument("MemoryBank: entry width mismatch");
    }
    if (ring_.size() < capacity_) {
      ring_.push_back(std::move(e));
    } else {
      ring_[start_] = std::move(e);
      start_ = (start_ + 1) % capacity_;
    }
  }

  void push(std::vector<BankEntry> entries) {
    for (const auto& e : entries) {
      if (e.rep.size() != rep_width_ || e.sig.size() != sig_width_) {
        throw std::invalid_argument("MemoryBank: entry width mismatch");
      }
    }
    for (auto& e : entries) push(std::move(e));
  }

  void clear() {
    ring_.clear();
    start_ = 0;
  }

 private:
  std::size_t capacity_;
  std::size_t rep_width_;
  std::size_t sig_width_;
  std::vector<BankEntry> ring_;
  std::size_t start_ = 0;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("squared_distance: width mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// ||x - x'||^2 + omega * ||s - s'||^2
inline double joint_distance(std::span<const double> x1, std::span<const double> s1, std::span<const double> x2,
                             std::span<const double> s2, double omega) {
  return squared_distance(x1, x2) + omega * squared_distance(s1, s2);
}

struct NearestMatch {
  std::size_t index = 0;
  double distance = 0.0;
};

// Exact linear scan; ties go to the lowest bank index. Returns nullopt when
// no eligible entry exists ("bank not warm").
inline std::optional<NearestMatch> nearest_minority(const MemoryBank& bank, std::span<const double> x,
                                                    std::span<const double> s, double omega,
                                                    std::optional<NodeRef> exclude = std::nullopt) {
  if (omega < 0.0) throw std::invalid_argument("nearest_minority: omega must be >= 0");
  std::optional<NearestMatch> best;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const BankEntry& e = bank.at(i);
    if (exclude && e.node == *exclude) continue;
    const double d = joint_distance(x, s, e.rep, e.sig, omega);
    if (!best || d < best->distance) best = NearestMatch{i, d};
  }
  return best;
}

struct SyntheticSample {
  std::vector<double> rep;
  std::vector<double> sig;
  int label = 1;
  double lambda = 0.0;
  std::size_t parent_index = 0;
  NodeRef parent_node;
  double distance = 0.0;
};

struct SynthesisOptions {
  double omega = 50.0;
  double beta_alpha = 2.0;
  double beta_beta = 2.0;
  int minority_label = 1;
  std::optional<double> forced_lambda;  // test hook
};

// X_syn = lambda X_e + (1 - lambda) X_{e*}, S_syn likewise, with one lambda
// drawn from Beta(alpha, beta) for both.
inline std::optional<SyntheticSample> synthesize(std::span<const double> x, std::span<const double> s,
                                                 const MemoryBank& bank, const SynthesisOptions& opt, Rng& rng,
                                                 std::optional<NodeRef> exclude = std::nullopt) {
  const auto match = nearest_minority(bank, x, s, opt.omega, exclude);
  if (!match) return std::nullopt;
  const BankEntry& partner = bank.at(match->index);
  const double lambda = opt.forced_lambda ? *opt.forced_lambda : beta_sample(rng, opt.beta_alpha, opt.beta_beta);
  SyntheticSample out;
  out.rep.resize(x.size());
  out.sig.resize(s.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.rep[i] = lambda * x[i] + (1.0 - lambda) * partner.rep[i];
  for (std::size_t i = 0; i < s.size(); ++i) out.sig[i] = lambda * s[i] + (1.0 - lambda) * partner.sig[i];
  out.label = opt.minority_label;
  out.lambda = lambda;
  out.parent_index = match->index;
  out.parent_node = partner.node;
  out.distance = match->distance;
  return out;
}

}  // namespace relmoss
