// SPDX-License-Identifier: Apache-2.0
#pragma once

// Layer-wise contraction of the minority signal under linear message passing,
// and a distribution-shift score between signature sets.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relmoss/graph.hpp"
#include "relmoss/rng.hpp"

namespace relmoss {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Labels for every node of every type; -1 marks unlabelled nodes.
using NodeLabels = std::vector<std::vector<int>>;

// Mean of minority-labelled rows minus mean of majority-labelled rows among
// `nodes`. nullopt when either class is absent.
inline std::optional<Vector> minority_signal(const std::vector<Matrix>& reps, const NodeLabels& labels,
                                             std::span<const NodeRef> nodes, int minority_label = 1) {
  if (reps.empty()) return std::nullopt;
  const Eigen::Index d = reps.front().cols();
  Vector minor = Vector::Zero(d), major = Vector::Zero(d);
  std::size_t n_minor = 0, n_major = 0;
  for (const NodeRef& v : nodes) {
    const int y = labels.at(v.type_id).at(v.row_id);
    if (y < 0) continue;
    if (y == minority_label) {
      minor += reps[v.type_id].row(static_cast<Eigen::Index>(v.row_id)).transpose();
      ++n_minor;
    } else {
      major += reps[v.type_id].row(static_cast<Eigen::Index>(v.row_id)).transpose();
      ++n_major;
    }
  }
  if (n_minor == 0 || n_major == 0) return std::nullopt;
  return Vector(minor / static_cast<double>(n_minor) - major / static_cast<double>(n_major));
}

// Fraction of labelled neighbours under `rel` that are minority; nullopt for
// an empty (or fully unlabelled) neighbourhood.
inline std::optional<double> minority_proportion(const HeteroGraph& g, const NodeLabels& labels, NodeRef e,
                                                 std::size_t rel, int minority_label = 1) {
  const std::size_t dst = g.relation(rel).dst_type;
  std::size_t minor = 0, total = 0;
  for (std::size_t v : g.neighbor_rows(e, rel)) {
    const int y = labels.at(dst).at(v);
    if (y < 0) continue;
    ++total;
    minor += y == minority_label;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(minor) / static_cast<double>(total);
}

// Largest singular value by power iteration on W^T W from a fixed-seed start.
inline double spectral_norm(const Matrix& w, std::size_t max_iter = 100, double tol = 1e-10, std::uint64_t seed = 7) {
  if (w.size() == 0) return 0.0;
  Rng rng(seed);
  Vector v(w.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  v.normalize();
  double sigma = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Vector u = w.transpose() * (w * v);
    const double n = u.norm();
    if (n == 0.0) return 0.0;
    v = u / n;
    const double next = (w * v).norm();
    const bool done = std::abs(next - sigma) <= tol * std::max(1.0, next);
    sigma = next;
    if (done) break;
  }
  return sigma;
}

// Linear message-passing stack: X' = X W_self + sum_r mean_{N_r} X W_r, with
// the same weights at every layer. Relations without a weight do not pass
// messages.
struct LinearStack {
  std::vector<std::optional<Matrix>> rel;  // per relation id
  Matrix self;                             // zero for the pure aggregation setting
  bool relu = false;                       // monitoring variant only
};

inline std::vector<Matrix> linear_step(const HeteroGraph& g, const LinearStack& stack, const std::vector<Matrix>& x) {
  std::vector<Matrix> out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    out[t] = x[t] * stack.self;
    for (std::size_t r : g.relations_from(t)) {
      if (!stack.rel.at(r)) continue;
      const std::size_t dst = g.relation(r).dst_type;
      Matrix mean = Matrix::Zero(x[t].rows(), x[t].cols());
      for (Eigen::Index i = 0; i < x[t].rows(); ++i) {
        const auto nb = g.adjacency(r).slice(static_cast<std::size_t>(i));
        if (nb.empty()) continue;
        for (std::size_t v : nb) mean.row(i) += x[dst].row(static_cast<Eigen::Index>(v));
        mean.row(i) /= static_cast<double>(nb.size());
      }
      out[t] += mean * *stack.rel[r];
    }
    if (stack.relu) out[t] = out[t].cwiseMax(0.0);
  }
  return out;
}

struct CollapseCurve {
  std::vector<double> measured;                   // ||Delta^(l)||, l = 0..L (pooled neighbourhood)
  std::vector<double> bound;                      // bound[l] from measured[l-1]; bound[0] = measured[0]
  std::vector<std::vector<double>> per_relation;  // ||Delta_r^(l)||, NaN when undefined
  std::vector<double> proportion;                 // pi_{e,r} per relation, NaN when undefined
  std::vector<double> weight_norm;                // ||W_r|| per relation (0 when absent)
  double self_norm = 0.0;
  double factor = 0.0;  // sum_r pi_r ||W_r|| (+ ||W_self||)
  bool holds = true;

  std::size_t layers() const { return measured.empty() ? 0 : measured.size() - 1; }
};

inline constexpr double kCollapseTolerance = 1e-9;

// Runs the linear stack for `layers` steps and compares the measured pooled
// signal at `probe` against sum_r pi_r ||W_r|| ||Delta^(l-1)||, plus
// ||W_self|| ||Delta^(l-1)|| when the self weight is non-zero. nullopt when
// the probe's neighbourhood lacks one of the classes.
inline std::optional<CollapseCurve> collapse_curve(const HeteroGraph& g, const NodeLabels& labels,
                                                   const LinearStack& stack, std::vector<Matrix> x,
                                                   std::size_t layers, NodeRef probe, int minority_label = 1) {
  if (stack.rel.size() != g.relation_count()) throw std::invalid_argument("collapse_curve: one weight slot per relation");
  std::vector<NodeRef> pooled;
  for (std::size_t r : g.relations_from(probe.type_id))
    for (const NodeRef& v : g.neighbors(probe, r)) pooled.push_back(v);
  if (!minority_signal(x, labels, pooled, minority_label)) return std::nullopt;

  CollapseCurve c;
  const std::size_t R = g.relation_count();
  c.proportion.assign(R, std::nan(""));
  c.weight_norm.assign(R, 0.0);
  c.per_relation.assign(R, {});
  for (std::size_t r : g.relations_from(probe.type_id)) {
    if (auto p = minority_proportion(g, labels, probe, r, minority_label)) c.proportion[r] = *p;
    if (stack.rel[r]) c.weight_norm[r] = spectral_norm(*stack.rel[r]);
    if (stack.rel[r] && !std::isnan(c.proportion[r])) c.factor += c.proportion[r] * c.weight_norm[r];
  }
  c.self_norm = stack.self.size() && !stack.self.isZero(0.0) ? spectral_norm(stack.self) : 0.0;
  c.factor += c.self_norm;

  auto record = [&](const std::vector<Matrix>& reps) {
    c.measured.push_back(minority_signal(reps, labels, pooled, minority_label)->norm());
    for (std::size_t r : g.relations_from(probe.type_id)) {
      const auto nb = g.neighbors(probe, r);
      const auto d = minority_signal(reps, labels, nb, minority_label);
      c.per_relation[r].push_back(d ? d->norm() : std::nan(""));
    }
  };
  record(x);
  c.bound.push_back(c.measured[0]);
  for (std::size_t l = 1; l <= layers; ++l) {
    x = linear_step(g, stack, x);
    record(x);
    c.bound.push_back(c.factor * c.measured[l - 1]);
    if (c.measured[l] > c.bound[l] + kCollapseTolerance) c.holds = false;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Class-regular fixtures: one entity type; each minority node has, per
// relation r, exactly n_r neighbours of which k_r are minority, while majority
// nodes only see majority neighbours. With class-constant inputs the pooled
// signal then follows Delta' = sum_r (k_r / n_r) Delta W_r exactly.

struct RegularFixture {
  HeteroGraph graph;
  NodeLabels labels;
  LinearStack stack;
  std::vector<Matrix> x0;
  NodeRef probe;
};

struct RelationPlan {
  std::size_t fan = 10;       // n_r
  std::size_t minority = 1;   // k_r
};

inline RegularFixture make_regular_fixture(std::size_t n_minor, std::size_t n_major,
                                           const std::vector<RelationPlan>& plan, const std::vector<Matrix>& weights,
                                           const Vector& minor_value, const Vector& major_value, Rng& rng) {
  if (plan.size() != weights.size()) throw std::invalid_argument("make_regular_fixture: one weight per relation");
  if (n_minor == 0 || n_major == 0) throw std::invalid_argument("make_regular_fixture: both classes required");
  const std::size_t n = n_minor + n_major;
  std::vector<EdgeSet> sets;
  for (std::size_t r = 0; r < plan.size(); ++r) {
    if (plan[r].minority > plan[r].fan) throw std::invalid_argument("make_regular_fixture: k_r > n_r");
    EdgeSet es;
    es.src_type = 0;
    es.dst_type = 0;
    es.fk_column = "r" + std::to_string(r);
    for (std::size_t u = 0; u < n; ++u) {
      const bool minor = u < n_minor;
      const std::size_t k = minor ? plan[r].minority : 0;
      for (std::size_t i = 0; i < k; ++i) es.edges.emplace_back(u, static_cast<std::size_t>(rng.below(n_minor)));
      for (std::size_t i = k; i < plan[r].fan; ++i)
        es.edges.emplace_back(u, n_minor + static_cast<std::size_t>(rng.below(n_major)));
    }
    sets.push_back(std::move(es));
  }
  RegularFixture f{HeteroGraph({"entity"}, {n}, sets), {}, {}, {}, NodeRef{0, 0}};
  f.labels.assign(1, std::vector<int>(n, 0));
  for (std::size_t u = 0; u < n_minor; ++u) f.labels[0][u] = 1;
  const Eigen::Index d = minor_value.size();
  f.stack.rel.assign(f.graph.relation_count(), std::nullopt);
  for (std::size_t r = 0; r < f.graph.relation_count(); ++r) {
    const RelationType& rt = f.graph.relation(r);
    if (rt.direction == Direction::Forward) f.stack.rel[r] = weights[r / 2];
  }
  f.stack.self = Matrix::Zero(d, d);
  Matrix x(n, d);
  for (std::size_t u = 0; u < n; ++u) x.row(static_cast<Eigen::Index>(u)) = (u < n_minor ? minor_value : major_value).transpose();
  f.x0 = {x};
  return f;
}

// One relation, d = 1, W = 1; by default each minority node has 1 minority
// and 9 majority neighbours (pi = 0.1) and the initial signal is 1.
inline RegularFixture make_star_fixture(std::size_t fan = 10, std::size_t minority = 1) {
  Rng rng(11);
  Matrix w(1, 1);
  w(0, 0) = 1.0;
  Vector a(1), b(1);
  a[0] = 1.0;
  b[0] = 0.0;
  return make_regular_fixture(4, 40, {RelationPlan{fan, minority}}, {w}, a, b, rng);
}

// Random multi-relation fixture for the bound check.
inline RegularFixture make_random_regular_fixture(Rng& rng) {
  const std::size_t relations = 1 + static_cast<std::size_t>(rng.below(3));
  const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(6));
  std::vector<RelationPlan> plan;
  std::vector<Matrix> weights;
  for (std::size_t r = 0; r < relations; ++r) {
    RelationPlan p;
    p.fan = 2 + static_cast<std::size_t>(rng.below(11));
    p.minority = static_cast<std::size_t>(rng.below(p.fan));
    plan.push_back(p);
    Matrix w(d, d);
    const double s = rng.uniform(0.2, 1.5) / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = s * rng.normal();
    weights.push_back(w);
  }
  if (std::all_of(plan.begin(), plan.end(), [](const RelationPlan& p) { return p.minority == 0; })) plan[0].minority = 1;
  Vector a(d), b(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  const std::size_t n_minor = 3 + static_cast<std::size_t>(rng.below(6));
  const std::size_t n_major = 20 + static_cast<std::size_t>(rng.below(40));
  return make_regular_fixture(n_minor, n_major, plan, weights, a, b, rng);
}

// ---------------------------------------------------------------------------
// Energy distance (V-statistic): 2 E|X-Y| - E|X-X'| - E|Y-Y'|

using PointSet = std::vector<std::vector<double>>;

namespace detail {

inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double mean_cross(const PointSet& a, const PointSet& b) {
  double s = 0.0;
  for (const auto& x : a)
    for (const auto& y : b) s += euclid(x, y);
  return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

inline double mean_within(const PointSet& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) s += euclid(a[i], a[j]);
  return 2.0 * s / (static_cast<double>(a.size()) * static_cast<double>(a.size()));
}

}  // namespace detail

inline double energy_distance(const PointSet& a, const PointSet& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("energy_distance: both sets must be non-empty");
  const std::size_t w = a.front().size();
  for (const auto& p : a)
    if (p.size() != w) throw std::invalid_argument("energy_distance: ragged point set");
  for (const auto& p : b)
    if (p.size() != w) throw std::invalid_argument("energy_distance: ragged point set");
  const double e = 2.0 * detail::mean_cross(a, b) - detail::mean_within(a) - detail::mean_within(b);
  return std::max(0.0, e);
}

inline double consistency_shift(const PointSet& true_minor, const PointSet& synthetic) {
  return energy_distance(true_minor, synthetic);
}

struct PermutationResult {
  double observed = 0.0;
  double p_value = 1.0;
  double quantile95 = 0.0;
  std::vector<double> null;
};

// Permutation null of the energy distance: pooled points are reshuffled into
// groups of the original sizes.
inline PermutationResult energy_permutation_test(const PointSet& a, const PointSet& b, std::size_t permutations,
                                                 Rng& rng) {
  PermutationResult res;
  res.observed = energy_distance(a, b);
  PointSet pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::size_t at_least = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    rng.shuffle(pooled);
    PointSet x(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(a.size()));
    PointSet y(pooled.begin() + static_cast<std::ptrdiff_t>(a.size()), pooled.end());
    const double e = energy_distance(x, y);
    res.null.push_back(e);
    at_least += e >= res.observed;
  }
  res.p_value = (1.0 + static_cast<double>(at_least)) / (1.0 + static_cast<double>(permutations));
  std::vector<double> sorted = res.null;
  std::sort(sorted.begin(), sorted.end());
  if (!sorted.empty()) res.quantile95 = sorted[static_cast<std::size_t>(0.95 * static_cast<double>(sorted.size() - 1))];
  return res;
}

}  // namespace relmoss
