// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic star-schema databases (users <- interactions -> items) whose user
// labels are planted in relational structure. User and interaction
// attributes are pure noise, so any classifier beating chance must read the
// graph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "relmoss/dataset.hpp"
#include "relmoss/rdb.hpp"
#include "relmoss/rng.hpp"
#include "relmoss/train_config.hpp"

namespace relmoss {

enum class PatternKind {
  DistinctRareItems,  // minority iff the user reaches >= threshold distinct items of the rare category
  FanOut,             // minority iff the user has >= threshold interactions
};

struct SynthConfig {
  std::size_t n_users = 2000;
  std::size_t n_items = 400;
  std::size_t n_rare_items = 40;
  std::size_t n_categories = 5;  // common categories besides the rare one
  std::size_t n_countries = 6;
  double imbalance_ratio = 10.0;
  PatternKind pattern = PatternKind::DistinctRareItems;
  std::size_t threshold = 2;
  double near_miss_rate = 0.4;  // share of majority users with minority-like rare volume but too few distinct rare items
  std::size_t degree_min = 6;
  std::size_t degree_max = 60;
  double degree_exponent = 1.8;
  double link_rate_min = 0.5;  // per-user chance that a common interaction keeps its item reference
  double link_rate_max = 1.0;
  double feature_noise = 0.0;  // spread of age and rating; 0 keeps them constant
  double label_noise = 0.0;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(imbalance_ratio >= 1.0)) throw ConfigError("imbalance_ratio must be >= 1");
    if (n_users < 2) throw ConfigError("n_users must be >= 2");
    if (n_rare_items == 0 || n_rare_items >= n_items) throw ConfigError("n_rare_items must be in [1, n_items)");
    if (n_categories == 0 || n_countries == 0) throw ConfigError("category counts must be positive");
    if (threshold == 0) throw ConfigError("threshold must be >= 1");
    if (pattern == PatternKind::DistinctRareItems && threshold > n_rare_items) {
      throw ConfigError("threshold exceeds the number of rare items");
    }
    if (degree_min == 0 || degree_max < degree_min) throw ConfigError("degree range invalid");
    if (pattern == PatternKind::FanOut && (threshold <= degree_min || threshold > degree_max)) {
      throw ConfigError("fan_out threshold must lie in (degree_min, degree_max]");
    }
    if (!(degree_exponent >= 0.0)) throw ConfigError("degree_exponent must be >= 0");
    if (!(near_miss_rate >= 0.0 && near_miss_rate <= 1.0)) throw ConfigError("near_miss_rate must be in [0,1]");
    if (!(link_rate_min >= 0.0 && link_rate_min <= link_rate_max && link_rate_max <= 1.0)) {
      throw ConfigError("link rates must satisfy 0 <= min <= max <= 1");
    }
    if (!(feature_noise >= 0.0)) throw ConfigError("feature_noise must be >= 0");
    if (!(label_noise >= 0.0 && label_noise <= 0.5)) throw ConfigError("label_noise must be in [0, 0.5]");
    for (double f : {train_fraction, val_fraction, test_fraction})
      if (!(f >= 0.0)) throw ConfigError("split fractions must be >= 0");
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
      throw ConfigError("split fractions must sum to 1");
    }
  }
};

inline std::string to_string(PatternKind k) {
  return k == PatternKind::DistinctRareItems ? "distinct_rare_items" : "fan_out";
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "n_users",        "n_items",         "n_rare_items",   "n_categories",  "n_countries",
      "imbalance_ratio", "pattern",        "threshold",      "near_miss_rate", "degree_min",
      "degree_max",     "degree_exponent", "link_rate_min",  "link_rate_max", "feature_noise",
      "label_noise",    "train_fraction",  "val_fraction",   "test_fraction", "seed"};
  detail::reject_unknown(j, known, "synth config");
  SynthConfig c;
  detail::read_field(j, "n_users", c.n_users);
  detail::read_field(j, "n_items", c.n_items);
  detail::read_field(j, "n_rare_items", c.n_rare_items);
  detail::read_field(j, "n_categories", c.n_categories);
  detail::read_field(j, "n_countries", c.n_countries);
  detail::read_field(j, "imbalance_ratio", c.imbalance_ratio);
  if (j.contains("pattern")) {
    std::string p;
    detail::read_field(j, "pattern", p);
    if (p == "distinct_rare_items") c.pattern = PatternKind::DistinctRareItems;
    else if (p == "fan_out") c.pattern = PatternKind::FanOut;
    else throw ConfigError("pattern must be 'distinct_rare_items' or 'fan_out'");
  }
  detail::read_field(j, "threshold", c.threshold);
  detail::read_field(j, "near_miss_rate", c.near_miss_rate);
  detail::read_field(j, "degree_min", c.degree_min);
  detail::read_field(j, "degree_max", c.degree_max);
  detail::read_field(j, "degree_exponent", c.degree_exponent);
  detail::read_field(j, "link_rate_min", c.link_rate_min);
  detail::read_field(j, "link_rate_max", c.link_rate_max);
  detail::read_field(j, "feature_noise", c.feature_noise);
  detail::read_field(j, "label_noise", c.label_noise);
  detail::read_field(j, "train_fraction", c.train_fraction);
  detail::read_field(j, "val_fraction", c.val_fraction);
  detail::read_field(j, "test_fraction", c.test_fraction);
  detail::read_field(j, "seed", c.seed);
  c.validate();
  return c;
}

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["n_users"] = c.n_users;
  j["n_items"] = c.n_items;
  j["n_rare_items"] = c.n_rare_items;
  j["n_categories"] = c.n_categories;
  j["n_countries"] = c.n_countries;
  j["imbalance_ratio"] = c.imbalance_ratio;
  j["pattern"] = to_string(c.pattern);
  j["threshold"] = c.threshold;
  j["near_miss_rate"] = c.near_miss_rate;
  j["degree_min"] = c.degree_min;
  j["degree_max"] = c.degree_max;
  j["degree_exponent"] = c.degree_exponent;
  j["link_rate_min"] = c.link_rate_min;
  j["link_rate_max"] = c.link_rate_max;
  j["feature_noise"] = c.feature_noise;
  j["label_noise"] = c.label_noise;
  j["train_fraction"] = c.train_fraction;
  j["val_fraction"] = c.val_fraction;
  j["test_fraction"] = c.test_fraction;
  j["seed"] = c.seed;
  return j;
}

struct PlannedCounts {
  std::size_t minority = 0;
  std::size_t majority = 0;
  double ratio = 0.0;
};

// Minority count round(N / (1 + rho)); errors when the achieved ratio falls
// outside +-10% of the request.
inline PlannedCounts planned_counts(const SynthConfig& cfg) {
  PlannedCounts p;
  p.minority = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n_users) / (1.0 + cfg.imbalance_ratio)));
  p.majority = cfg.n_users - std::min(p.minority, cfg.n_users);
  if (p.minority == 0 || p.majority == 0) {
    throw ConfigError("imbalance_ratio " + std::to_string(cfg.imbalance_ratio) + " is infeasible for " +
                      std::to_string(cfg.n_users) + " users");
  }
  const std::size_t lo = std::min(p.minority, p.majority), hi = std::max(p.minority, p.majority);
  p.ratio = static_cast<double>(hi) / static_cast<double>(lo);
  if (std::abs(p.ratio - cfg.imbalance_ratio) > 0.1 * cfg.imbalance_ratio) {
    throw ConfigError("imbalance_ratio " + std::to_string(cfg.imbalance_ratio) + " is infeasible for " +
                      std::to_string(cfg.n_users) + " users");
  }
  return p;
}

inline std::string describe(const SynthConfig& cfg) {
  const PlannedCounts p = planned_counts(cfg);
  std::ostringstream os;
  os << "tables: users (" << cfg.n_users << "), items (" << cfg.n_items << ", " << cfg.n_rare_items
     << " in the rare category), interactions\n";
  os << "relations: 2 foreign keys (interactions.user_id -> users, interactions.item_id -> items, nullable)\n";
  os << "imbalance ratio: " << cfg.imbalance_ratio << " requested, " << p.ratio << " planned (" << p.minority
     << " minority / " << p.majority << " majority)";
  if (cfg.imbalance_ratio == 1.0) os << " [balanced]";
  os << '\n';
  if (cfg.pattern == PatternKind::DistinctRareItems) {
    os << "pattern: minority iff a user's interactions reach >= " << cfg.threshold << " distinct rare-category items\n";
  } else {
    os << "pattern: minority iff a user has >= " << cfg.threshold << " interactions\n";
  }
  os << "label noise: " << cfg.label_noise << ", seed: " << cfg.seed << '\n';
  return os.str();
}

struct SynthDataset {
  RelationalDatabase db;
  std::size_t target = 0;  // users
  TaskLabels labels;
  std::vector<int> planted;  // pattern membership before label noise
};

namespace detail {

// Discrete truncated power law P(k) ~ k^-a on [lo, hi].
class PowerLaw {
 public:
  PowerLaw(std::size_t lo, std::size_t hi, double a) : lo_(lo) {
    double acc = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      acc += std::pow(static_cast<double>(k), -a);
      cdf_.push_back(acc);
    }
    for (double& c : cdf_) c /= acc;
  }
  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return lo_ + static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), cdf_.size() - 1));
  }

 private:
  std::size_t lo_;
  std::vector<double> cdf_;
};

inline std::vector<std::size_t> distinct_sample(Rng& rng, std::size_t pool, std::size_t k) {
  std::vector<std::size_t> idx(pool);
  for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(pool - i))]);
  idx.resize(k);
  return idx;
}

}  // namespace detail

inline std::vector<TableSchema> synth_schemas() {
  using M = Modality;
  return {
      {"users", "users.csv",
       {{"user_id", M::PrimaryKey, {}}, {"age", M::Numeric, {}}, {"country", M::Categorical, {}},
        {"signup", M::Timestamp, {}}}},
      {"items", "items.csv",
       {{"item_id", M::PrimaryKey, {}}, {"category", M::Categorical, {}}, {"price", M::Numeric, {}}}},
      {"interactions", "interactions.csv",
       {{"interaction_id", M::PrimaryKey, {}}, {"user_id", M::ForeignKey, "users"},
        {"item_id", M::ForeignKey, "items"}, {"rating", M::Numeric, {}}, {"ts", M::Timestamp, {}}}},
  };
}

inline constexpr const char* kRareCategory = "rare";

inline SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const PlannedCounts plan = planned_counts(cfg);
  Rng rng(cfg.seed);
  Rng role_rng = rng.split(), item_rng = rng.split(), user_rng = rng.split(), edge_rng = rng.split(),
      noise_rng = rng.split(), split_rng = rng.split();

  SynthDataset out;
  out.db.schemas = synth_schemas();
  out.db.links = derive_links(out.db.schemas);
  out.db.rows.resize(3);
  out.target = 0;
  const std::int64_t t0 = 1'600'000'000;
  const std::int64_t span = 3 * 365 * 86'400;

  // Items: the first n_rare_items carry the rare category.
  const std::size_t n_common = cfg.n_items - cfg.n_rare_items;
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    const std::string cat =
        i < cfg.n_rare_items ? kRareCategory : "c" + std::to_string(item_rng.below(cfg.n_categories));
    out.db.rows[1].push_back(RawEntity{{Cell{"i" + std::to_string(i)}, Cell{cat},
                                        Cell{std::round(std::exp(item_rng.normal(3.0, 0.5)) * 100.0) / 100.0}}});
  }

  // Users: attributes are noise.
  std::vector<bool> minority(cfg.n_users, false);
  {
    std::vector<std::size_t> ids(cfg.n_users);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    role_rng.shuffle(ids);
    for (std::size_t i = 0; i < plan.minority; ++i) minority[ids[i]] = true;
  }
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const double age = std::round((40.0 + 12.0 * cfg.feature_noise * user_rng.normal()) * 10.0) / 10.0;
    out.db.rows[0].push_back(RawEntity{{Cell{"u" + std::to_string(u)}, Cell{age},
                                        Cell{"k" + std::to_string(user_rng.below(cfg.n_countries))},
                                        Cell{t0 + static_cast<std::int64_t>(user_rng.below(span))}}});
  }

  // Interactions.
  const detail::PowerLaw degree(cfg.degree_min, cfg.degree_max, cfg.degree_exponent);
  std::size_t next_id = 0;
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const double link_rate = edge_rng.uniform(cfg.link_rate_min, cfg.link_rate_max);
    std::vector<std::optional<std::size_t>> targets;
    if (cfg.pattern == PatternKind::DistinctRareItems) {
      // Minority and near-miss users share one rare-interaction volume
      // distribution; only the number of distinct rare items differs.
      std::size_t distinct = 0, volume = 0;
      const bool near_miss = !minority[u] && edge_rng.bernoulli(cfg.near_miss_rate);
      if (minority[u] || near_miss) {
        const std::size_t base = cfg.threshold + (edge_rng.bernoulli(0.3) && cfg.threshold < cfg.n_rare_items ? 1 : 0);
        volume = base + static_cast<std::size_t>(edge_rng.below(base + 1));
        distinct = minority[u] ? base : cfg.threshold - 1;
      }
      const auto rare = detail::distinct_sample(edge_rng, cfg.n_rare_items, distinct);
      for (std::size_t r : rare) targets.emplace_back(r);
      if (!rare.empty())
        while (targets.size() < volume) targets.emplace_back(rare[edge_rng.below(rare.size())]);
      const std::size_t deg = std::max(degree.draw(edge_rng), targets.size());
      while (targets.size() < deg) {
        if (edge_rng.bernoulli(link_rate)) targets.emplace_back(cfg.n_rare_items + edge_rng.below(n_common));
        else targets.emplace_back(std::nullopt);
      }
    } else {
      std::size_t deg = degree.draw(edge_rng);
      if (minority[u] && deg < cfg.threshold) deg = cfg.threshold + static_cast<std::size_t>(edge_rng.below(cfg.degree_max - cfg.threshold + 1));
      if (!minority[u] && deg >= cfg.threshold) deg = cfg.degree_min + static_cast<std::size_t>(edge_rng.below(cfg.threshold - cfg.degree_min));
      for (std::size_t i = 0; i < deg; ++i) {
        if (edge_rng.bernoulli(link_rate)) targets.emplace_back(edge_rng.below(cfg.n_items));
        else targets.emplace_back(std::nullopt);
      }
    }
    edge_rng.shuffle(targets);
    for (const auto& it : targets) {
      const double rating = std::round((3.0 + cfg.feature_noise * noise_rng.normal()) * 10.0) / 10.0;
      out.db.rows[2].push_back(RawEntity{{Cell{"x" + std::to_string(next_id++)}, Cell{"u" + std::to_string(u)},
                                          it ? Cell{"i" + std::to_string(*it)} : Cell{},
                                          Cell{rating}, Cell{t0 + static_cast<std::int64_t>(noise_rng.below(span))}}});
    }
  }
  // Interactions are listed in a random order, not grouped by user.
  edge_rng.shuffle(out.db.rows[2]);
  out.db.index_keys();

  out.planted.assign(cfg.n_users, 0);
  for (std::size_t u = 0; u < cfg.n_users; ++u) out.planted[u] = minority[u] ? 1 : 0;
  out.labels.label = out.planted;
  for (int& y : out.labels.label)
    if (cfg.label_noise > 0.0 && noise_rng.bernoulli(cfg.label_noise)) y = 1 - y;

  // Stratified split on the planted role.
  out.labels.split.assign(cfg.n_users, Split::Train);
  for (int cls : {1, 0}) {
    std::vector<std::size_t> ids;
    for (std::size_t u = 0; u < cfg.n_users; ++u)
      if (out.planted[u] == cls) ids.push_back(u);
    split_rng.shuffle(ids);
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(ids.size())));
    const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(ids.size())));
    for (std::size_t i = 0; i < ids.size(); ++i)
      out.labels.split[ids[i]] = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
  }
  return out;
}

// Writes manifest.json, one CSV per table, labels.csv and provenance.json.
inline void write_dataset(const SynthDataset& ds, const SynthConfig& cfg, const std::filesystem::path& dir) {
  save_database(ds.db, dir, "manifest.json");
  write_labels_csv(dir / "labels.csv", ds.db, ds.target, ds.labels);
  nlohmann::ordered_json prov;
  prov["generator"] = "relmoss-synthgen";
  prov["version"] = 1;
  prov["config"] = to_json(cfg);
  prov["seed"] = cfg.seed;
  prov["target_table"] = ds.db.schemas[ds.target].name;
  std::ofstream out(dir / "provenance.json");
  if (!out) throw RdbError("cannot write provenance in " + dir.string());
  out << prov.dump(2) << '\n';
}

}  // namespace relmoss
