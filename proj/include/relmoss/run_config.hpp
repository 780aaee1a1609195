// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration shared by the command-line tool: where the data
// comes from, how to train, and command-specific options. Parsed strictly;
// every unknown key is an error.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "relmoss/dataset.hpp"
#include "relmoss/synthgen.hpp"
#include "relmoss/train_config.hpp"

namespace relmoss {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kRunFormatVersion = 1;

struct DataPaths {
  std::filesystem::path manifest;
  std::filesystem::path labels;
  std::string target_table = "users";
};

struct CollapseOptions {
  std::string fixture = "star";  // "star" or "random"
  std::size_t layers = 4;
  std::size_t fixtures = 100;  // random fixtures only
  std::size_t fan = 10;        // star only
  std::size_t minority = 1;    // star only
  std::uint64_t seed = 0;
};

struct ConsistencyOptions {
  std::size_t permutations = 199;
  std::size_t max_points = 400;
};

struct AblateOptions {
  std::vector<std::uint64_t> seeds{0};
};

struct RunConfig {
  std::filesystem::path output_dir = "relmoss_out";
  std::optional<SynthConfig> synth;
  std::optional<DataPaths> data;
  TrainConfig train;
  CollapseOptions collapse;
  ConsistencyOptions consistency;
  AblateOptions ablate;

  bool has_dataset() const { return synth.has_value() || data.has_value(); }
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline CollapseOptions collapse_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"fixture", "layers", "fixtures", "fan", "minority", "seed"}, "diagnose.collapse");
  CollapseOptions c;
  read_field(j, "fixture", c.fixture);
  read_field(j, "layers", c.layers);
  read_field(j, "fixtures", c.fixtures);
  read_field(j, "fan", c.fan);
  read_field(j, "minority", c.minority);
  read_field(j, "seed", c.seed);
  if (c.fixture != "star" && c.fixture != "random") throw ConfigError("diagnose.collapse.fixture must be 'star' or 'random'");
  if (c.layers == 0) throw ConfigError("diagnose.collapse.layers must be >= 1");
  if (c.fan == 0 || c.minority > c.fan) throw ConfigError("diagnose.collapse needs 0 <= minority <= fan, fan >= 1");
  if (c.fixture == "random" && c.fixtures == 0) throw ConfigError("diagnose.collapse.fixtures must be >= 1");
  return c;
}

}  // namespace detail

// `base_dir` anchors relative paths (normally the config file's directory).
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  detail::reject_unknown(j, {"output_dir", "synth", "data", "train", "diagnose", "ablate"}, "run config");
  RunConfig rc;
  if (j.contains("output_dir")) {
    std::string s;
    detail::read_field(j, "output_dir", s);
    rc.output_dir = detail::resolve(base_dir, s);
  }
  if (j.contains("synth")) rc.synth = synth_config_from_json(j.at("synth"));
  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (!d.is_object()) throw ConfigError("data must be an object");
    detail::reject_unknown(d, {"manifest", "labels", "target_table"}, "data");
    if (!d.contains("manifest") || !d.contains("labels")) throw ConfigError("data needs 'manifest' and 'labels'");
    DataPaths p;
    std::string s;
    detail::read_field(d, "manifest", s);
    p.manifest = detail::resolve(base_dir, s);
    detail::read_field(d, "labels", s);
    p.labels = detail::resolve(base_dir, s);
    detail::read_field(d, "target_table", p.target_table);
    rc.data = p;
  }
  if (rc.synth && rc.data) throw ConfigError("give either 'synth' or 'data', not both");
  if (j.contains("train")) {
    if (!j.at("train").is_object()) throw ConfigError("train must be an object");
    rc.train = train_config_from_json(j.at("train"));
  }
  if (j.contains("diagnose")) {
    const auto& d = j.at("diagnose");
    if (!d.is_object()) throw ConfigError("diagnose must be an object");
    detail::reject_unknown(d, {"collapse", "consistency"}, "diagnose");
    if (d.contains("collapse")) rc.collapse = detail::collapse_from_json(d.at("collapse"));
    if (d.contains("consistency")) {
      const auto& c = d.at("consistency");
      detail::reject_unknown(c, {"permutations", "max_points"}, "diagnose.consistency");
      detail::read_field(c, "permutations", rc.consistency.permutations);
      detail::read_field(c, "max_points", rc.consistency.max_points);
      if (rc.consistency.max_points < 2) throw ConfigError("diagnose.consistency.max_points must be >= 2");
    }
  }
  if (j.contains("ablate")) {
    const auto& a = j.at("ablate");
    detail::reject_unknown(a, {"seeds"}, "ablate");
    detail::read_field(a, "seeds", rc.ablate.seeds);
    if (rc.ablate.seeds.empty()) throw ConfigError("ablate.seeds must not be empty");
  }
  return rc;
}

inline nlohmann::ordered_json to_json(const RunConfig& rc) {
  nlohmann::ordered_json j;
  j["output_dir"] = rc.output_dir.string();
  if (rc.synth) j["synth"] = to_json(*rc.synth);
  if (rc.data) {
    j["data"] = {{"manifest", rc.data->manifest.string()},
                 {"labels", rc.data->labels.string()},
                 {"target_table", rc.data->target_table}};
  }
  j["train"] = to_json(rc.train);
  const auto& c = rc.collapse;
  j["diagnose"]["collapse"] = {{"fixture", c.fixture}, {"layers", c.layers}, {"fixtures", c.fixtures},
                               {"fan", c.fan},         {"minority", c.minority}, {"seed", c.seed}};
  j["diagnose"]["consistency"] = {{"permutations", rc.consistency.permutations},
                                  {"max_points", rc.consistency.max_points}};
  j["ablate"]["seeds"] = rc.ablate.seeds;
  return j;
}

inline Dataset load_run_dataset(const RunConfig& rc) {
  if (rc.synth) {
    SynthDataset sd = generate(*rc.synth);
    return Dataset(std::move(sd.db), sd.target, std::move(sd.labels));
  }
  if (!rc.data) throw ConfigError("config names no dataset ('synth' or 'data')");
  RelationalDatabase db = load_database(rc.data->manifest, rc.data->manifest.parent_path());
  const std::size_t target = db.table_index(rc.data->target_table);
  TaskLabels labels = read_labels_csv(rc.data->labels, db, target);
  return Dataset(std::move(db), target, std::move(labels));
}

}  // namespace relmoss
