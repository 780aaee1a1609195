// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "relmoss/run_config.hpp"

using namespace relmoss;
using nlohmann::json;
namespace fs = std::filesystem;

TEST(RunConfig, DefaultsWhenSectionsAreMissing) {
  const RunConfig rc = run_config_from_json(json::object());
  EXPECT_FALSE(rc.has_dataset());
  EXPECT_EQ(rc.collapse.fixture, "star");
  EXPECT_EQ(rc.collapse.layers, 4u);
  EXPECT_EQ(rc.ablate.seeds, std::vector<std::uint64_t>{0});
  EXPECT_EQ(rc.train.dim, 128u);
}

TEST(RunConfig, RelativePathsFollowTheConfigFile) {
  const RunConfig rc = run_config_from_json(
      json::parse(R"({"output_dir": "out", "data": {"manifest": "d/manifest.json", "labels": "/abs/labels.csv"}})"),
      "/cfg");
  EXPECT_EQ(rc.output_dir, fs::path("/cfg/out"));
  EXPECT_EQ(rc.data->manifest, fs::path("/cfg/d/manifest.json"));
  EXPECT_EQ(rc.data->labels, fs::path("/abs/labels.csv"));
  EXPECT_EQ(rc.data->target_table, "users");
}

TEST(RunConfig, RejectsUnknownKeysAtEveryLevel) {
  for (const char* bad : {R"({"outdir": "x"})", R"({"train": {"epoch": 3}})", R"({"synth": {"users": 3}})",
                          R"({"diagnose": {"collapse": {"layer": 2}}})", R"({"diagnose": {"consistency": {"perms": 2}}})",
                          R"({"ablate": {"seed": [1]}})", R"({"data": {"manifest": "m", "labels": "l", "x": 1}})"})
    EXPECT_THROW(run_config_from_json(json::parse(bad)), ConfigError) << bad;
}

TEST(RunConfig, RejectsInvalidValues) {
  for (const char* bad : {R"([])", R"({"train": []})", R"({"data": {"manifest": "m"}})",
                          R"({"synth": {}, "data": {"manifest": "m", "labels": "l"}})",
                          R"({"diagnose": {"collapse": {"fixture": "ring"}}})",
                          R"({"diagnose": {"collapse": {"layers": 0}}})",
                          R"({"diagnose": {"collapse": {"fan": 3, "minority": 4}}})", R"({"ablate": {"seeds": []}})",
                          R"({"train": {"gamma": -1}})", R"({"train": {"dim": "big"}})"})
    EXPECT_THROW(run_config_from_json(json::parse(bad)), ConfigError) << bad;
}

TEST(RunConfig, ResolvedConfigRoundTrips) {
  const json in = json::parse(R"({
    "output_dir": "/tmp/o",
    "synth": {"n_users": 50, "imbalance_ratio": 4},
    "train": {"epochs": 2, "omega": 3.5, "eval_fanout": "unlimited"},
    "diagnose": {"collapse": {"fixture": "random", "fixtures": 7}, "consistency": {"permutations": 9}},
    "ablate": {"seeds": [1, 2]}
  })");
  const RunConfig rc = run_config_from_json(in);
  const RunConfig back = run_config_from_json(json::parse(to_json(rc).dump()));
  EXPECT_EQ(to_json(back), to_json(rc));
  EXPECT_EQ(back.collapse.fixtures, 7u);
  EXPECT_EQ(back.ablate.seeds, (std::vector<std::uint64_t>{1, 2}));
}

TEST(RunConfig, SynthSectionBuildsDataset) {
  const RunConfig rc =
      run_config_from_json(json::parse(R"({"synth": {"n_users": 60, "n_items": 20, "n_rare_items": 4, "imbalance_ratio": 3}})"));
  const Dataset ds = load_run_dataset(rc);
  EXPECT_EQ(ds.db.rows[ds.target].size(), 60u);
  EXPECT_THROW(load_run_dataset(RunConfig{}), ConfigError);
}
