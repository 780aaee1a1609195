// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "relmoss/encode.hpp"
#include "support.hpp"

using namespace relmoss;

namespace {

TableSchema mixed_schema() {
  return {"t", "t.csv",
          {{"id", Modality::PrimaryKey, std::nullopt},
           {"n1", Modality::Numeric, std::nullopt},
           {"n2", Modality::Numeric, std::nullopt},
           {"cat", Modality::Categorical, std::nullopt},
           {"ts", Modality::Timestamp, std::nullopt}}};
}

RawEntity row(std::string id, Cell n1, Cell n2, Cell cat, Cell ts) {
  return RawEntity{{Cell{std::move(id)}, std::move(n1), std::move(n2), std::move(cat), std::move(ts)}};
}

}  // namespace

TEST(FitStatistics, ConstantColumnGetsUnitStd) {
  const TableSchema s = mixed_schema();
  const std::vector<RawEntity> rows{row("a", Cell{5.0}, Cell{1.0}, Cell{"x"}, Cell{std::int64_t{0}}),
                                    row("b", Cell{5.0}, Cell{3.0}, Cell{"y"}, Cell{std::int64_t{10}})};
  const TableFeatureSpec spec = fit_table_statistics(s, rows, {true, true});
  EXPECT_DOUBLE_EQ(spec.columns[0].numeric.mean, 5.0);
  EXPECT_DOUBLE_EQ(spec.columns[0].numeric.std, 1.0);
  EXPECT_DOUBLE_EQ(spec.columns[1].numeric.std, 1.0);  // population std of {1, 3}
  EXPECT_DOUBLE_EQ(spec.columns[1].numeric.mean, 2.0);
}

TEST(FitStatistics, TwoPassOracleOnRandomColumn) {
  Rng rng(4);
  const TableSchema s = mixed_schema();
  std::vector<RawEntity> rows;
  std::vector<bool> mask;
  for (int i = 0; i < 300; ++i) {
    rows.push_back(row("r" + std::to_string(i), rng.bernoulli(0.2) ? Cell{} : Cell{rng.normal(3.0, 2.0)}, Cell{1.0},
                       Cell{"c"}, Cell{std::int64_t{i}}));
    mask.push_back(rng.bernoulli(0.6));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (mask[i] && !is_null(rows[i].cells[1])) sum += std::get<double>(rows[i].cells[1]), ++n;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (mask[i] && !is_null(rows[i].cells[1])) ss += std::pow(std::get<double>(rows[i].cells[1]) - mean, 2);
  const TableFeatureSpec spec = fit_table_statistics(s, rows, mask);
  EXPECT_NEAR(spec.columns[0].numeric.mean, mean, 1e-12);
  EXPECT_NEAR(spec.columns[0].numeric.std, std::sqrt(ss / static_cast<double>(n)), 1e-12);
}

TEST(FitStatistics, OnlyTrainRowsMatter) {
  const TableSchema s = mixed_schema();
  std::vector<RawEntity> rows{row("a", Cell{1.0}, Cell{1.0}, Cell{"a"}, Cell{std::int64_t{5}}),
                              row("b", Cell{2.0}, Cell{1.0}, Cell{"b"}, Cell{std::int64_t{6}}),
                              row("c", Cell{100.0}, Cell{1.0}, Cell{"c"}, Cell{std::int64_t{999}})};
  const std::vector<bool> mask{true, true, false};
  const TableFeatureSpec a = fit_table_statistics(s, rows, mask);
  rows[2] = row("c", Cell{-50.0}, Cell{7.0}, Cell{"z"}, Cell{std::int64_t{-3}});
  const TableFeatureSpec b = fit_table_statistics(s, rows, mask);
  EXPECT_EQ(feature_spec_json(a), feature_spec_json(b));
  EXPECT_EQ(a.columns[2].vocab.tokens, (std::vector<std::string>{"a", "b"}));
  // Unseen category maps to the dedicated OOV row.
  const EntityFeatures f = featurize(a, rows[2]);
  EXPECT_EQ(f.categories[0], a.columns[2].vocab.oov());
  EXPECT_EQ(a.columns[2].vocab.rows(), 3u);
}

TEST(FitStatistics, EmptyFitFlagged) {
  const TableSchema s = mixed_schema();
  const std::vector<RawEntity> rows{row("a", Cell{1.0}, Cell{1.0}, Cell{"a"}, Cell{std::int64_t{5}})};
  const TableFeatureSpec spec = fit_table_statistics(s, rows, {false});
  EXPECT_TRUE(spec.empty_fit);
  EXPECT_DOUBLE_EQ(spec.columns[0].numeric.mean, 0.0);
  EXPECT_DOUBLE_EQ(spec.columns[0].numeric.std, 1.0);
}

TEST(Featurize, ChannelsAndImputation) {
  const TableSchema s = mixed_schema();
  const std::vector<RawEntity> rows{row("a", Cell{2.0}, Cell{1.0}, Cell{"a"}, Cell{std::int64_t{0}}),
                                    row("b", Cell{4.0}, Cell{3.0}, Cell{"b"}, Cell{std::int64_t{86400 * 10}})};
  const TableFeatureSpec spec = fit_table_statistics(s, rows, {true, true});
  EXPECT_EQ(spec.dense_width(), 2u + 2u + 3u);
  EXPECT_EQ(spec.concat_width(16), 7u + 16u);

  const EntityFeatures at_mean = featurize(spec, row("m", Cell{3.0}, Cell{2.0}, Cell{"a"}, Cell{std::int64_t{0}}));
  EXPECT_DOUBLE_EQ(at_mean.dense[0], 0.0);
  EXPECT_DOUBLE_EQ(at_mean.dense[1], 0.0);
  EXPECT_DOUBLE_EQ(at_mean.dense[4], 0.0);  // min-max scaled
  // 1970-01-01 was a Thursday (day index 4).
  EXPECT_NEAR(at_mean.dense[5], std::sin(2.0 * std::numbers::pi * 4.0 / 7.0), 1e-12);

  const EntityFeatures null_row = featurize(spec, row("n", Cell{}, Cell{}, Cell{}, Cell{}));
  EXPECT_EQ(null_row.dense, (std::vector<double>{0.0, 1.0, 0.0, 1.0, 0.5, 0.0, 0.0}));
  EXPECT_EQ(null_row.categories[0], spec.columns[2].vocab.oov());
}

TEST(Featurize, ModalityMismatchThrows) {
  const TableSchema s = mixed_schema();
  const std::vector<RawEntity> rows{row("a", Cell{2.0}, Cell{1.0}, Cell{"a"}, Cell{std::int64_t{0}})};
  const TableFeatureSpec spec = fit_table_statistics(s, rows, {true});
  EXPECT_THROW(featurize(spec, row("x", Cell{"text"}, Cell{1.0}, Cell{"a"}, Cell{std::int64_t{0}})), EncodeError);
  EXPECT_THROW(featurize(spec, row("x", Cell{1.0}, Cell{1.0}, Cell{2.0}, Cell{std::int64_t{0}})), EncodeError);
  EXPECT_THROW(featurize(spec, row("x", Cell{1.0}, Cell{1.0}, Cell{"a"}, Cell{1.5})), EncodeError);
}

TEST(Featurize, DayOfWeekHandlesNegativeTimes) {
  EXPECT_DOUBLE_EQ(day_of_week(0), 4.0);
  EXPECT_DOUBLE_EQ(day_of_week(-1), 3.0);
  EXPECT_DOUBLE_EQ(day_of_week(86400 * 3), 0.0);
}

TEST(Encoder, OutputWidthIsDimForEveryTable) {
  Rng rng(3);
  const RelationalDatabase db = relmoss::testing::micro_database();
  const auto specs = fit_statistics(db, {});
  for (std::size_t depth : {1u, 3u}) {
    ParameterStore ps;
    for (std::size_t t = 0; t < db.table_count(); ++t) {
      const TableEncoder enc = make_table_encoder(ps, specs[t], 4, 12, rng, depth);
      Tape tape;
      const Var x = encode_entities(tape, enc, db.rows[t]);
      EXPECT_EQ(x.rows(), db.rows[t].size());
      EXPECT_EQ(x.cols(), 12u);
      for (double v : x.value().values) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Encoder, FeaturelessTableUsesBiasOnly) {
  const TableSchema s{"bare", "bare.csv", {{"id", Modality::PrimaryKey, std::nullopt}}};
  const std::vector<RawEntity> rows{RawEntity{{Cell{"a"}}}, RawEntity{{Cell{"b"}}}};
  ParameterStore ps;
  Rng rng(1);
  const TableEncoder enc = make_table_encoder(ps, fit_table_statistics(s, rows, {true, true}), 4, 3, rng);
  enc.proj_b->values = {0.5, -1.0, 2.0};
  Tape tape;
  const Tensor& out = encode_entities(tape, enc, rows).value();
  EXPECT_EQ(out.values, (std::vector<double>{0.5, 0.0, 2.0, 0.5, 0.0, 2.0}));
}

TEST(Encoder, GradientReachesEmbeddingsAndProjection) {
  Rng rng(3);
  const RelationalDatabase db = relmoss::testing::micro_database();
  const auto specs = fit_statistics(db, {});
  ParameterStore ps;
  const TableEncoder enc = make_table_encoder(ps, specs[1], 3, 5, rng, 2);
  const auto rep = relmoss::testing::check_gradients(
      ps.entries(),
      [&] {
        Tape tape;
        return sum(encode_entities(tape, enc, db.rows[1])).value().values[0];
      },
      [&] {
        Tape tape;
        tape.backward(sum(encode_entities(tape, enc, db.rows[1])));
      });
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
  double emb_grad = 0.0;
  for (double g : enc.embeddings[0]->grad) emb_grad += std::abs(g);
  EXPECT_GT(emb_grad, 0.0);
}

TEST(Encoder, SpecJsonRoundTrip) {
  const RelationalDatabase db = relmoss::testing::micro_database();
  for (const auto& spec : fit_statistics(db, {})) {
    const TableFeatureSpec back = feature_spec_from_json(feature_spec_json(spec));
    EXPECT_EQ(feature_spec_json(back), feature_spec_json(spec));
    for (const auto& row : db.rows[db.table_index(spec.table)]) {
      const auto a = featurize(spec, row), b = featurize(back, row);
      EXPECT_EQ(a.dense, b.dense);
      EXPECT_EQ(a.categories, b.categories);
    }
  }
}
