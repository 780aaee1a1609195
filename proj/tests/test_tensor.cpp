// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "primitive_checks.hpp"
#include "relmoss/params.hpp"

using namespace relmoss;
using namespace relmoss::testing;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformOpenNeverHitsBounds) {
  Rng r(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform_open();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowIsInRangeAndCoversIt) {
  Rng r(5);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int c : seen) EXPECT_GT(c, 800);
}

TEST(Rng, BetaMomentsMatch) {
  Rng r(11);
  const double a = 2.0, b = 5.0;
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = beta_sample(r, a, b);
    ASSERT_GT(x, 0.0);
    ASSERT_LT(x, 1.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, a / (a + b), 3e-3);
  EXPECT_NEAR(var, a * b / ((a + b) * (a + b) * (a + b + 1)), 1e-3);
}

TEST(Rng, BetaSmallShapeStaysInside) {
  Rng r(12);
  for (int i = 0; i < 10000; ++i) {
    const double x = beta_sample(r, 0.3, 0.4);
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
  }
}

TEST(Rng, BetaRejectsBadShape) {
  Rng r(1);
  EXPECT_THROW(beta_sample(r, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(beta_sample(r, 1.0, -2.0), std::invalid_argument);
}

TEST(Tensor, ShapeMismatchThrows) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(2, 3));
  EXPECT_THROW(matmul(a, b), std::invalid_argument);
  EXPECT_THROW(add(a, tape.constant(Tensor(3, 2))), std::invalid_argument);
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Tensor, MatmulValues) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor(2, 1, {5, 6}));
  const Tensor& c = matmul(a, b).value();
  EXPECT_DOUBLE_EQ(c.values[0], 17.0);
  EXPECT_DOUBLE_EQ(c.values[1], 39.0);
}

TEST(Tensor, SegmentMeanEmptySegmentIsZero) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
  const Tensor& m = segment_mean(a, {0, 0, 2}, {0, 1}).value();
  EXPECT_EQ(m.values, (std::vector<double>{0, 0, 2, 3}));
}

TEST(Tensor, BceOfZeroLogitsIsLog2) {
  Tape tape;
  Var z = tape.constant(Tensor(2, 1, {0.0, 0.0}));
  Var y = tape.constant(Tensor(2, 1, {1.0, 0.0}));
  EXPECT_NEAR(bce_with_logits(z, y, Reduction::Sum).value().values[0], 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logits(z, y, Reduction::Mean).value().values[0], std::log(2.0), 1e-15);
}

TEST(Tensor, BceStableForLargeLogits) {
  Tape tape;
  Var z = tape.constant(Tensor(2, 1, {800.0, -800.0}));
  Var y = tape.constant(Tensor(2, 1, {0.0, 1.0}));
  EXPECT_NEAR(bce_with_logits(z, y, Reduction::Sum).value().values[0], 1600.0, 1e-9);
}

TEST(Tensor, OpenSigmoidStaysInsideUnitInterval) {
  Tape tape;
  Var z = tape.constant(Tensor(1, 4, {-1e4, -40.0, 40.0, 1e4}));
  for (double v : sigmoid(z, true).value().values) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Tensor, GradientsAccumulateAcrossBackwardCalls) {
  auto w = make_tensor(1, 1, 2.0);
  w->requires_grad = true;
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(scale(tape.leaf(w), 3.0)));
  }
  EXPECT_DOUBLE_EQ(w->grad[0], 6.0);
}

TEST(Tensor, BackwardRequiresScalar) {
  Tape tape;
  auto w = make_tensor(2, 2, 1.0);
  w->requires_grad = true;
  EXPECT_THROW(tape.backward(tape.leaf(w)), std::invalid_argument);
}

TEST(Tensor, DetachBlocksGradient) {
  auto w = make_tensor(1, 2, 1.5);
  w->requires_grad = true;
  w->ensure_grad();
  Tape tape;
  tape.backward(sum(detach(tape.leaf(w))));
  EXPECT_EQ(w->grad, (std::vector<double>{0.0, 0.0}));
}

TEST(Tensor, DetachedBranchContributesNothing) {
  auto a = make_tensor(1, 2, 3.0), b = make_tensor(1, 2, 0.5);
  for (auto* t : {&a, &b}) {
    (*t)->requires_grad = true;
    (*t)->ensure_grad();
  }
  Tape tape;
  const Var vb = tape.leaf(b);
  tape.backward(sum(add(mul(tape.leaf(a), detach(vb)), vb)));
  EXPECT_EQ(b->grad, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(a->grad, (std::vector<double>{0.5, 0.5}));
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  Rng rng(2024);
  auto cases = primitive_cases(rng);
  ASSERT_LT(GetParam(), cases.size());
  const auto& pc = cases[GetParam()];
  const GradReport rep = check_primitive(pc, rng);
  EXPECT_GT(rep.checked, 0u);
  EXPECT_LT(rep.max_rel_error, 1e-4) << pc.name << ": " << rep.worst;
}

INSTANTIATE_TEST_SUITE_P(AllOps, PrimitiveGradient, ::testing::Range<std::size_t>(0, 21));

TEST(PrimitiveGradient, CaseCountCoversRange) {
  Rng rng(2024);
  EXPECT_EQ(primitive_cases(rng).size(), 21u);
}

TEST(Optim, AdamFirstStepMovesByLearningRate) {
  ParameterStore ps;
  auto w = ps.add("w", 1, 3);
  w->values = {1.0, -2.0, 0.5};
  w->grad = {0.3, -4.0, 0.0};
  AdamState st;
  st.init(ps.tensors());
  AdamOptions opt;
  opt.lr = 0.01;
  adam_step(ps.tensors(), st, opt);
  EXPECT_NEAR(w->values[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(w->values[1], -2.0 + 0.01, 1e-9);
  EXPECT_DOUBLE_EQ(w->values[2], 0.5);
}

TEST(Optim, SgdFollowsGradient) {
  ParameterStore ps;
  auto w = ps.add("w", 1, 2);
  w->values = {1.0, 1.0};
  w->grad = {2.0, -1.0};
  sgd_step(ps.tensors(), 0.5);
  EXPECT_EQ(w->values, (std::vector<double>{0.0, 1.5}));
}

TEST(Optim, AdamMinimisesQuadratic) {
  ParameterStore ps;
  auto w = ps.add("w", 1, 1);
  w->values = {5.0};
  AdamState st;
  st.init(ps.tensors());
  AdamOptions opt;
  opt.lr = 0.1;
  for (int i = 0; i < 500; ++i) {
    ps.zero_grad();
    Tape tape;
    Var x = tape.leaf(w);
    tape.backward(sum(mul(x, x)));
    adam_step(ps.tensors(), st, opt);
  }
  EXPECT_LT(std::abs(w->values[0]), 1e-2);
}

TEST(Params, NonFiniteDetected) {
  ParameterStore ps;
  auto w = ps.add("w", 1, 2);
  EXPECT_TRUE(ps.all_finite());
  w->values[1] = std::nan("");
  EXPECT_FALSE(ps.all_finite());
}

TEST(Params, DuplicateNameRejected) {
  ParameterStore ps;
  ps.add("w", 1, 1);
  EXPECT_THROW(ps.add("w", 2, 2), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(8);
  ParameterStore a;
  a.add_glorot("x", 3, 4, rng);
  a.add_normal("y", 1, 5, 0.3, rng);
  const auto path = std::filesystem::temp_directory_path() / "relmoss_ckpt_test.json";
  save_checkpoint(path.string(), a, {{"note", "t"}});
  ParameterStore b;
  b.add("x", 3, 4);
  b.add("y", 1, 5);
  const auto ck = read_checkpoint(path.string());
  load_parameters(ck, b);
  EXPECT_EQ(a.get("x")->values, b.get("x")->values);
  EXPECT_EQ(a.get("y")->values, b.get("y")->values);
  EXPECT_EQ(ck.at("meta").at("note"), "t");
  std::filesystem::remove(path);
}

TEST(Checkpoint, ShapeMismatchRejected) {
  Rng rng(8);
  ParameterStore a;
  a.add_glorot("x", 3, 4, rng);
  ParameterStore b;
  b.add("x", 4, 3);
  EXPECT_THROW(load_parameters(checkpoint_json(a), b), std::runtime_error);
}
