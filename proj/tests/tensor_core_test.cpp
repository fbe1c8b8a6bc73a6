// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "transtee/autodiff.hpp"
#include "transtee/errors.hpp"
#include "transtee/gradcheck.hpp"
#include "transtee/rng.hpp"

namespace transtee {
namespace {

Tensor random_tensor(Shape shape, RngStream& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

TEST(TensorTest, ShapeMustMatchValues) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor({0, 3}), DimensionError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(shape_string(t.shape()), "[2x3]");
}

TEST(MatmulTest, IdentityAndDot) {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var b = tape.constant(Tensor::matrix({{3, 4}, {5, 6}}));
  EXPECT_EQ(matmul(eye, b).value(), Tensor::matrix({{3, 4}, {5, 6}}));

  Var row = tape.constant(Tensor::matrix({{1, 2}}));
  Var col = tape.constant(Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(matmul(row, col).value(), Tensor::matrix({{11}}));
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, 1.0));
  Var b = tape.constant(Tensor({4, 2}, 1.0));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("[2x3]"), std::string::npos);
    EXPECT_NE(what.find("[4x2]"), std::string::npos);
  }
}

TEST(MatmulTest, SumGradientIsOnesTimesBTransposed) {
  RngStream rng(11);
  Tensor a = random_tensor({5, 7}, rng);
  Tensor b = random_tensor({7, 3}, rng);
  Tape tape;
  Var va = tape.leaf(a);
  Var vb = tape.constant(b);
  tape.backward(sum(matmul(va, vb)));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < 7; ++k) {
      double expected = 0.0;
      for (std::size_t j = 0; j < 3; ++j) expected += b.at(k, j);
      EXPECT_NEAR(va.grad().at(i, k), expected, 1e-12);
    }
  }
  const double err = check_tape_gradients(
      {a, b}, [](Tape&, std::span<const Var> in) { return sum(matmul(in[0], in[1])); });
  EXPECT_LT(err, 1e-6);
}

TEST(MatmulTest, BatchedAndSharedRhsGradients) {
  RngStream rng(12);
  const double batched = check_tape_gradients(
      {random_tensor({3, 4, 5}, rng), random_tensor({3, 5, 2}, rng), random_tensor({3, 4, 2}, rng)},
      [](Tape&, std::span<const Var> in) { return sum(mul(matmul(in[0], in[1]), in[2])); });
  EXPECT_LT(batched, 1e-6);
  const double shared = check_tape_gradients(
      {random_tensor({3, 4, 5}, rng), random_tensor({5, 2}, rng), random_tensor({3, 4, 2}, rng)},
      [](Tape&, std::span<const Var> in) { return sum(mul(matmul(in[0], in[1]), in[2])); });
  EXPECT_LT(shared, 1e-6);
}

TEST(SoftmaxTest, UniformAndStabilised) {
  Tape tape;
  Var zeros = softmax_rows(tape.constant(Tensor::matrix({{0, 0, 0}})));
  for (double v : zeros.value().values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  Var big = softmax_rows(tape.constant(Tensor::matrix({{1000, 0}})));
  EXPECT_DOUBLE_EQ(big.value()[0], 1.0);
  EXPECT_GE(big.value()[1], 0.0);
  EXPECT_LT(big.value()[1], 1e-300);
}

TEST(SoftmaxTest, RowsSumToOneAndJacobianMatches) {
  RngStream rng(13);
  Tensor a = random_tensor({4, 6}, rng);
  Tape tape;
  Var s = softmax_rows(tape.constant(a));
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
      EXPECT_GE(s.value().at(r, c), 0.0);
      total += s.value().at(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  Tensor probe = random_tensor({4, 6}, rng);
  const double err = check_tape_gradients({a}, [&](Tape& t, std::span<const Var> in) {
    return sum(mul(softmax_rows(in[0]), t.constant(probe)));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(SoftmaxTest, LargeMagnitudeRowsStillNormalised) {
  RngStream rng(14);
  Tensor a = random_tensor({16, 9}, rng, -1e3, 1e3);
  Tape tape;
  Var s = softmax_rows(tape.constant(a));
  for (std::size_t r = 0; r < 16; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 9; ++c) total += s.value().at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SoftmaxTest, NanInputIsNumericError) {
  Tape tape;
  Tensor bad({1, 2}, 0.0);
  Var a = tape.constant(Tensor::matrix({{0.0, 1.0}}));
  // Leaves reject NaN, so feed NaN through a recorded op result check instead.
  EXPECT_THROW(tape.constant(Tensor({1, 2}, std::vector<double>{NAN, 0.0})), NumericError);
  EXPECT_NO_THROW(softmax_rows(a));
}

TEST(BatchNormTest, ConstantColumnYieldsShift) {
  Tape tape;
  Tensor x({5, 2});
  for (std::size_t r = 0; r < 5; ++r) {
    x.at(r, 0) = 3.25;
    x.at(r, 1) = static_cast<double>(r);
  }
  Var gamma = tape.constant(Tensor::vector({2.0, 1.0}));
  Var beta = tape.constant(Tensor::vector({0.75, 0.0}));
  Var out = batch_norm(tape.constant(x), gamma, beta, Tensor({2}, 0.0), Tensor({2}, 1.0),
                       NormMode::kBatchStats);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_DOUBLE_EQ(out.value().at(r, 0), 0.75);
}

TEST(BatchNormTest, AlreadyNormalisedInputIsUnchanged) {
  Tape tape;
  // Column with mean 0 and (biased) variance 1.
  Tensor x = Tensor::matrix({{1.0}, {-1.0}, {1.0}, {-1.0}});
  Var out = batch_norm(tape.constant(x), tape.constant(Tensor::vector({1.0})),
                       tape.constant(Tensor::vector({0.0})), Tensor({1}, 0.0), Tensor({1}, 1.0),
                       NormMode::kBatchStats);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(out.value()[r], x[r], 1e-5);
}

TEST(BatchNormTest, OutputMomentsAndGradients) {
  RngStream rng(15);
  Tensor x = random_tensor({8, 4}, rng);
  Tape tape;
  NormObservation obs;
  Var out = batch_norm(tape.constant(x), tape.constant(Tensor({4}, 1.0)),
                       tape.constant(Tensor({4}, 0.0)), Tensor({4}, 0.0), Tensor({4}, 1.0),
                       NormMode::kBatchStats, &obs);
  for (std::size_t j = 0; j < 4; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < 8; ++r) m += out.value().at(r, j);
    m /= 8.0;
    for (std::size_t r = 0; r < 8; ++r) v += std::pow(out.value().at(r, j) - m, 2);
    v /= 8.0;
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(v, 1.0, 1e-3);
  }
  Tensor probe = random_tensor({8, 4}, rng);
  const double err = check_tape_gradients(
      {x, random_tensor({4}, rng), random_tensor({4}, rng)},
      [&](Tape& t, std::span<const Var> in) {
        return sum(mul(batch_norm(in[0], in[1], in[2], Tensor({4}, 0.0), Tensor({4}, 1.0),
                                  NormMode::kBatchStats),
                       t.constant(probe)));
      });
  EXPECT_LT(err, 1e-5);
}

TEST(BatchNormTest, RunningStatsUpdateAndEvalMode) {
  Tensor mean({1}, 0.0), var({1}, 1.0);
  NormObservation obs{Tensor::vector({2.0}), Tensor::vector({5.0})};
  update_running_stats(mean, var, obs);
  EXPECT_DOUBLE_EQ(mean[0], 0.2);
  EXPECT_DOUBLE_EQ(var[0], 0.9 + 0.5);

  Tape tape;
  Var out = batch_norm(tape.constant(Tensor::matrix({{2.2}})), tape.constant(Tensor::vector({1.0})),
                       tape.constant(Tensor::vector({0.0})), mean, var, NormMode::kRunningStats);
  EXPECT_NEAR(out.value()[0], 2.0 / std::sqrt(1.4 + kNormEps), 1e-12);
}

TEST(BatchNormTest, SingleRowTrainingIsDegenerate) {
  Tape tape;
  EXPECT_THROW(batch_norm(tape.constant(Tensor::matrix({{1.0, 2.0}})),
                          tape.constant(Tensor({2}, 1.0)), tape.constant(Tensor({2}, 0.0)),
                          Tensor({2}, 0.0), Tensor({2}, 1.0), NormMode::kBatchStats),
               ContractError);
}

TEST(ElementwiseTest, ReluAddIdentityExpLogRoundTrip) {
  Tape tape;
  Var r = relu(tape.constant(Tensor::vector({-1, 0, 2})));
  EXPECT_EQ(r.value(), Tensor::vector({0, 0, 2}));

  RngStream rng(16);
  Tensor x = random_tensor({3, 4}, rng);
  Var sum0 = elementwise(Elementwise::kAdd, tape.constant(x), tape.constant(Tensor({3, 4}, 0.0)));
  EXPECT_EQ(sum0.value(), x);

  Tensor pos = random_tensor({3, 4}, rng, 0.01, 5.0);
  Var round = exp(log(tape.constant(pos)));
  for (std::size_t i = 0; i < pos.size(); ++i) {
    EXPECT_NEAR(round.value()[i], pos[i], 1e-12 * std::max(1.0, pos[i]));
  }
}

TEST(ElementwiseTest, LogOfNonPositiveIsNumericError) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::vector({1.0, 0.0}))), NumericError);
  EXPECT_THROW(log(tape.constant(Tensor::vector({-3.0}))), NumericError);
}

TEST(ElementwiseTest, BroadcastingAndGradients) {
  RngStream rng(17);
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, 1.0));
  Var b = tape.constant(Tensor::vector({1, 2, 3}));
  EXPECT_EQ(add(a, b).value(), Tensor::matrix({{2, 3, 4}, {2, 3, 4}}));
  EXPECT_THROW(add(a, tape.constant(Tensor({2}, 1.0))), DimensionError);

  for (Elementwise kind : {Elementwise::kAdd, Elementwise::kSub, Elementwise::kMul}) {
    const double err = check_tape_gradients(
        {random_tensor({2, 3, 4}, rng), random_tensor({3, 1}, rng)},
        [kind](Tape&, std::span<const Var> in) {
          return sum(square(elementwise(kind, in[0], in[1])));
        });
    EXPECT_LT(err, 1e-5);
  }
  const double unary_err = check_tape_gradients(
      {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng, 0.1, 2.0)},
      [](Tape&, std::span<const Var> in) {
        return add(sum(mul(relu(in[0]), exp(in[0]))), sum(div(log(in[1]), in[1])));
      });
  EXPECT_LT(unary_err, 1e-5);
}

TEST(LinearTest, IdentityAndScalarAffine) {
  Tape tape;
  RngStream rng(18);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor eye({3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Var y = linear(tape.constant(x), tape.constant(eye), tape.constant(Tensor({3}, 0.0)));
  EXPECT_EQ(y.value(), x);
  Var s = linear(tape.constant(Tensor::matrix({{2}})), tape.constant(Tensor::matrix({{3}})),
                 tape.constant(Tensor::vector({1})));
  EXPECT_EQ(s.value(), Tensor::matrix({{7}}));
  EXPECT_THROW(linear(tape.constant(x), tape.constant(eye), tape.constant(Tensor({2}, 0.0))),
               DimensionError);
}

TEST(LinearTest, WeightAndBiasGradients) {
  RngStream rng(19);
  Tensor probe = random_tensor({5, 2}, rng);
  const double err = check_tape_gradients(
      {random_tensor({5, 3}, rng), random_tensor({3, 2}, rng), random_tensor({2}, rng)},
      [&](Tape& t, std::span<const Var> in) {
        return sum(mul(linear(in[0], in[1], in[2]), t.constant(probe)));
      });
  EXPECT_LT(err, 1e-6);
}

TEST(MeanPoolTest, SingleTokenSymmetryAndGradient) {
  Tape tape;
  Var one = mean_pool(tape.constant(Tensor::matrix({{1.5, -2.0}})));
  EXPECT_EQ(one.value(), Tensor::vector({1.5, -2.0}));
  Var two = mean_pool(tape.constant(Tensor::matrix({{1, 3}, {3, 1}})));
  EXPECT_EQ(two.value(), Tensor::vector({2, 2}));

  Var x = tape.leaf(Tensor({4, 3}, 0.5));
  tape.backward(sum(mean_pool(x)));
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 0.25);

  RngStream rng(20);
  const double err = check_tape_gradients(
      {random_tensor({2, 4, 3}, rng), random_tensor({2, 3}, rng)},
      [](Tape&, std::span<const Var> in) { return sum(mul(mean_pool(in[0]), in[1])); });
  EXPECT_LT(err, 1e-6);
}

TEST(BackwardTest, SumAndSquare) {
  Tape tape;
  Tensor xv = Tensor::vector({1.0, -2.0, 0.5});
  Var x = tape.leaf(xv);
  tape.backward(sum(x));
  for (double g : x.grad().values()) EXPECT_EQ(g, 1.0);
  tape.backward(sum(square(x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 2.0 * xv[i]);
}

TEST(BackwardTest, NonScalarRootIsContractError) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, 1.0));
  EXPECT_THROW(tape.backward(square(x)), ContractError);
}

TEST(BackwardTest, EveryRequiresGradNodeGetsBuffer) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, 0.3));
  Var y = relu(matmul(x, x));
  tape.backward(sum(y));
  for (std::size_t id = 0; id < tape.size(); ++id) {
    if (tape.requires_grad(id)) EXPECT_EQ(tape.grad(id).shape(), tape.value(id).shape());
  }
}

TEST(FiniteDiffTest, QuadraticAndLinearAreExact) {
  const ScalarFn quad = [](std::span<const double> p) {
    return 3.0 * p[0] * p[0] - 2.0 * p[0] * p[1] + 0.5 * p[1] * p[1] + p[1];
  };
  const GradientFn quad_grad = [](std::span<const double> p) {
    return std::vector<double>{6.0 * p[0] - 2.0 * p[1], -2.0 * p[0] + p[1] + 1.0};
  };
  const std::vector<double> at{0.7, -1.3};
  EXPECT_LT(finite_diff_check(quad, quad_grad, at, 1e-4), 1e-9);

  const ScalarFn lin = [](std::span<const double> p) { return 4.0 * p[0] - 7.0 * p[1] + 2.0; };
  const GradientFn lin_grad = [](std::span<const double>) { return std::vector<double>{4.0, -7.0}; };
  EXPECT_LT(finite_diff_check(lin, lin_grad, at, 1e-4), 1e-10);
}

TEST(FiniteDiffTest, NanReportsInfinity) {
  const ScalarFn f = [](std::span<const double>) { return std::nan(""); };
  const GradientFn g = [](std::span<const double>) { return std::vector<double>{0.0}; };
  const std::vector<double> at{1.0};
  EXPECT_TRUE(std::isinf(finite_diff_check(f, g, at, 1e-5)));
}

TEST(RngStreamTest, ReproducibleAndSplittable) {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream c(42, 50);
  RngStream d(42);
  for (int i = 0; i < 50; ++i) d.next_u64();
  EXPECT_EQ(c.next_u64(), d.next_u64());

  RngStream root(7);
  RngStream s1 = root.split(1), s2 = root.split(2);
  EXPECT_NE(s1.seed(), s2.seed());
  EXPECT_EQ(root.split(1).next_u64(), RngStream(7).split(1).next_u64());
  EXPECT_EQ(root.counter(), 0u);
}

TEST(RngStreamTest, NormalMoments) {
  RngStream rng(3);
  const int n = 200000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    m += z;
    m2 += z * z;
  }
  m /= n;
  m2 /= n;
  EXPECT_NEAR(m, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(m2, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(RngStreamTest, BetaMean) {
  RngStream rng(4);
  const int n = 100000;
  for (auto [a, b] : {std::pair{2.0, 5.0}, std::pair{0.5, 0.5}, std::pair{1.0, 1.0}}) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += rng.beta(a, b);
    m /= n;
    const double mean = a / (a + b);
    const double sd = std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)));
    EXPECT_NEAR(m, mean, 4.0 * sd / std::sqrt(n)) << a << "," << b;
  }
}

TEST(ReplayTest, SameRngStateGivesBitIdenticalForward) {
  auto run = [](std::uint64_t seed) {
    RngStream rng(seed);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tape tape;
    return softmax_rows(matmul(tape.constant(a), tape.constant(b))).value();
  };
  EXPECT_EQ(run(99), run(99));
}

}  // namespace
}  // namespace transtee
