// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "transtee/datagen.hpp"
#include "transtee/errors.hpp"

namespace transtee {
namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double var_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double dot_product(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> residuals(const Dataset& d) {
  const std::vector<double> mu = true_response(d, d.x, d.t, d.s);
  std::vector<double> r(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) r[i] = d.y[i] - mu[i];
  return r;
}

void expect_noise_variance(const Dataset& d) {
  const std::vector<double> r = residuals(d);
  const double n = static_cast<double>(r.size());
  const double v = d.meta.noise_variance;
  // Standard error of a Gaussian sample variance.
  EXPECT_NEAR(var_of(r), v, 3.0 * v * std::sqrt(2.0 / n)) << d.meta.generator;
  EXPECT_NEAR(mean_of(r), 0.0, 3.0 * std::sqrt(v / n)) << d.meta.generator;
}

GenOptions opts(std::size_t n, std::uint64_t seed, double h = 1.0) {
  GenOptions o;
  o.n = n;
  o.seed = seed;
  o.h = h;
  return o;
}

TEST(SyntheticTest, NoiselessOutcomesEqualOracle) {
  GenOptions o = opts(300, 1);
  o.noise_scale = 0.0;
  const Dataset d = gen_synthetic(o);
  const std::vector<double> mu = true_response(d, d.x, d.t);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.y[i], mu[i]);
  EXPECT_EQ(d.meta.noise_variance, 0.0);
}

TEST(SyntheticTest, OracleMatchesPrintedFormula) {
  const Dataset d = gen_synthetic(opts(50, 2));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double x1 = d.x.at(i, 0), x3 = d.x.at(i, 2), x6 = d.x.at(i, 5), t = d.t[i];
    const double expected = std::cos(2.0 * std::numbers::pi * (t - 0.5)) *
                            (t * t + 4.0 * std::pow(std::max(x1, x6), 3) / (1.0 + 2.0 * x3 * x3));
    EXPECT_NEAR(true_response(d, d.x, d.t)[i], expected, 1e-14);
  }
}

TEST(SyntheticTest, TreatmentsInsideOpenInterval) {
  for (double h : {1.0, 2.0, 5.0}) {
    const Dataset d = gen_synthetic(opts(2000, 3, h));
    for (double t : d.t) {
      EXPECT_GT(t, 0.0);
      EXPECT_LT(t, h);
    }
    for (double x : d.x.values()) {
      EXPECT_GE(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
  }
}

TEST(SyntheticTest, TreatmentMeanMatchesIndependentMonteCarlo) {
  const std::size_t n = 100000;
  const Dataset d = gen_synthetic(opts(n, 4));
  // Independent draw of the treatment mechanism with a different generator.
  std::mt19937_64 gen(12345);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<double> ref(n);
  for (double& t : ref) {
    double x[6];
    for (double& v : x) v = unif(gen);
    const double tt =
        (10.0 * std::sin(std::max({x[0], x[1], x[2]})) + std::pow(std::max({x[2], x[3], x[4]}), 3)) /
            (1.0 + (x[0] + x[4]) * (x[0] + x[4])) +
        std::sin(0.5 * x[2]) * (1.0 + std::exp(x[3] - 0.5 * x[2])) + x[2] * x[2] +
        2.0 * std::sin(x[3]) + 2.0 * x[4] - 6.5 + noise(gen);
    t = 1.0 / (1.0 + std::exp(-tt));
  }
  const double se = std::sqrt(var_of(d.t) / n + var_of(ref) / n);
  EXPECT_NEAR(mean_of(d.t), mean_of(ref), 3.0 * se);
}

TEST(SyntheticTest, NoiseVarianceAndDeterminism) {
  const Dataset d = gen_synthetic(opts(10000, 5));
  EXPECT_DOUBLE_EQ(d.meta.noise_variance, 0.25);
  expect_noise_variance(d);
  const Dataset again = gen_synthetic(opts(10000, 5));
  EXPECT_EQ(d.x, again.x);
  EXPECT_EQ(d.t, again.t);
  EXPECT_EQ(d.y, again.y);
  EXPECT_NE(gen_synthetic(opts(10, 6)).y, gen_synthetic(opts(10, 7)).y);
}

TEST(SyntheticTest, SplitAndIntervalRejection) {
  const DatasetSplit split = gen_synthetic(500, 200, 1.0, 8);
  EXPECT_EQ(split.train.size(), 500u);
  EXPECT_EQ(split.test.size(), 200u);
  EXPECT_NE(split.train.x[0], split.test.x[0]);

  GenOptions o = opts(400, 9, 2.0);
  o.interval = Interval{0.1, 2.0};
  const Dataset d = gen_synthetic(o);
  for (double t : d.t) EXPECT_GE(t, 0.1);
  EXPECT_FALSE(gen_synthetic(opts(10, 9, 2.0)).meta.notes.empty());

  o.interval = Interval{1.9999, 2.0};
  o.n = 5;
  EXPECT_THROW(gen_synthetic(o), ContractError);
  o.interval = Interval{1.0, 0.5};
  EXPECT_THROW(gen_synthetic(o), ConfigError);
}

TEST(IhdpTest, GroupsMatchPublishedLayout) {
  const CovariateGroups g = ihdp_groups();
  ASSERT_TRUE(g.is_partition(25));
  auto one_based = [](const std::vector<std::size_t>& m) {
    std::vector<std::size_t> out;
    for (std::size_t i : m) out.push_back(i + 1);
    return out;
  };
  EXPECT_EQ(one_based(g.members[0]), (std::vector<std::size_t>{1, 2, 3, 5, 6}));
  EXPECT_EQ(one_based(g.members[1]), (std::vector<std::size_t>{4, 7, 8, 9, 10, 11, 12, 13, 14, 15}));
  EXPECT_EQ(one_based(g.members[2]),
            (std::vector<std::size_t>{16, 17, 18, 19, 20, 21, 22, 23, 24, 25}));
  const CovariateGroups wider = ihdp_groups(20, 5);
  EXPECT_TRUE(wider.is_partition(30));
  EXPECT_EQ(wider.members[1].size(), 20u);
}

TEST(IhdpTest, CovariatesTreatmentsAndConstants) {
  const Dataset d = gen_ihdp_style(opts(747, 10, 2.0));
  ASSERT_EQ(d.p(), 25u);
  ASSERT_TRUE(d.meta.groups.has_value());
  for (std::size_t j = 0; j < 25; ++j) {
    std::vector<double> col(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) col[i] = d.x.at(i, j);
    // Standardised with the candidate pool; a few saturated rows are redrawn.
    const double n = static_cast<double>(d.size());
    EXPECT_NEAR(mean_of(col), 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(var_of(col), 1.0, 5.0 * std::sqrt(2.0 / n));
  }
  for (double t : d.t) {
    EXPECT_GT(t / 2.0, 0.0);
    EXPECT_LT(t / 2.0, 1.0);
  }
  double c1 = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double s = 0.0;
    for (std::size_t j : d.meta.groups->members[1]) s += d.x.at(i, j);
    c1 += s / 10.0;
  }
  EXPECT_NEAR(d.meta.constants.at("c1"), c1 / static_cast<double>(d.size()), 1e-15);
  EXPECT_NEAR(d.meta.constants.at("c2"), 0.0, 1e-12);  // pool average of standardised columns
}

TEST(IhdpTest, OracleMatchesPrintedFormulaAndNoise) {
  GenOptions o = opts(10000, 11, 2.0);
  const Dataset d = gen_ihdp_style(o);
  const double c1 = d.meta.constants.at("c1");
  const auto& dis1 = d.meta.groups->members[1];
  const std::vector<double> mu = true_response(d, d.x, d.t);
  for (std::size_t i = 0; i < 200; ++i) {
    const double u = d.t[i] / 2.0;
    double avg = 0.0;
    for (std::size_t j : dis1) avg += d.x.at(i, j) - c1;
    avg /= 10.0;
    const double expected =
        std::sin(3.0 * std::numbers::pi * u) / (1.2 - u) *
        (std::tanh(5.0 * avg) + std::exp(0.2 * (d.x.at(i, 0) - d.x.at(i, 5))) /
                                    (0.5 + 5.0 * std::min({d.x.at(i, 1), d.x.at(i, 2), d.x.at(i, 4)})));
    EXPECT_NEAR(mu[i], expected, 1e-9 * std::max(1.0, std::abs(expected)));
  }
  expect_noise_variance(d);
}

TEST(IhdpTest, BinaryVariantHasExactAte) {
  GenOptions o = opts(500, 12);
  IhdpOptions b;
  b.binary = true;
  const Dataset d = gen_ihdp_style(o, b);
  EXPECT_TRUE(d.meta.binary);
  for (double t : d.t) EXPECT_TRUE(t == 0.0 || t == 1.0);
  const std::vector<double> ones(d.size(), 1.0), zeros(d.size(), 0.0);
  const std::vector<double> y1 = true_response(d, d.x, ones);
  const std::vector<double> y0 = true_response(d, d.x, zeros);
  double ate = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) ate += y1[i] - y0[i];
  EXPECT_TRUE(std::isfinite(ate));
  const std::vector<double> bad{0.5};
  EXPECT_THROW(true_response(d, Tensor({1, 25}, 0.0), bad), ContractError);
}

TEST(NewsTest, RangesNormsAndClamp) {
  const Dataset d = gen_news_style(opts(3000, 13, 2.0));
  ASSERT_EQ(d.p(), 50u);
  for (double t : d.t) {
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 2.0);
  }
  const auto* oracle = dynamic_cast<const NewsOracle*>(d.oracle.get());
  ASSERT_NE(oracle, nullptr);
  const NewsParams& v = oracle->params();
  for (const auto* dir : {&v.v1, &v.v2, &v.v3}) {
    double n2 = 0.0;
    for (double e : *dir) n2 += e * e;
    EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-12);
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double c = news_clamped_prime(v, {d.x.data() + i * 50, 50});
    EXPECT_GE(c, -2.0);
    EXPECT_LE(c, 2.0);
    double norm = 0.0;
    for (std::size_t j = 0; j < 50; ++j) {
      EXPECT_GE(d.x.at(i, j), 0.0);
      norm += d.x.at(i, j) * d.x.at(i, j);
    }
    EXPECT_NEAR(norm, 1.0, 1e-12);
  }
}

TEST(NewsTest, NoiseVariance) {
  const Dataset d = gen_news_style(opts(10000, 14));
  EXPECT_DOUBLE_EQ(d.meta.noise_variance, 0.5);
  expect_noise_variance(d);
}

TEST(TcgaTest, ParameterNormsAndPropensities) {
  TcgaDoseConfig c;
  RngStream rng(15);
  const TcgaParams params = sample_tcga_params(c, rng);
  for (const auto& arm : params.v)
    for (const auto& dir : arm) {
      double n2 = 0.0;
      for (double e : dir) n2 += e * e;
      EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-12);
    }
  const Dataset d = gen_tcga_dosage(opts(500, 16), c);
  ASSERT_TRUE(d.propensity.has_value());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double total = 0.0;
    for (std::size_t a = 0; a < 3; ++a) total += d.propensity->at(i, a);
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_GE(d.s[i], 0.0);
    EXPECT_LE(d.s[i], 1.0);
  }
  TcgaDoseConfig bad;
  bad.alpha = 0.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TcgaTest, OptimalDosageIsGridArgmax) {
  TcgaDoseConfig c;
  RngStream rng(17);
  const TcgaParams params = sample_tcga_params(c, rng);
  int checked = 0;
  for (int trial = 0; trial < 2000 && checked < 5; ++trial) {
    std::vector<double> x = unit_direction(c.p, rng);
    for (double& e : x) e = std::abs(e);
    const double s_star = tcga_optimal_dosage(params, 0, x);
    // A concave quadratic with an interior vertex has a unique grid maximum.
    if (!(s_star > 0.01 && s_star < 0.99)) continue;
    if (!(dot_product(params.v[0][2], x) > 0.0)) continue;
    double best = -1e300, arg = 0.0;
    for (int k = 0; k <= 1000; ++k) {
      const double s = k / 1000.0;
      const double f = tcga_response(params, c.c, 0, x, s);
      if (f > best) {
        best = f;
        arg = s;
      }
    }
    EXPECT_NEAR(arg, s_star, 5e-4 + 1e-12);
    ++checked;
  }
  EXPECT_GE(checked, 1);
}

TEST(TcgaTest, ZeroKappaAssignsUniformly) {
  TcgaDoseConfig c;
  c.kappa = 0.0;
  c.p = 20;
  const Dataset d = gen_tcga_dosage(opts(10000, 18), c);
  std::array<double, 3> counts{};
  for (double t : d.t) counts[static_cast<std::size_t>(t)] += 1.0;
  double chi2 = 0.0;
  for (double k : counts) chi2 += (k - 10000.0 / 3.0) * (k - 10000.0 / 3.0) / (10000.0 / 3.0);
  EXPECT_LT(chi2, 9.21);  // chi-square, 2 dof, p = 0.01
}

TEST(TcgaTest, UnitAlphaGivesUniformDosage) {
  TcgaDoseConfig c;
  c.kappa = 0.0;
  c.alpha = 1.0;
  c.p = 20;
  const Dataset d = gen_tcga_dosage(opts(10000, 19), c);
  std::vector<double> s = d.s;
  std::sort(s.begin(), s.end());
  double ks = 0.0;
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    ks = std::max({ks, std::abs((i + 1) / n - s[i]), std::abs(s[i] - i / n)});
  }
  EXPECT_LT(ks, 1.628 / std::sqrt(n));  // Kolmogorov-Smirnov, p = 0.01
}

TEST(TcgaTest, DosageConcentratesTowardOptimumAsAlphaGrows) {
  for (double s_star : {0.3, 0.8}) {
    double previous = std::numeric_limits<double>::infinity();
    for (double alpha : {1.0, 2.0, 4.0, 8.0}) {
      RngStream rng(20);
      double m = 0.0;
      for (int i = 0; i < 10000; ++i) m += sample_dosage(alpha, s_star, rng);
      const double gap = std::abs(m / 10000.0 - s_star);
      EXPECT_LT(gap, previous) << "alpha " << alpha;
      previous = gap;
    }
  }
}

TEST(TcgaTest, MirroredDrawForNonPositiveOptimum) {
  RngStream rng(21);
  double m = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double s = sample_dosage(2.0, 0.0, rng);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    m += s;
  }
  // 1 - Beta(2, 1) has mean 1/3.
  EXPECT_NEAR(m / 20000.0, 1.0 / 3.0, 0.01);
}

TEST(TcgaTest, OracleAndNoise) {
  TcgaDoseConfig c;
  c.p = 20;
  const Dataset d = gen_tcga_dosage(opts(10000, 22), c);
  expect_noise_variance(d);
  EXPECT_EQ(true_response(d, d.x, d.t, d.s), true_response(d, d.x, d.t, d.s));
  const std::vector<double> arm{3.0}, dose{0.5};
  EXPECT_THROW(true_response(d, Tensor({1, 20}, 0.1), arm, dose), ContractError);
}

TEST(CsvTest, RoundTripIsExact) {
  for (const Dataset& d : {gen_synthetic(opts(40, 23)), gen_tcga_dosage(opts(30, 24), {})}) {
    std::stringstream buffer;
    write_csv(d, buffer);
    const Dataset back = load_csv(buffer);
    EXPECT_EQ(back.x, d.x);
    EXPECT_EQ(back.t, d.t);
    EXPECT_EQ(back.s, d.s);
    EXPECT_EQ(back.y, d.y);
    EXPECT_EQ(back.oracle, nullptr);
    EXPECT_THROW(true_response(back, back.x, back.t, back.s), ContractError);
  }
}

TEST(CsvTest, SchemaAndParseErrors) {
  std::istringstream empty("");
  EXPECT_THROW(load_csv(empty), SchemaError);
  std::istringstream extra("x1,t,z,y\n1,2,3,4\n");
  try {
    load_csv(extra);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("'z'"), std::string::npos);
  }
  std::istringstream missing("x1,x2,y\n1,2,3\n");
  EXPECT_THROW(load_csv(missing), SchemaError);
  std::istringstream gap("x1,x3,t,y\n1,2,3,4\n");
  EXPECT_THROW(load_csv(gap), SchemaError);
  std::istringstream bad("x1,t,y\n1,2,3\n1,oops,3\n");
  try {
    load_csv(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream short_row("x1,t,y\n1,2\n");
  EXPECT_THROW(load_csv(short_row), ParseError);
  std::istringstream ok("x2,x1,t,y\n2,1,0.5,3\n");
  const Dataset d = load_csv(ok);
  EXPECT_EQ(d.x.at(0, 0), 1.0);
  EXPECT_EQ(d.x.at(0, 1), 2.0);
}

}  // namespace
}  // namespace transtee
