// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "transtee/errors.hpp"

namespace transtee {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kMaxDrawsPerUnit = 1000;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<double> unit_direction(std::size_t p, RngStream& rng) {
  std::vector<double> v(p);
  double norm = 0.0;
  for (double& e : v) {
    e = rng.normal();
    norm += e * e;
  }
  norm = std::sqrt(norm);
  for (double& e : v) e /= norm;
  return v;
}

namespace {

std::span<const double> row_of(const Tensor& x, std::size_t i) {
  const std::size_t p = x.dim(1);
  return {x.data() + i * p, p};
}

void check_rows(const Tensor& x, std::span<const double> t, std::span<const double> s,
                bool needs_dosage) {
  if (x.rank() != 2) throw DimensionError("oracle expects x of rank 2");
  if (t.size() != x.dim(0)) throw DimensionError("oracle treatment column length mismatch");
  if (needs_dosage && s.size() != t.size()) {
    throw DimensionError("oracle needs one dosage per row");
  }
}

std::string too_few_accepted(const std::string& generator, const Interval& interval) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: treatment interval [%g, %g] accepted too few draws",
                generator.c_str(), interval.low, interval.high);
  return buf;
}

// --- synthetic -------------------------------------------------------------

double synthetic_tilde_t(std::span<const double> x) {
  const double x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3], x5 = x[4];
  const double a = 10.0 * std::sin(std::max({x1, x2, x3})) + std::pow(std::max({x3, x4, x5}), 3);
  const double b = 1.0 + (x1 + x5) * (x1 + x5);
  return a / b + std::sin(0.5 * x3) * (1.0 + std::exp(x4 - 0.5 * x3)) + x3 * x3 +
         2.0 * std::sin(x4) + 2.0 * x5 - 6.5;
}

double synthetic_mu(std::span<const double> x, double t) {
  const double x1 = x[0], x3 = x[2], x6 = x[5];
  return std::cos(2.0 * kPi * (t - 0.5)) *
         (t * t + 4.0 * std::pow(std::max(x1, x6), 3) / (1.0 + 2.0 * x3 * x3));
}

class SyntheticOracle final : public ResponseFunction {
 public:
  std::vector<double> evaluate(const Tensor& x, std::span<const double> t,
                               std::span<const double> s) const override {
    check_rows(x, t, s, false);
    if (x.dim(1) != 6) throw DimensionError("synthetic oracle expects 6 covariates");
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = synthetic_mu(row_of(x, i), t[i]);
    return out;
  }
};

// --- ihdp ------------------------------------------------------------------

double group_mean(std::span<const double> x, const std::vector<std::size_t>& members,
                  double centre) {
  double s = 0.0;
  for (std::size_t i : members) s += x[i] - centre;
  return s / static_cast<double>(members.size());
}

class IhdpOracle final : public ResponseFunction {
 public:
  IhdpOracle(CovariateGroups groups, double h, double c1, bool binary)
      : groups_(std::move(groups)), h_(h), c1_(c1), binary_(binary) {}

  double at(std::span<const double> x, double t) const {
    double u = t / h_;
    if (binary_) {
      if (t != 0.0 && t != 1.0) throw ContractError("binary ihdp oracle takes t in {0, 1}");
      u = 0.25 + 0.5 * t;
    }
    const double x1 = x[0], x2 = x[1], x3 = x[2], x5 = x[4], x6 = x[5];
    const double dose = std::sin(3.0 * kPi * u) / (1.2 - u);
    const double effect = std::tanh(5.0 * group_mean(x, groups_.members[1], c1_)) +
                          std::exp(0.2 * (x1 - x6)) / (0.5 + 5.0 * std::min({x2, x3, x5}));
    return dose * effect;
  }

  std::vector<double> evaluate(const Tensor& x, std::span<const double> t,
                               std::span<const double> s) const override {
    check_rows(x, t, s, false);
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = at(row_of(x, i), t[i]);
    return out;
  }

 private:
  CovariateGroups groups_;
  double h_;
  double c1_;
  bool binary_;
};

// --- shared ----------------------------------------------------------------

Dataset assemble(const std::string& generator, const GenOptions& options, std::size_t p,
                 std::vector<double> xs, std::vector<double> t, std::vector<double> s,
                 std::vector<double> y) {
  Dataset d;
  const std::size_t n = t.size();
  d.x = Tensor({n, p}, std::move(xs));
  d.t = std::move(t);
  d.s = std::move(s);
  d.y = std::move(y);
  d.meta.generator = generator;
  d.meta.h = options.h;
  d.meta.interval = options.interval.value_or(Interval{0.0, options.h});
  d.meta.seed = options.seed;
  return d;
}

void check_options(const GenOptions& options) {
  if (options.n == 0) throw ConfigError("generator needs n >= 1");
  if (!(options.h > 0.0)) throw ConfigError("generator needs h > 0");
  if (!(options.noise_scale >= 0.0)) throw ConfigError("noise_scale must be nonnegative");
  if (options.interval) options.interval->validate();
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

double news_clamped_prime(const NewsParams& v, std::span<const double> x) {
  const double y_prime = std::exp(dot(v.v2, x) / dot(v.v3, x) - 0.3);
  return std::max(-2.0, std::min(2.0, y_prime));
}

double news_response(const NewsParams& v, std::span<const double> x, double t) {
  return 2.0 * (news_clamped_prime(v, x) + 20.0 * dot(v.v1, x)) *
         (4.0 * (t - 0.5) * (t - 0.5) + std::sin(0.5 * kPi * t));
}

std::vector<double> NewsOracle::evaluate(const Tensor& x, std::span<const double> t,
                                         std::span<const double> s) const {
  check_rows(x, t, s, false);
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = news_response(params_, row_of(x, i), t[i]);
  return out;
}

std::vector<double> TcgaOracle::evaluate(const Tensor& x, std::span<const double> t,
                                         std::span<const double> s) const {
  check_rows(x, t, s, true);
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double arm = t[i];
    if (arm < 0.0 || arm != std::floor(arm) || arm >= static_cast<double>(params_.v.size())) {
      throw ContractError("tcga oracle: treatment must be an arm index below " +
                          std::to_string(params_.v.size()));
    }
    out[i] = tcga_response(params_, c_, static_cast<std::size_t>(arm), row_of(x, i), s[i]);
  }
  return out;
}

void Interval::validate() const {
  if (!(low < high)) {
    throw ConfigError("interval needs low < high, got [" + format_number(low) + ", " +
                      format_number(high) + "]");
  }
}

TreatmentBatch Dataset::batch() const { return TreatmentBatch::from_columns(x, t, s); }

Supervised Dataset::supervised() const { return {batch(), y}; }

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  const std::size_t p = this->p();
  std::vector<double> xs;
  xs.reserve(rows.size() * p);
  for (std::size_t r : rows) {
    if (r >= size()) throw DimensionError("subset row out of range");
    const auto src = row_of(x, r);
    xs.insert(xs.end(), src.begin(), src.end());
    out.t.push_back(t[r]);
    if (has_dosage()) out.s.push_back(s[r]);
    out.y.push_back(y[r]);
  }
  out.x = Tensor({rows.size(), p}, std::move(xs));
  out.oracle = oracle;
  if (propensity) {
    const std::size_t arms = propensity->dim(1);
    Tensor prop({rows.size(), arms});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t a = 0; a < arms; ++a) prop.at(i, a) = propensity->at(rows[i], a);
    out.propensity = std::move(prop);
  }
  out.meta = meta;
  return out;
}

Dataset gen_synthetic(const GenOptions& options) {
  check_options(options);
  RngStream rng = RngStream(options.seed).split(0x73796e);
  const Interval interval = options.interval.value_or(Interval{0.0, options.h});
  std::vector<double> xs, ts, ys;
  const std::size_t budget = kMaxDrawsPerUnit * options.n;
  for (std::size_t draws = 0; ts.size() < options.n; ++draws) {
    if (draws >= budget) throw ContractError(too_few_accepted("synthetic", interval));
    std::array<double, 6> x;
    for (double& v : x) v = rng.uniform();
    const double t = sigmoid(synthetic_tilde_t(x) + rng.normal(0.0, 0.5)) * options.h;
    const double noise = rng.normal(0.0, 0.5);
    if (!interval.contains(t)) continue;
    xs.insert(xs.end(), x.begin(), x.end());
    ts.push_back(t);
    ys.push_back(synthetic_mu(x, t) + options.noise_scale * noise);
  }
  Dataset d = assemble("synthetic", options, 6, std::move(xs), std::move(ts), {}, std::move(ys));
  d.oracle = std::make_shared<SyntheticOracle>();
  d.meta.noise_variance = 0.25 * options.noise_scale * options.noise_scale;
  if (options.h != 1.0) {
    d.meta.notes.push_back("synthetic outcome consumes raw t while treatments span [0, h]");
  }
  return d;
}

DatasetSplit gen_synthetic(std::size_t n_train, std::size_t n_test, double h,
                           std::uint64_t seed) {
  GenOptions opt;
  opt.h = h;
  opt.n = n_train;
  opt.seed = mix64(seed ^ 0x747261696e);
  DatasetSplit split;
  split.train = gen_synthetic(opt);
  opt.n = n_test;
  opt.seed = mix64(seed ^ 0x74657374);
  split.test = gen_synthetic(opt);
  split.train.meta.seed = split.test.meta.seed = seed;
  return split;
}

CovariateGroups ihdp_groups(std::size_t dis1_size, std::size_t dis2_size) {
  if (dis1_size == 0 || dis2_size == 0) {
    throw ConfigError("ihdp layout needs at least one covariate in each noisy group");
  }
  CovariateGroups g;
  g.names = {"con", "dis1", "dis2"};
  g.members = {{0, 1, 2, 4, 5}, {3}, {}};
  std::size_t next = 6;
  for (std::size_t k = 1; k < dis1_size; ++k) g.members[1].push_back(next++);
  for (std::size_t k = 0; k < dis2_size; ++k) g.members[2].push_back(next++);
  return g;
}

Dataset gen_ihdp_style(const GenOptions& options, const IhdpOptions& ihdp) {
  check_options(options);
  const CovariateGroups groups = ihdp_groups(ihdp.dis1_size, ihdp.dis2_size);
  const std::size_t p = 5 + ihdp.dis1_size + ihdp.dis2_size;
  std::vector<bool> continuous(p, false);
  for (std::size_t i : groups.members[0]) continuous[i] = true;
  RngStream rng = RngStream(options.seed).split(0x69686470);

  auto draw_raw = [&](std::vector<double>& row) {
    for (std::size_t j = 0; j < p; ++j) row[j] = continuous[j] ? rng.normal() : rng.bernoulli(0.5);
  };
  // Standardisation statistics and c2 come from an initial pool of n units,
  // which is also the first batch of candidates.
  std::vector<std::vector<double>> pool(options.n, std::vector<double>(p));
  for (auto& row : pool) draw_raw(row);
  std::vector<double> centre(p, 0.0), spread(p, 0.0);
  for (const auto& row : pool)
    for (std::size_t j = 0; j < p; ++j) centre[j] += row[j];
  for (double& c : centre) c /= static_cast<double>(options.n);
  for (const auto& row : pool)
    for (std::size_t j = 0; j < p; ++j) spread[j] += (row[j] - centre[j]) * (row[j] - centre[j]);
  for (double& sd : spread) {
    sd = std::sqrt(sd / static_cast<double>(options.n));
    if (!(sd > 0.0)) sd = 1.0;
  }
  auto standardise = [&](std::vector<double>& row) {
    for (std::size_t j = 0; j < p; ++j) row[j] = (row[j] - centre[j]) / spread[j];
  };
  for (auto& row : pool) standardise(row);
  double c2 = 0.0;
  for (const auto& row : pool) c2 += group_mean(row, groups.members[2], 0.0);
  c2 /= static_cast<double>(options.n);

  const Interval interval = options.interval.value_or(Interval{0.0, options.h});
  std::vector<double> xs, ts;
  std::vector<double> row(p);
  const std::size_t budget = kMaxDrawsPerUnit * options.n;
  for (std::size_t draws = 0; ts.size() < options.n; ++draws) {
    if (draws >= budget) throw ContractError(too_few_accepted("ihdp", interval));
    if (draws < pool.size()) {
      row = pool[draws];
    } else {
      draw_raw(row);
      standardise(row);
    }
    const double x1 = row[0], x2 = row[1], x3 = row[2], x5 = row[4], x6 = row[5];
    const double tilde = 2.0 * x1 / (1.0 + x2) +
                         2.0 * std::max({x3, x5, x6}) / (0.2 + std::min({x3, x5, x6})) +
                         2.0 * std::tanh(5.0 * group_mean(row, groups.members[2], c2) - 4.0 +
                                         rng.normal(0.0, 0.5));
    const double t = sigmoid(tilde) * options.h;
    // The poles in the denominators can saturate the sigmoid to exactly 0 or h.
    if (!(t > 0.0 && t < options.h) || !interval.contains(t)) continue;
    xs.insert(xs.end(), row.begin(), row.end());
    ts.push_back(ihdp.binary ? (t > 0.5 * options.h ? 1.0 : 0.0) : t);
  }
  double c1 = 0.0;
  for (std::size_t i = 0; i < options.n; ++i) {
    c1 += group_mean(std::span<const double>(xs.data() + i * p, p), groups.members[1], 0.0);
  }
  c1 /= static_cast<double>(options.n);

  auto oracle = std::make_shared<IhdpOracle>(groups, options.h, c1, ihdp.binary);
  std::vector<double> ys(options.n);
  for (std::size_t i = 0; i < options.n; ++i) {
    ys[i] = oracle->at(std::span<const double>(xs.data() + i * p, p), ts[i]) +
            options.noise_scale * rng.normal(0.0, 0.5);
  }
  Dataset d = assemble("ihdp", options, p, std::move(xs), std::move(ts), {}, std::move(ys));
  d.oracle = std::move(oracle);
  d.meta.groups = groups;
  d.meta.constants = {{"c1", c1}, {"c2", c2}};
  d.meta.binary = ihdp.binary;
  d.meta.noise_variance = 0.25 * options.noise_scale * options.noise_scale;
  return d;
}

Dataset gen_news_style(const GenOptions& options, std::size_t p) {
  check_options(options);
  if (p == 0) throw ConfigError("news generator needs p >= 1");
  RngStream rng = RngStream(options.seed).split(0x6e657773);
  NewsParams v{unit_direction(p, rng), unit_direction(p, rng), unit_direction(p, rng)};
  const Interval interval = options.interval.value_or(Interval{0.0, options.h});
  std::vector<double> xs, ts, ys;
  std::vector<double> x(p);
  const std::size_t budget = kMaxDrawsPerUnit * options.n;
  for (std::size_t draws = 0; ts.size() < options.n; ++draws) {
    if (draws >= budget) throw ContractError(too_few_accepted("news", interval));
    // Sparse nonnegative word-count surrogate, normalised to unit length.
    double norm = 0.0;
    for (double& e : x) {
      e = rng.bernoulli(0.2) ? rng.exponential(1.0) : 0.0;
      norm += e * e;
    }
    if (norm == 0.0) {
      x[rng.below(p)] = 1.0;
      norm = 1.0;
    }
    norm = std::sqrt(norm);
    for (double& e : x) e /= norm;
    const double shape = std::max(std::abs(dot(v.v3, x) / (2.0 * dot(v.v2, x))), 1e-2);
    const double t = rng.beta(2.0, shape) * options.h;
    const double noise = rng.normal(0.0, std::sqrt(0.5));
    if (!interval.contains(t)) continue;
    xs.insert(xs.end(), x.begin(), x.end());
    ts.push_back(t);
    ys.push_back(news_response(v, x, t) + options.noise_scale * noise);
  }
  Dataset d = assemble("news", options, p, std::move(xs), std::move(ts), {}, std::move(ys));
  d.oracle = std::make_shared<NewsOracle>(std::move(v));
  d.meta.noise_variance = 0.5 * options.noise_scale * options.noise_scale;
  return d;
}

void TcgaDoseConfig::validate() const {
  if (n_treatments < 1 || n_treatments > 3) throw ConfigError("tcga supports 1 to 3 treatments");
  if (!(alpha >= 1.0)) throw ConfigError("tcga alpha must be at least 1");
  if (!(kappa >= 0.0)) throw ConfigError("tcga kappa must be nonnegative");
  if (p == 0) throw ConfigError("tcga p must be at least 1");
}

TcgaParams sample_tcga_params(const TcgaDoseConfig& config, RngStream& rng) {
  TcgaParams params;
  for (std::size_t a = 0; a < config.n_treatments; ++a) {
    params.v.push_back({unit_direction(config.p, rng), unit_direction(config.p, rng),
                        unit_direction(config.p, rng)});
  }
  return params;
}

double tcga_response(const TcgaParams& params, double c, std::size_t arm,
                     std::span<const double> x, double s) {
  const auto& v = params.v.at(arm);
  const double a1 = dot(v[0], x), a2 = dot(v[1], x), a3 = dot(v[2], x);
  switch (arm) {
    case 0: return c * (a1 + 12.0 * a2 * s - 12.0 * a3 * s * s);
    case 1: return c * (a1 + std::sin(kPi * (a2 / a3) * s));
    default: {
      const double b = 0.75 * a2 / a3;
      return c * (a1 + 12.0 * s * (s - b) * (s - b));
    }
  }
}

double tcga_optimal_dosage(const TcgaParams& params, std::size_t arm,
                           std::span<const double> x) {
  const auto& v = params.v.at(arm);
  const double a2 = dot(v[1], x), a3 = dot(v[2], x);
  switch (arm) {
    case 0: return a2 / (2.0 * a3);
    case 1: return a3 / (2.0 * a2);
    default: {
      const double b = 0.75 * a2 / a3;
      return b >= 0.75 ? b / 3.0 : 1.0;
    }
  }
}

double sample_dosage(double alpha, double s_star, RngStream& rng) {
  if (!(alpha >= 1.0)) throw ConfigError("dosage alpha must be at least 1");
  if (!(s_star > 0.0)) {
    // Mirrored draw, parameterised as though the optimum were 1.
    return 1.0 - rng.beta(alpha, 1.0);
  }
  const double s = std::clamp(s_star, 1e-3, 1.0);
  return rng.beta(alpha, (alpha - 1.0) / s + 2.0 - alpha);
}

Dataset gen_tcga_dosage(const GenOptions& options, const TcgaDoseConfig& config) {
  check_options(options);
  config.validate();
  if (options.interval) throw ConfigError("tcga dosages are not interval-restricted");
  RngStream rng = RngStream(options.seed).split(0x74636761);
  TcgaParams params = sample_tcga_params(config, rng);
  const std::size_t n = options.n, p = config.p, arms = config.n_treatments;
  std::vector<double> xs(n * p), ts(n), ss(n), ys(n);
  Tensor propensity({n, arms});
  std::vector<double> dosage(arms), logits(arms);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> x(xs.data() + i * p, p);
    double norm = 0.0;
    for (double& e : x) {
      e = std::abs(rng.normal());
      norm += e * e;
    }
    norm = std::sqrt(norm);
    for (double& e : x) e /= norm;
    for (std::size_t a = 0; a < arms; ++a) {
      dosage[a] = sample_dosage(config.alpha, tcga_optimal_dosage(params, a, x), rng);
      logits[a] = config.kappa * tcga_response(params, config.c, a, x, dosage[a]);
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t a = 0; a < arms; ++a) total += std::exp(logits[a] - top);
    for (std::size_t a = 0; a < arms; ++a) {
      propensity.at(i, a) = std::exp(logits[a] - top) / total;
    }
    const std::span<const double> weights(propensity.data() + i * arms, arms);
    const std::size_t arm = rng.categorical(weights);
    ts[i] = static_cast<double>(arm);
    ss[i] = dosage[arm];
    ys[i] = tcga_response(params, config.c, arm, x, ss[i]) +
            options.noise_scale * rng.normal(0.0, std::sqrt(0.2));
  }
  Dataset d = assemble("tcga", options, p, std::move(xs), std::move(ts), std::move(ss),
                       std::move(ys));
  d.oracle = std::make_shared<TcgaOracle>(std::move(params), config.c);
  d.propensity = std::move(propensity);
  d.meta.h = 1.0;
  d.meta.interval = Interval{0.0, 1.0};
  d.meta.n_arms = arms;
  d.meta.noise_variance = 0.2 * options.noise_scale * options.noise_scale;
  return d;
}

std::vector<double> true_response(const Dataset& data, const Tensor& x,
                                  std::span<const double> t, std::span<const double> s) {
  if (!data.oracle) {
    throw ContractError("dataset from '" + data.meta.generator + "' has no response oracle");
  }
  return data.oracle->evaluate(x, t, s);
}

void write_csv(const Dataset& data, std::ostream& out) {
  const std::size_t p = data.p();
  for (std::size_t j = 0; j < p; ++j) out << 'x' << (j + 1) << ',';
  out << 't' << (data.has_dosage() ? ",s" : "") << ",y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) out << format_number(data.x.at(i, j)) << ',';
    out << format_number(data.t[i]) << ',';
    if (data.has_dosage()) out << format_number(data.s[i]) << ',';
    out << format_number(data.y[i]) << '\n';
  }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(data, out);
  if (!out) throw IoError("failed writing " + path.string());
}

Dataset load_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    have_header = !trim(line).empty();
  }
  if (!have_header) throw SchemaError("empty file: expected a header x1..xp,t[,s],y");

  const std::vector<std::string> names = split_fields(line);
  std::map<std::size_t, std::size_t> x_columns;  // covariate number -> column
  std::optional<std::size_t> t_col, s_col, y_col;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::string name = trim(names[c]);
    auto claim = [&](std::optional<std::size_t>& slot) {
      if (slot) throw SchemaError("duplicate column '" + name + "'");
      slot = c;
    };
    if (name == "t") {
      claim(t_col);
    } else if (name == "s") {
      claim(s_col);
    } else if (name == "y") {
      claim(y_col);
    } else {
      std::size_t k = 0;
      const char* first = name.data() + 1;
      const char* last = name.data() + name.size();
      const bool numbered = name.size() > 1 && name[0] == 'x' &&
                            std::from_chars(first, last, k).ptr == last && k >= 1;
      if (!numbered) throw SchemaError("unknown column '" + name + "'");
      if (!x_columns.emplace(k, c).second) throw SchemaError("duplicate column '" + name + "'");
    }
  }
  if (!t_col) throw SchemaError("missing required column 't'");
  if (!y_col) throw SchemaError("missing required column 'y'");
  if (x_columns.empty()) throw SchemaError("missing covariate columns x1..xp");
  const std::size_t p = x_columns.size();
  if (x_columns.rbegin()->first != p) {
    throw SchemaError("covariate columns must be x1..x" + std::to_string(p) + " without gaps");
  }

  std::vector<double> xs, ts, ss, ys;
  std::vector<double> values(names.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != names.size()) {
      throw ParseError("expected " + std::to_string(names.size()) + " fields, found " +
                       std::to_string(fields.size()),
                       line_no);
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string f = trim(fields[c]);
      const char* last = f.data() + f.size();
      const auto [ptr, ec] = std::from_chars(f.data(), last, values[c]);
      if (f.empty() || ec != std::errc() || ptr != last || !std::isfinite(values[c])) {
        throw ParseError("column '" + trim(names[c]) + "': not a finite number: '" + f + "'",
                         line_no);
      }
    }
    for (const auto& [k, c] : x_columns) xs.push_back(values[c]);
    ts.push_back(values[*t_col]);
    if (s_col) ss.push_back(values[*s_col]);
    ys.push_back(values[*y_col]);
  }
  if (ts.empty()) throw SchemaError("no data rows after the header");

  Dataset d;
  d.x = Tensor({ts.size(), p}, std::move(xs));
  d.t = std::move(ts);
  d.s = std::move(ss);
  d.y = std::move(ys);
  d.meta.generator = "csv";
  const auto [lo, hi] = std::minmax_element(d.t.begin(), d.t.end());
  d.meta.interval = Interval{*lo, *hi};
  d.meta.h = *hi;
  return d;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return load_csv(in);
}

}  // namespace transtee
