// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "transtee/errors.hpp"

namespace transtee {
namespace {

void require_oracle(const Dataset& data, const char* metric) {
  if (!data.oracle) throw ContractError(std::string(metric) + " needs a dataset with an oracle");
  if (data.size() == 0) throw ContractError(std::string(metric) + " needs a nonempty dataset");
}

std::vector<double> grid(double low, double high, std::size_t size) {
  if (size < 2) throw ContractError("metric grid needs at least 2 points");
  std::vector<double> g(size);
  for (std::size_t k = 0; k < size; ++k) {
    g[k] = low + (high - low) * static_cast<double>(k) / static_cast<double>(size - 1);
  }
  g.back() = high;
  return g;
}

// Trapezoid weights of a uniform grid normalised to sum to 1.
std::vector<double> trapezoid_weights(std::size_t size) {
  std::vector<double> w(size, 1.0 / static_cast<double>(size - 1));
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

double sq_error_sum(const ResponseFunction& model, const ResponseFunction& truth, const Tensor& x,
                    std::span<const double> t, std::span<const double> s) {
  const std::vector<double> a = model.evaluate(x, t, s);
  const std::vector<double> b = truth.evaluate(x, t, s);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total;
}

}  // namespace

double amse(const ResponseFunction& model, const Dataset& data, std::size_t grid_size,
            std::optional<Interval> interval) {
  require_oracle(data, "amse");
  const Interval range = interval.value_or(data.meta.interval);
  range.validate();
  const std::vector<double> ts = grid(range.low, range.high, grid_size);
  const std::vector<double> w = trapezoid_weights(grid_size);
  const std::size_t n = data.size();
  std::vector<double> column(n);
  double total = 0.0;
  for (std::size_t k = 0; k < grid_size; ++k) {
    std::fill(column.begin(), column.end(), ts[k]);
    total += w[k] * sq_error_sum(model, *data.oracle, data.x, column, {});
  }
  return total / static_cast<double>(n);
}

double ate_error(const ResponseFunction& model, const Dataset& data) {
  require_oracle(data, "ate_error");
  if (!data.meta.binary) throw ContractError("ate_error needs a binary-treatment dataset");
  const std::size_t n = data.size();
  const std::vector<double> ones(n, 1.0), zeros(n, 0.0);
  auto ate = [&](const ResponseFunction& f) {
    const std::vector<double> y1 = f.evaluate(data.x, ones, {});
    const std::vector<double> y0 = f.evaluate(data.x, zeros, {});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += y1[i] - y0[i];
    return total / static_cast<double>(n);
  };
  return std::abs(ate(model) - ate(*data.oracle));
}

double pehe_at_k(const ResponseFunction& model, const Dataset& data, const Tensor& propensities,
                 std::size_t k, bool weighted) {
  require_oracle(data, "pehe_at_k");
  if (k < 2) throw ContractError("pehe_at_k needs K >= 2");
  const std::size_t n = data.size();
  if (propensities.rank() != 2 || propensities.dim(0) != n) {
    throw DimensionError("pehe_at_k propensities must be [N, arms]");
  }
  const std::size_t arms = propensities.dim(1);
  if (k > arms) throw ContractError("pehe_at_k K exceeds the number of treatments");

  // Responses for every unit under every arm, factual dosage held fixed.
  std::vector<std::vector<double>> est(arms), truth(arms);
  std::vector<double> column(n);
  const std::span<const double> dose = data.s;
  for (std::size_t a = 0; a < arms; ++a) {
    std::fill(column.begin(), column.end(), static_cast<double>(a));
    est[a] = model.evaluate(data.x, column, dose);
    truth[a] = data.oracle->evaluate(data.x, column, dose);
  }

  const double pairs = static_cast<double>(k * (k - 1) / 2);
  std::vector<std::size_t> order(arms);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return propensities.at(i, a) > propensities.at(i, b);
    });
    double unit = 0.0;
    for (std::size_t u = 0; u < k; ++u) {
      for (std::size_t v = u + 1; v < k; ++v) {
        const std::size_t a = order[u], b = order[v];
        const double err = (est[a][i] - est[b][i]) - (truth[a][i] - truth[b][i]);
        const double weight = weighted ? propensities.at(i, a) * propensities.at(i, b) : 1.0;
        unit += weight * err * err;
      }
    }
    total += unit / pairs;
  }
  return total / static_cast<double>(n);
}

double amse_dosage(const ResponseFunction& model, const Dataset& data, std::size_t grid_size) {
  require_oracle(data, "amse_dosage");
  if (!data.has_dosage()) throw ContractError("amse_dosage needs a dataset with dosages");
  const std::vector<double> ss = grid(0.0, 1.0, grid_size);
  const std::vector<double> w = trapezoid_weights(grid_size);
  const std::size_t n = data.size();
  const std::size_t arms = std::max<std::size_t>(data.meta.n_arms, 1);
  std::vector<double> t_col(n), s_col(n);
  double total = 0.0;
  for (std::size_t a = 0; a < arms; ++a) {
    std::fill(t_col.begin(), t_col.end(), static_cast<double>(a));
    for (std::size_t k = 0; k < grid_size; ++k) {
      std::fill(s_col.begin(), s_col.end(), ss[k]);
      total += w[k] * sq_error_sum(model, *data.oracle, data.x, t_col, s_col);
    }
  }
  return total / static_cast<double>(n * arms);
}

MetricReport MetricReport::aggregate(std::string metric, std::span<const double> values) {
  if (values.empty()) throw ContractError("cannot aggregate zero repeats");
  MetricReport r;
  r.metric = std::move(metric);
  r.n_repeats = values.size();
  const double n = static_cast<double>(values.size());
  r.value = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.value) * (v - r.value);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_reports_csv(std::span<const MetricReport> reports, std::ostream& out) {
  out << kMetricCsvHeader << '\n';
  for (const MetricReport& r : reports) {
    out << r.metric << ',' << num(r.value) << ',' << (r.std ? num(*r.std) : "") << ','
        << r.n_repeats << ',' << r.generator << ',' << num(r.h_train_low) << ','
        << num(r.h_train_high) << ',' << num(r.h_test_high) << ',' << r.seed << ','
        << r.config_hash << '\n';
  }
}

}  // namespace transtee
