// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transtee/datagen.hpp"
#include "transtee/outcome_model.hpp"

namespace transtee {

inline constexpr std::size_t kDefaultGridSize = 65;

/// Mean over units of the squared response error averaged (trapezoid rule,
/// uniform weight) over `interval`, or the dataset's own interval.
double amse(const ResponseFunction& model, const Dataset& data,
            std::size_t grid_size = kDefaultGridSize,
            std::optional<Interval> interval = std::nullopt);

/// |estimated ATE - true ATE| on a binary-treatment dataset.
double ate_error(const ResponseFunction& model, const Dataset& data);

/// Squared pairwise effect errors over each unit's K most likely treatments.
/// `propensities` is [N, arms]; the weighted form scales each pair by
/// p(t|x) p(t'|x). Dosages, when present, stay at their factual values.
double pehe_at_k(const ResponseFunction& model, const Dataset& data, const Tensor& propensities,
                 std::size_t k, bool weighted);

/// amse over dosages in [0, 1], averaged over all treatments.
double amse_dosage(const ResponseFunction& model, const Dataset& data,
                   std::size_t grid_size = kDefaultGridSize);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::optional<double> std;  // present iff n_repeats > 1
  std::size_t n_repeats = 1;
  std::string generator;
  double h_train_low = 0.0;
  double h_train_high = 1.0;
  double h_test_high = 1.0;
  std::uint64_t seed = 0;
  std::string config_hash;

  /// Mean and sample standard deviation of per-repeat values.
  static MetricReport aggregate(std::string metric, std::span<const double> values);
};

inline constexpr const char* kMetricCsvHeader =
    "metric,value,std,n_repeats,generator,h_train_low,h_train_high,h_test_high,seed,config_hash";

void write_reports_csv(std::span<const MetricReport> reports, std::ostream& out);

}  // namespace transtee
