// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transtee/covariate_groups.hpp"
#include "transtee/datagen.hpp"
#include "transtee/outcome_model.hpp"

namespace transtee {

/// Average dose-response curves on a treatment grid.
struct AdrfCurve {
  std::vector<double> t;
  std::vector<double> truth;     // empty when the dataset has no oracle
  std::vector<double> estimate;

  void write_csv(std::ostream& out) const;
  static AdrfCurve read_csv(std::istream& in);
  void write_svg(std::ostream& out) const;
};

/// Uniform grid of `points` treatments over [low, high].
std::vector<double> treatment_grid(double low, double high, std::size_t points);

/// mu_hat(t) = mean over the first `x_sample_count` rows of mu_hat(x, t).
AdrfCurve compute_adrf(const ResponseFunction& model, const Dataset& data,
                       std::size_t x_sample_count, std::span<const double> t_grid);

/// compute_adrf plus an SVG with one polyline per curve at `out_path`.
AdrfCurve plot_adrf(const ResponseFunction& model, const Dataset& data,
                    std::size_t x_sample_count, std::span<const double> t_grid,
                    const std::filesystem::path& out_path);

/// Maximal runs of two or more equal consecutive values.
std::size_t count_flat_segments(std::span<const double> values, double tol = 0.0);

struct AttentionExport {
  std::vector<double> per_covariate;
  std::vector<std::string> group_names;  // empty when no groups were given
  std::vector<double> group_sums;

  void write_csv(std::ostream& out) const;
  static AttentionExport read_csv(std::istream& in);
  void write_svg(std::ostream& out) const;
};

/// Summarises cross-attention weights and writes `<stem>.csv` and
/// `<stem>.svg` under `out_dir`.
AttentionExport export_attention(std::span<const Tensor> cross_weights,
                                 const std::optional<CovariateGroups>& groups,
                                 const std::filesystem::path& out_dir,
                                 const std::string& stem = "attention");

}  // namespace transtee
