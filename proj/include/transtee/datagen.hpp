// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transtee/covariate_groups.hpp"
#include "transtee/outcome_model.hpp"
#include "transtee/training.hpp"

namespace transtee {

struct Interval {
  double low = 0.0;
  double high = 1.0;

  bool contains(double t) const { return t >= low && t <= high; }
  void validate() const;
};

struct DatasetMeta {
  std::string generator;  // "synthetic", "ihdp", "news", "tcga", or "csv"
  double h = 1.0;
  Interval interval;  // treatment interval the rows were restricted to
  std::uint64_t seed = 0;
  std::optional<CovariateGroups> groups;
  bool binary = false;
  std::size_t n_arms = 1;          // treatment choices for tcga
  double noise_variance = 0.0;     // outcome noise actually added
  std::map<std::string, double> constants;  // generator constants such as c1, c2
  std::vector<std::string> notes;  // caveats worth carrying into reports
};

struct Dataset {
  Tensor x;               // [n, p]
  std::vector<double> t;  // treatment (arm index for tcga)
  std::vector<double> s;  // dosage, empty when absent
  std::vector<double> y;
  std::shared_ptr<const ResponseFunction> oracle;  // null for loaded data
  std::optional<Tensor> propensity;  // [n, arms], assignment probabilities (tcga)
  DatasetMeta meta;

  std::size_t size() const { return y.size(); }
  std::size_t p() const { return x.dim(1); }
  bool has_dosage() const { return !s.empty(); }
  TreatmentBatch batch() const;
  Supervised supervised() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

struct GenOptions {
  std::size_t n = 500;
  double h = 1.0;
  /// Keep only units whose treatment falls inside; draws are repeated until
  /// n units are accepted.
  std::optional<Interval> interval;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;  // multiplies the generator's noise; 0 gives noiseless data
};

Dataset gen_synthetic(const GenOptions& options);
/// Independent train/test draws with the default 500/200 sizes.
DatasetSplit gen_synthetic(std::size_t n_train, std::size_t n_test, double h, std::uint64_t seed);

struct IhdpOptions {
  std::size_t dis1_size = 10;  // outcome-only covariates
  std::size_t dis2_size = 10;  // treatment-only covariates
  bool binary = false;         // threshold treatments at h/2
};

Dataset gen_ihdp_style(const GenOptions& options, const IhdpOptions& ihdp = {});

/// Standard groups for the IHDP-style layout, 0-based.
CovariateGroups ihdp_groups(std::size_t dis1_size = 10, std::size_t dis2_size = 10);

/// Unit-norm direction with N(0,1) components.
std::vector<double> unit_direction(std::size_t p, RngStream& rng);

struct NewsParams {
  std::vector<double> v1, v2, v3;
};

/// exp(v2'x / v3'x - 0.3) clamped to [-2, 2].
double news_clamped_prime(const NewsParams& v, std::span<const double> x);
double news_response(const NewsParams& v, std::span<const double> x, double t);

class NewsOracle final : public ResponseFunction {
 public:
  explicit NewsOracle(NewsParams params) : params_(std::move(params)) {}
  std::vector<double> evaluate(const Tensor& x, std::span<const double> t,
                               std::span<const double> s) const override;
  const NewsParams& params() const noexcept { return params_; }

 private:
  NewsParams params_;
};

Dataset gen_news_style(const GenOptions& options, std::size_t p = 50);

struct TcgaDoseConfig {
  std::size_t n_treatments = 3;
  double kappa = 2.0;
  double alpha = 2.0;
  double c = 10.0;
  std::size_t p = 100;

  void validate() const;
};

/// Per-treatment unit-norm parameter vectors v1, v2, v3.
struct TcgaParams {
  std::vector<std::array<std::vector<double>, 3>> v;
};

TcgaParams sample_tcga_params(const TcgaDoseConfig& config, RngStream& rng);
/// f_t(x, s) for arm t (0-based).
double tcga_response(const TcgaParams& params, double c, std::size_t arm,
                     std::span<const double> x, double s);
/// Unclipped optimal dosage for arm t.
double tcga_optimal_dosage(const TcgaParams& params, std::size_t arm,
                           std::span<const double> x);
/// Dosage draw for optimum s_star with selection bias alpha.
double sample_dosage(double alpha, double s_star, RngStream& rng);

class TcgaOracle final : public ResponseFunction {
 public:
  TcgaOracle(TcgaParams params, double c) : params_(std::move(params)), c_(c) {}
  /// t holds arm indices; s the dosages.
  std::vector<double> evaluate(const Tensor& x, std::span<const double> t,
                               std::span<const double> s) const override;
  const TcgaParams& params() const noexcept { return params_; }

 private:
  TcgaParams params_;
  double c_;
};

Dataset gen_tcga_dosage(const GenOptions& options, const TcgaDoseConfig& config = {});

/// Noiseless response of the dataset's generator at the given rows.
std::vector<double> true_response(const Dataset& data, const Tensor& x,
                                  std::span<const double> t, std::span<const double> s = {});

void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::filesystem::path& path);
/// Header x1..xp, t, optional s, y. The result carries no oracle.
Dataset load_csv(std::istream& in);
Dataset load_csv(const std::filesystem::path& path);

}  // namespace transtee
