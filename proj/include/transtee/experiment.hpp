// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "transtee/baselines.hpp"
#include "transtee/datagen.hpp"
#include "transtee/metrics.hpp"
#include "transtee/plots.hpp"
#include "transtee/training.hpp"

namespace transtee {

struct GeneratorSpec {
  std::string name = "synthetic";  // synthetic, ihdp, news, tcga
  std::size_t n_train = 500;
  std::size_t n_test = 200;
  std::optional<double> h;  // defaults to test.high
  Interval train{0.0, 1.0};
  Interval test{0.0, 1.0};
  IhdpOptions ihdp;
  std::size_t news_p = 50;
  TcgaDoseConfig tcga;

  double scale() const { return h.value_or(test.high); }
  /// Covariate count of the generated data.
  std::size_t covariates() const;
  bool has_dosage() const { return name == "tcga"; }
  void validate() const;
};

enum class ModelKind { kTransTEE, kMlp, kDiscretized };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& text);

struct ModelSpec {
  ModelKind kind = ModelKind::kTransTEE;
  std::size_t d_model = 10;
  std::size_t n_heads = 2;
  std::size_t n_layers = 1;
  std::size_t head_hidden = 0;
  std::size_t n_treatments = 1;
  std::vector<std::size_t> hidden = {50, 50};  // mlp and discretized
  std::size_t delta = 5;                       // discretized sub-intervals

  void validate() const;
};

struct ExperimentConfig {
  std::string name = "experiment";
  GeneratorSpec generator;
  ModelSpec model;
  TrainConfig train;
  std::size_t n_repeats = 10;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "results";
  std::size_t grid_size = kDefaultGridSize;
  bool plot_adrf = true;
  bool export_attention = true;
  std::size_t adrf_samples = 200;
  std::size_t adrf_points = 101;

  void validate() const;
  /// Canonical INI text; parse_config(to_ini()) reproduces the config.
  std::string to_ini() const;
  /// FNV-1a of to_ini() without the output directory, as 16 hex digits.
  std::string hash() const;
};

/// Strict INI: unknown sections or keys are ConfigErrors, syntax errors are
/// ParseErrors with the line number.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Builds an untrained model for data with `p` covariates.
std::unique_ptr<OutcomeModel> make_model(const ModelSpec& spec, const GeneratorSpec& gen,
                                         Regularizer regularizer, RngStream rng);

/// Exact trainable scalar count of the outcome network.
std::size_t count_params(const ModelSpec& spec, const GeneratorSpec& gen);

/// Train and test draws for one repeat. Both come from a single generator
/// call so they share every sampled generator parameter.
DatasetSplit generate_split(const GeneratorSpec& spec, std::uint64_t seed);

struct RepeatResult {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok or failed
  std::string message;
  std::map<std::string, double> metrics;
  TrainHistory history;
  std::unique_ptr<OutcomeModel> model;
  std::optional<DatasetSplit> data;

  bool ok() const { return status == "ok"; }
};

/// Generates, trains and evaluates repeat `r` with seed config.seed + r.
/// Keeps the model and data when `keep` is set.
RepeatResult run_repeat(const ExperimentConfig& config, std::size_t r, bool keep = false);

struct ExperimentResult {
  std::vector<MetricReport> reports;
  std::vector<RepeatResult> repeats;
  std::size_t failed = 0;
  std::vector<std::filesystem::path> artifacts;

  /// False when more than a fifth of the repeats aborted.
  bool acceptable() const { return failed * 5 <= repeats.size(); }
};

/// Runs all repeats on up to `jobs` threads, aggregates, and writes
/// results.csv, repeats.csv, config.ini, plus history.csv, model.ckpt and the
/// requested plots for the first successful repeat, to config.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t jobs = 1);

/// Re-renders adrf.svg and attention.svg from the CSVs of a finished run.
std::vector<std::filesystem::path> replot(const std::filesystem::path& run_dir);

}  // namespace transtee
