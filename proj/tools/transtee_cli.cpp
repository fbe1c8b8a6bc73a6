// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "transtee/errors.hpp"
#include "transtee/experiment.hpp"

namespace {

using namespace transtee;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::optional<std::size_t> repeats;
};

void configure_logging() {
  const char* level = std::getenv("TRANSTEE_LOG");
  const std::string text = level ? level : "info";
  if (text == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else if (text == "info") {
    spdlog::set_level(spdlog::level::info);
  } else {
    spdlog::set_level(spdlog::level::info);
    spdlog::warn("TRANSTEE_LOG='{}' not recognised; using info", text);
  }
}

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = load_config(o.config);
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.repeats) c.n_repeats = *o.repeats;
  c.validate();
  return c;
}

int report(const ExperimentResult& result) {
  for (const MetricReport& r : result.reports) {
    std::cout << r.metric << " = " << r.value;
    if (r.std) std::cout << " +- " << *r.std;
    std::cout << '\n';
  }
  if (!result.acceptable()) {
    std::cerr << result.failed << " of " << result.repeats.size() << " repeats aborted\n";
    return 3;
  }
  return 0;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_csv(d, path);
  std::cout << "wrote " << path.string() << " (" << d.size() << " rows)\n";
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Transformer treatment-effect estimation experiments"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* cfg = cmd->add_option("--config", o.config, "experiment config (INI)");
    if (needs_config) cfg->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "base seed");
  };

  auto* generate = app.add_subcommand("generate", "write train.csv and test.csv for one repeat");
  add_common(generate, true);
  auto* train = app.add_subcommand("train", "train and evaluate a single run");
  add_common(train, true);
  auto* experiment = app.add_subcommand("experiment", "run every repeat and aggregate");
  add_common(experiment, true);
  experiment->add_option("--jobs", o.jobs, "concurrent repeats")->check(CLI::PositiveNumber);
  experiment->add_option("--repeats", o.repeats, "override the repeat count")
      ->check(CLI::PositiveNumber);
  auto* plot = app.add_subcommand("plot", "re-render SVGs from a finished run directory");
  plot->add_option("--out", o.out, "run directory")->required()->check(CLI::ExistingDirectory);
  auto* params = app.add_subcommand("params", "count trainable parameters");
  params->add_option("--config", o.config, "experiment config (INI)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      const ExperimentConfig c = load(o);
      const DatasetSplit split = generate_split(c.generator, c.seed);
      std::filesystem::create_directories(c.output_dir);
      write_dataset(split.train, c.output_dir / "train.csv");
      write_dataset(split.test, c.output_dir / "test.csv");
      return 0;
    }
    if (*train) {
      o.repeats = 1;
      return report(run_experiment(load(o)));
    }
    if (*experiment) {
      return report(run_experiment(load(o), o.jobs));
    }
    if (*plot) {
      for (const auto& path : replot(o.out)) std::cout << "wrote " << path.string() << '\n';
      return 0;
    }
    if (*params) {
      const ExperimentConfig c = load(o);
      std::cout << count_params(c.model, c.generator) << '\n';
      return 0;
    }
  } catch (const transtee::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
