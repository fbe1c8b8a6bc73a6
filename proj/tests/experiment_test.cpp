// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>

#include "transtee/errors.hpp"
#include "transtee/experiment.hpp"
#include "transtee/transtee_model.hpp"

namespace transtee {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("transtee_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ExperimentConfig tiny(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.n_repeats = 1;
  c.generator.n_train = 60;
  c.generator.n_test = 30;
  c.train.batch_size = 30;
  c.train.total_iterations = 100;
  c.train.history_every = 25;
  c.grid_size = 9;
  c.adrf_points = 11;
  c.adrf_samples = 20;
  c.output_dir = scratch(name);
  return c;
}

std::size_t count_tag(const boost::property_tree::ptree& node, const std::string& tag) {
  std::size_t n = 0;
  for (const auto& [name, child] : node) {
    if (name == tag) ++n;
    n += count_tag(child, tag);
  }
  return n;
}

boost::property_tree::ptree read_svg(const fs::path& path) {
  boost::property_tree::ptree tree;
  boost::property_tree::read_xml(path.string(), tree);
  return tree;
}

TEST(ConfigTest, ParsesAllSectionsAndRoundTrips) {
  const ExperimentConfig c = parse(
      "[experiment]\nname = demo\nrepeats = 3\nseed = 9\noutput = out/demo\n"
      "[generator]\nname = synthetic\nh = 2\ntrain_low = 0.1\ntrain_high = 2\ntest_high = 2\n"
      "[model]\nkind = discretized\nhidden = 20, 10\ndelta = 8\n"
      "[train]\nbatch_size = 64\nlearning_rate = 0.005\nschedule = constant\niterations = 40\n");
  EXPECT_EQ(c.name, "demo");
  EXPECT_EQ(c.n_repeats, 3u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.output_dir, fs::path("out/demo"));
  EXPECT_DOUBLE_EQ(c.generator.scale(), 2.0);
  EXPECT_DOUBLE_EQ(c.generator.train.low, 0.1);
  EXPECT_EQ(c.model.kind, ModelKind::kDiscretized);
  EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{20, 10}));
  EXPECT_EQ(c.model.delta, 8u);
  EXPECT_EQ(c.train.schedule, Schedule::kConstant);
  EXPECT_EQ(c.train.total_iterations, 40u);

  const ExperimentConfig again = parse(c.to_ini());
  EXPECT_EQ(again.to_ini(), c.to_ini());
  EXPECT_EQ(again.hash(), c.hash());
  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(moved.hash(), c.hash());
  moved.seed = 10;
  EXPECT_NE(moved.hash(), c.hash());
}

TEST(ConfigTest, GeneratorSpecificKeys) {
  const ExperimentConfig news = parse("[generator]\nname = news\np = 12\n");
  EXPECT_EQ(news.generator.news_p, 12u);
  EXPECT_EQ(news.generator.covariates(), 12u);
  const ExperimentConfig tcga =
      parse("[generator]\nname = tcga\np = 7\nn_treatments = 2\nkappa = 0\n[model]\nkind = mlp\n");
  EXPECT_EQ(tcga.generator.tcga.p, 7u);
  EXPECT_EQ(tcga.generator.tcga.n_treatments, 2u);
  EXPECT_THROW(parse("[generator]\np = 7\n"), ConfigError);
  EXPECT_THROW(parse("[generator]\nn_treatments = 2\n"), ConfigError);
}

TEST(ConfigTest, RejectsUnknownOrInvalidInput) {
  EXPECT_THROW(parse("[experiment]\nrepeats = 0\n"), ConfigError);
  EXPECT_THROW(parse("[experiment]\ncolour = red\n"), ConfigError);
  EXPECT_THROW(parse("[extras]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse("stray = 1\n"), ConfigError);
  EXPECT_THROW(parse("[train]\nlearning_rate = fast\n"), ConfigError);
  EXPECT_THROW(parse("[train]\niterations = -3\n"), ConfigError);
  EXPECT_THROW(parse("[generator]\ntrain_low = 2\ntrain_high = 1\n"), ConfigError);
  EXPECT_THROW(parse("[model]\nkind = mlp\n[train]\nregularizer = tr\n"), ConfigError);
  EXPECT_THROW(parse("[model]\nkind = forest\n"), ConfigError);
  EXPECT_THROW(parse("[model]\nn_treatments = 2\n"), ConfigError);
  try {
    parse("[train]\nbatch_size = 5\nbatch_size = 6\n");
    FAIL() << "duplicate key accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    parse("[experiment]\nname = a\n[broken\n");
    FAIL() << "malformed section accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(CountParamsTest, AffineLayerAndTreatmentIndependence) {
  GeneratorSpec gen;
  gen.name = "news";
  gen.news_p = 9;
  ModelSpec affine;
  affine.kind = ModelKind::kMlp;
  affine.hidden = {};
  // Input is x plus t: an affine map from 10 inputs to one output.
  EXPECT_EQ(count_params(affine, gen), 11u);

  ModelSpec tt;
  const std::size_t one = count_params(tt, gen);
  for (std::size_t n : {2u, 3u}) {
    tt.n_treatments = n;
    EXPECT_EQ(count_params(tt, gen), one) << n << " treatments";
  }
}

TEST(CountParamsTest, DiscretizedGrowsAffinelyInDelta) {
  GeneratorSpec gen;
  ModelSpec d;
  d.kind = ModelKind::kDiscretized;
  std::vector<double> counts;
  for (std::size_t delta : {2u, 4u, 8u}) {
    d.delta = delta;
    counts.push_back(static_cast<double>(count_params(d, gen)));
  }
  EXPECT_LT(counts[0], counts[1]);
  EXPECT_DOUBLE_EQ((counts[2] - counts[1]) / 4.0, (counts[1] - counts[0]) / 2.0);
}

TEST(SplitTest, IntervalsSizesAndSharedOracle) {
  GeneratorSpec g;
  g.h = 2.0;
  g.train = {0.1, 2.0};
  g.test = {0.0, 2.0};
  const DatasetSplit s = generate_split(g, 5);
  EXPECT_EQ(s.train.size(), 500u);
  EXPECT_EQ(s.test.size(), 200u);
  for (double t : s.train.t) EXPECT_GE(t, 0.1);
  EXPECT_DOUBLE_EQ(s.test.meta.interval.low, 0.0);
  EXPECT_DOUBLE_EQ(s.train.meta.interval.low, 0.1);

  GeneratorSpec tc;
  tc.name = "tcga";
  tc.n_train = 40;
  tc.n_test = 10;
  tc.tcga.p = 6;
  const DatasetSplit t = generate_split(tc, 6);
  EXPECT_EQ(t.train.oracle, t.test.oracle);
  EXPECT_EQ(t.test.propensity->dim(0), 10u);
  EXPECT_EQ(generate_split(tc, 6).test.y, t.test.y);
}

TEST(AdrfTest, SvgHasTwoPolylinesAndOracleCurvesCoincide) {
  GeneratorSpec g;
  g.n_train = 50;
  g.n_test = 50;
  const DatasetSplit s = generate_split(g, 7);
  const fs::path dir = scratch("adrf");
  const std::vector<double> grid = treatment_grid(0.0, 1.0, 41);
  const AdrfCurve curve = plot_adrf(*s.test.oracle, s.test, 30, grid, dir / "adrf.svg");
  const auto svg = read_svg(dir / "adrf.svg");
  EXPECT_EQ(count_tag(svg, "polyline"), 2u);
  ASSERT_EQ(curve.truth.size(), grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EXPECT_LT(std::abs(curve.truth[k] - curve.estimate[k]), 1e-9);
  }
  std::stringstream csv;
  curve.write_csv(csv);
  const AdrfCurve back = AdrfCurve::read_csv(csv);
  EXPECT_EQ(back.t, curve.t);
  EXPECT_EQ(back.estimate, curve.estimate);
  EXPECT_THROW(plot_adrf(*s.test.oracle, s.test, 30, grid, "/proc/transtee/adrf.svg"), IoError);
}

TEST(AdrfTest, DiscretizedCurveHasFlatSegments) {
  GeneratorSpec g;
  g.n_train = 50;
  g.n_test = 50;
  const DatasetSplit s = generate_split(g, 8);
  for (std::size_t delta : {3u, 5u}) {
    DiscretizedConfig c;
    c.p = 6;
    c.delta = delta;
    c.hidden = {8};
    const DiscretizedBaseline model(c, RngStream(delta));
    const AdrfCurve curve =
        compute_adrf(ModelResponse(model), s.test, 20, treatment_grid(0.0, 1.0, 101));
    EXPECT_GE(count_flat_segments(curve.estimate), delta);
  }
  const std::vector<double> steps{1, 1, 2, 3, 3, 3, 4};
  EXPECT_EQ(count_flat_segments(steps), 2u);
}

TEST(AttentionExportTest, GroupSumsUniformHeatmapAndRoundTrip) {
  // Uniform weights over 25 covariates: [B, n, p] per layer and head.
  const std::vector<Tensor> uniform{Tensor({4, 1, 25}, 1.0 / 25.0), Tensor({4, 1, 25}, 0.04)};
  const fs::path dir = scratch("attention");
  const AttentionExport e = export_attention(uniform, ihdp_groups(), dir);
  double total = 0.0;
  for (double w : e.group_sums) total += w;
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_NEAR(e.group_sums[0], 0.2, 1e-12);

  const auto svg = read_svg(dir / "attention.svg");
  std::set<std::string> fills;
  for (const auto& [name, node] : svg.get_child("svg")) {
    if (name == "rect" && node.get<std::string>("<xmlattr>.class", "") == "cell") {
      fills.insert(node.get<std::string>("<xmlattr>.fill"));
    }
  }
  EXPECT_EQ(fills.size(), 1u);

  std::ifstream in(dir / "attention.csv");
  const AttentionExport back = AttentionExport::read_csv(in);
  EXPECT_EQ(back.per_covariate, e.per_covariate);
  EXPECT_EQ(back.group_names, e.group_names);

  const AttentionExport plain = export_attention(uniform, std::nullopt, dir, "plain");
  EXPECT_TRUE(plain.group_names.empty());
  EXPECT_EQ(plain.per_covariate.size(), 25u);
}

TEST(RunExperimentTest, SmokeRunWritesEveryArtifact) {
  const ExperimentConfig c = tiny("smoke");
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.failed, 0u);
  EXPECT_TRUE(r.acceptable());
  for (const char* file : {"results.csv", "repeats.csv", "config.ini", "history.csv", "model.ckpt",
                           "adrf.csv", "adrf.svg", "attention.csv", "attention.svg"}) {
    EXPECT_TRUE(fs::exists(c.output_dir / file)) << file;
  }
  const std::string results = slurp(c.output_dir / "results.csv");
  EXPECT_EQ(results.substr(0, results.find('\n')), kMetricCsvHeader);
  EXPECT_NE(results.find("\namse,"), std::string::npos);
  EXPECT_EQ(load_config(c.output_dir / "config.ini").hash(), c.hash());
  EXPECT_EQ(replot(c.output_dir).size(), 2u);
  // The saved checkpoint restores the trained model.
  ExperimentConfig reload = c;
  auto model = make_model(c.model, c.generator, c.train.regularizer, RngStream(99));
  std::ifstream ckpt(c.output_dir / "model.ckpt");
  model->load(ckpt);
  EXPECT_EQ(model->params().scalar_count(), count_params(c.model, c.generator));
}

TEST(RunExperimentTest, DeterministicAcrossRunsAndJobCounts) {
  ExperimentConfig a = tiny("det_a");
  a.n_repeats = 3;
  ExperimentConfig b = a;
  b.output_dir = scratch("det_b");
  run_experiment(a, 1);
  run_experiment(b, 3);
  EXPECT_EQ(slurp(a.output_dir / "results.csv"), slurp(b.output_dir / "results.csv"));
  EXPECT_EQ(slurp(a.output_dir / "repeats.csv"), slurp(b.output_dir / "repeats.csv"));
}

TEST(RunExperimentTest, AbortedRepeatsAreCountedNotAggregated) {
  ExperimentConfig c = tiny("diverge");
  c.n_repeats = 2;
  c.train.divergence_limit = 1e-9;
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.failed, 2u);
  EXPECT_FALSE(r.acceptable());
  ASSERT_EQ(r.reports.size(), 1u);
  EXPECT_EQ(r.reports[0].metric, "failed_repeats");
  EXPECT_EQ(r.reports[0].value, 2.0);
  EXPECT_NE(slurp(c.output_dir / "repeats.csv").find(",failed,"), std::string::npos);
}

TEST(RunExperimentTest, OtherGeneratorsReportTheirMetrics) {
  ExperimentConfig binary = tiny("binary");
  binary.generator.name = "ihdp";
  binary.generator.ihdp.binary = true;
  binary.train.regularizer = Regularizer::kTR;
  EXPECT_EQ(run_experiment(binary).reports.front().metric, "ate_error");

  ExperimentConfig dose = tiny("dose");
  dose.generator.name = "tcga";
  dose.generator.tcga.p = 6;
  dose.model.kind = ModelKind::kMlp;
  // Outcomes here reach 1e6 when v3'x is close to zero.
  dose.train.divergence_limit = 1e15;
  const ExperimentResult r = run_experiment(dose);
  std::vector<std::string> names;
  for (const MetricReport& m : r.reports) names.push_back(m.metric);
  EXPECT_EQ(names, (std::vector<std::string>{"amse_dosage", "upehe@2", "upehe@3", "wpehe@2",
                                             "wpehe@3", "failed_repeats"}));
}

}  // namespace
}  // namespace transtee
