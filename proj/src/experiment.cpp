// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <spdlog/spdlog.h>

#include "transtee/errors.hpp"
#include "transtee/transtee_model.hpp"

namespace transtee {
namespace {

constexpr std::uint64_t kModelStream = 0x6d6f64656c;  // "model"

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool continuous_outcome(const GeneratorSpec& g) {
  return g.name != "tcga" && !(g.name == "ihdp" && g.ihdp.binary);
}

// --- value parsing ---------------------------------------------------------

[[noreturn]] void bad_value(const std::string& key, const std::string& text, const char* want) {
  throw ConfigError(key + ": expected " + want + ", got '" + text + "'");
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(key, text, "a nonnegative integer");
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(key, text, "a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  bad_value(key, text, "true or false");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first == std::string::npos) bad_value(key, text, "a comma-separated list of widths");
    out.push_back(parse_integer<std::size_t>(key, item.substr(first, last - first + 1)));
  }
  if (out.empty()) bad_value(key, text, "a comma-separated list of widths");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Keys that depend on the generator name are applied after all are read.
struct Pending {
  std::optional<std::size_t> p;
  std::optional<std::size_t> n_treatments;
};

using Setter = std::function<void(ExperimentConfig&, Pending&, const std::string&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  using C = ExperimentConfig;
  using P = Pending;
  using S = std::string;
  auto sz = [](std::size_t C::*field) -> Setter {
    return [field](C& c, P&, const S& k, const S& v) { c.*field = parse_integer<std::size_t>(k, v); };
  };
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"experiment",
       {
           {"name", [](C& c, P&, const S&, const S& v) { c.name = v; }},
           {"repeats", sz(&C::n_repeats)},
           {"seed", [](C& c, P&, const S& k, const S& v) { c.seed = parse_integer<std::uint64_t>(k, v); }},
           {"output", [](C& c, P&, const S&, const S& v) { c.output_dir = v; }},
           {"grid_size", sz(&C::grid_size)},
           {"plot_adrf", [](C& c, P&, const S& k, const S& v) { c.plot_adrf = parse_bool(k, v); }},
           {"export_attention",
            [](C& c, P&, const S& k, const S& v) { c.export_attention = parse_bool(k, v); }},
           {"adrf_samples", sz(&C::adrf_samples)},
           {"adrf_points", sz(&C::adrf_points)},
       }},
      {"generator",
       {
           {"name", [](C& c, P&, const S&, const S& v) { c.generator.name = v; }},
           {"n_train", [](C& c, P&, const S& k, const S& v) { c.generator.n_train = parse_integer<std::size_t>(k, v); }},
           {"n_test", [](C& c, P&, const S& k, const S& v) { c.generator.n_test = parse_integer<std::size_t>(k, v); }},
           {"h", [](C& c, P&, const S& k, const S& v) { c.generator.h = parse_real(k, v); }},
           {"train_low", [](C& c, P&, const S& k, const S& v) { c.generator.train.low = parse_real(k, v); }},
           {"train_high", [](C& c, P&, const S& k, const S& v) { c.generator.train.high = parse_real(k, v); }},
           {"test_low", [](C& c, P&, const S& k, const S& v) { c.generator.test.low = parse_real(k, v); }},
           {"test_high", [](C& c, P&, const S& k, const S& v) { c.generator.test.high = parse_real(k, v); }},
           {"binary", [](C& c, P&, const S& k, const S& v) { c.generator.ihdp.binary = parse_bool(k, v); }},
           {"dis1_size", [](C& c, P&, const S& k, const S& v) { c.generator.ihdp.dis1_size = parse_integer<std::size_t>(k, v); }},
           {"dis2_size", [](C& c, P&, const S& k, const S& v) { c.generator.ihdp.dis2_size = parse_integer<std::size_t>(k, v); }},
           {"p", [](C&, P& p, const S& k, const S& v) { p.p = parse_integer<std::size_t>(k, v); }},
           {"n_treatments", [](C&, P& p, const S& k, const S& v) { p.n_treatments = parse_integer<std::size_t>(k, v); }},
           {"kappa", [](C& c, P&, const S& k, const S& v) { c.generator.tcga.kappa = parse_real(k, v); }},
           {"alpha", [](C& c, P&, const S& k, const S& v) { c.generator.tcga.alpha = parse_real(k, v); }},
           {"c", [](C& c, P&, const S& k, const S& v) { c.generator.tcga.c = parse_real(k, v); }},
       }},
      {"model",
       {
           {"kind", [](C& c, P&, const S&, const S& v) { c.model.kind = parse_model_kind(v); }},
           {"d_model", [](C& c, P&, const S& k, const S& v) { c.model.d_model = parse_integer<std::size_t>(k, v); }},
           {"n_heads", [](C& c, P&, const S& k, const S& v) { c.model.n_heads = parse_integer<std::size_t>(k, v); }},
           {"n_layers", [](C& c, P&, const S& k, const S& v) { c.model.n_layers = parse_integer<std::size_t>(k, v); }},
           {"head_hidden", [](C& c, P&, const S& k, const S& v) { c.model.head_hidden = parse_integer<std::size_t>(k, v); }},
           {"n_treatments", [](C& c, P&, const S& k, const S& v) { c.model.n_treatments = parse_integer<std::size_t>(k, v); }},
           {"hidden", [](C& c, P&, const S& k, const S& v) { c.model.hidden = parse_list(k, v); }},
           {"delta", [](C& c, P&, const S& k, const S& v) { c.model.delta = parse_integer<std::size_t>(k, v); }},
       }},
      {"train",
       {
           {"batch_size", [](C& c, P&, const S& k, const S& v) { c.train.batch_size = parse_integer<std::size_t>(k, v); }},
           {"learning_rate", [](C& c, P&, const S& k, const S& v) { c.train.learning_rate = parse_real(k, v); }},
           {"schedule", [](C& c, P&, const S&, const S& v) { c.train.schedule = parse_schedule(v); }},
           {"regularizer", [](C& c, P&, const S&, const S& v) { c.train.regularizer = parse_regularizer(v); }},
           {"lambda", [](C& c, P&, const S& k, const S& v) { c.train.lambda = parse_real(k, v); }},
           {"iterations", [](C& c, P&, const S& k, const S& v) { c.train.total_iterations = parse_integer<std::size_t>(k, v); }},
           {"inner_steps", [](C& c, P&, const S& k, const S& v) { c.train.inner_steps = parse_integer<std::size_t>(k, v); }},
           {"history_every", [](C& c, P&, const S& k, const S& v) { c.train.history_every = parse_integer<std::size_t>(k, v); }},
           {"divergence_limit", [](C& c, P&, const S& k, const S& v) { c.train.divergence_limit = parse_real(k, v); }},
       }},
  };
  return table;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

// --- specs -----------------------------------------------------------------

std::size_t GeneratorSpec::covariates() const {
  if (name == "synthetic") return 6;
  if (name == "ihdp") return 5 + ihdp.dis1_size + ihdp.dis2_size;
  if (name == "news") return news_p;
  if (name == "tcga") return tcga.p;
  throw ConfigError("unknown generator '" + name + "'");
}

void GeneratorSpec::validate() const {
  if (name != "synthetic" && name != "ihdp" && name != "news" && name != "tcga") {
    throw ConfigError("unknown generator '" + name + "' (synthetic, ihdp, news, tcga)");
  }
  if (n_train == 0 || n_test == 0) throw ConfigError("n_train and n_test must be positive");
  if (h && !(*h > 0.0)) throw ConfigError("generator h must be positive");
  if (name == "tcga") {
    tcga.validate();
    return;
  }
  train.validate();
  test.validate();
  if (!(scale() > 0.0)) throw ConfigError("generator scale must be positive");
  if (name == "ihdp") ihdp_groups(ihdp.dis1_size, ihdp.dis2_size);
  if (name == "news" && news_p == 0) throw ConfigError("news p must be positive");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kTransTEE: return "transtee";
    case ModelKind::kMlp: return "mlp";
    case ModelKind::kDiscretized: return "discretized";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "transtee") return ModelKind::kTransTEE;
  if (text == "mlp") return ModelKind::kMlp;
  if (text == "discretized") return ModelKind::kDiscretized;
  throw ConfigError("unknown model kind '" + text + "' (transtee, mlp, discretized)");
}

void ModelSpec::validate() const {
  if (kind == ModelKind::kTransTEE) {
    if (d_model == 0 || n_heads == 0 || n_layers == 0) {
      throw ConfigError("d_model, n_heads and n_layers must be positive");
    }
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  }
  if (n_treatments == 0) throw ConfigError("model n_treatments must be positive");
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("hidden widths must be positive");
  }
  if (kind == ModelKind::kDiscretized && delta == 0) throw ConfigError("delta must be positive");
}

void ExperimentConfig::validate() const {
  generator.validate();
  model.validate();
  train.validate();
  if (n_repeats == 0) throw ConfigError("repeats must be at least 1");
  if (grid_size < 2) throw ConfigError("grid_size must be at least 2");
  if (adrf_points < 2 || adrf_samples == 0) {
    throw ConfigError("adrf_points must be at least 2 and adrf_samples positive");
  }
  if (model.n_treatments != 1) {
    throw ConfigError("generated datasets carry one treatment per unit; set model n_treatments = 1");
  }
  if (train.regularizer != Regularizer::kNone && model.kind != ModelKind::kTransTEE) {
    throw ConfigError("propensity regularizers need the transtee model");
  }
  if (model.kind == ModelKind::kDiscretized && generator.has_dosage()) {
    throw ConfigError("the discretized baseline handles a single continuous treatment");
  }
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream o;
  o << "[experiment]\n"
    << "name = " << name << '\n'
    << "repeats = " << n_repeats << '\n'
    << "seed = " << seed << '\n'
    << "output = " << output_dir.string() << '\n'
    << "grid_size = " << grid_size << '\n'
    << "plot_adrf = " << (plot_adrf ? "true" : "false") << '\n'
    << "export_attention = " << (export_attention ? "true" : "false") << '\n'
    << "adrf_samples = " << adrf_samples << '\n'
    << "adrf_points = " << adrf_points << "\n\n";
  const GeneratorSpec& g = generator;
  o << "[generator]\n"
    << "name = " << g.name << '\n'
    << "n_train = " << g.n_train << '\n'
    << "n_test = " << g.n_test << '\n';
  if (g.h) o << "h = " << num(*g.h) << '\n';
  if (g.name == "tcga") {
    o << "p = " << g.tcga.p << '\n'
      << "n_treatments = " << g.tcga.n_treatments << '\n'
      << "kappa = " << num(g.tcga.kappa) << '\n'
      << "alpha = " << num(g.tcga.alpha) << '\n'
      << "c = " << num(g.tcga.c) << '\n';
  } else {
    o << "train_low = " << num(g.train.low) << '\n'
      << "train_high = " << num(g.train.high) << '\n'
      << "test_low = " << num(g.test.low) << '\n'
      << "test_high = " << num(g.test.high) << '\n';
  }
  if (g.name == "ihdp") {
    o << "binary = " << (g.ihdp.binary ? "true" : "false") << '\n'
      << "dis1_size = " << g.ihdp.dis1_size << '\n'
      << "dis2_size = " << g.ihdp.dis2_size << '\n';
  }
  if (g.name == "news") o << "p = " << g.news_p << '\n';
  o << "\n[model]\n"
    << "kind = " << to_string(model.kind) << '\n';
  if (model.kind == ModelKind::kTransTEE) {
    o << "d_model = " << model.d_model << '\n'
      << "n_heads = " << model.n_heads << '\n'
      << "n_layers = " << model.n_layers << '\n'
      << "head_hidden = " << model.head_hidden << '\n'
      << "n_treatments = " << model.n_treatments << '\n';
  } else {
    o << "hidden = " << join(model.hidden) << '\n';
    if (model.kind == ModelKind::kDiscretized) o << "delta = " << model.delta << '\n';
  }
  o << "\n[train]\n"
    << "batch_size = " << train.batch_size << '\n'
    << "learning_rate = " << num(train.learning_rate) << '\n'
    << "schedule = " << to_string(train.schedule) << '\n'
    << "regularizer = " << to_string(train.regularizer) << '\n'
    << "lambda = " << num(train.lambda) << '\n'
    << "iterations = " << train.total_iterations << '\n'
    << "inner_steps = " << train.inner_steps << '\n'
    << "history_every = " << train.history_every << '\n'
    << "divergence_limit = " << num(train.divergence_limit) << '\n';
  return o.str();
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  // Where results land does not change what is computed.
  ExperimentConfig canonical = *this;
  canonical.output_dir.clear();
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical.to_ini())));
  return buf;
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  ExperimentConfig config;
  Pending pending;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' must sit inside a section");
    const auto found = table.find(section);
    if (found == table.end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      const auto setter = found->second.find(key);
      if (setter == found->second.end()) {
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      }
      setter->second(config, pending, section + "." + key, value.data());
    }
  }
  const std::string& gen = config.generator.name;
  if (pending.p) {
    if (gen == "news") {
      config.generator.news_p = *pending.p;
    } else if (gen == "tcga") {
      config.generator.tcga.p = *pending.p;
    } else {
      throw ConfigError("generator.p applies to news and tcga only");
    }
  }
  if (pending.n_treatments) {
    if (gen != "tcga") throw ConfigError("generator.n_treatments applies to tcga only");
    config.generator.tcga.n_treatments = *pending.n_treatments;
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  return parse_config(in);
}

// --- models and data -------------------------------------------------------

std::unique_ptr<OutcomeModel> make_model(const ModelSpec& spec, const GeneratorSpec& gen,
                                         Regularizer regularizer, RngStream rng) {
  spec.validate();
  const std::size_t p = gen.covariates();
  switch (spec.kind) {
    case ModelKind::kTransTEE: {
      TransTEEConfig c;
      c.p = p;
      c.n_treatments = spec.n_treatments;
      c.has_dosage = gen.has_dosage();
      c.d_model = spec.d_model;
      c.n_heads = spec.n_heads;
      c.n_layers = spec.n_layers;
      c.head_hidden = spec.head_hidden;
      c.propensity =
          regularizer == Regularizer::kPTR ? PropensityMode::kGaussian : PropensityMode::kPoint;
      return std::make_unique<TransTEE>(c, rng);
    }
    case ModelKind::kMlp: {
      MlpConfig c;
      c.p = p;
      c.n_treatments = spec.n_treatments;
      c.has_dosage = gen.has_dosage();
      c.hidden = spec.hidden;
      return std::make_unique<MlpBaseline>(c, rng);
    }
    case ModelKind::kDiscretized: {
      if (gen.has_dosage()) throw ConfigError("the discretized baseline takes no dosage");
      DiscretizedConfig c;
      c.p = p;
      c.delta = spec.delta;
      c.low = gen.train.low;
      c.high = gen.train.high;
      c.hidden = spec.hidden;
      return std::make_unique<DiscretizedBaseline>(c, rng);
    }
  }
  throw ConfigError("unknown model kind");
}

std::size_t count_params(const ModelSpec& spec, const GeneratorSpec& gen) {
  return make_model(spec, gen, Regularizer::kNone, RngStream(0))->params().scalar_count();
}

DatasetSplit generate_split(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t want = spec.n_train + spec.n_test;
  if (spec.name == "tcga") {
    GenOptions o;
    o.n = want;
    o.seed = seed;
    const Dataset all = gen_tcga_dosage(o, spec.tcga);
    std::vector<std::size_t> tr(spec.n_train), te(spec.n_test);
    for (std::size_t i = 0; i < tr.size(); ++i) tr[i] = i;
    for (std::size_t i = 0; i < te.size(); ++i) te[i] = spec.n_train + i;
    return {all.subset(tr), all.subset(te)};
  }
  const Interval hull{std::min(spec.train.low, spec.test.low),
                      std::max(spec.train.high, spec.test.high)};
  // Rows go to train while its interval accepts them, otherwise to test;
  // the pool grows until both are filled.
  for (std::size_t n = want, attempt = 0; attempt < 8; n *= 2, ++attempt) {
    GenOptions o;
    o.n = n;
    o.h = spec.scale();
    o.seed = seed;
    o.interval = hull;
    Dataset all = spec.name == "synthetic" ? gen_synthetic(o)
                  : spec.name == "ihdp"    ? gen_ihdp_style(o, spec.ihdp)
                                           : gen_news_style(o, spec.news_p);
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < all.size(); ++i) {
      const double t = all.t[i];
      if (tr.size() < spec.n_train && (spec.ihdp.binary || spec.train.contains(t))) {
        tr.push_back(i);
      } else if (te.size() < spec.n_test && (spec.ihdp.binary || spec.test.contains(t))) {
        te.push_back(i);
      }
    }
    if (tr.size() == spec.n_train && te.size() == spec.n_test) {
      DatasetSplit split{all.subset(tr), all.subset(te)};
      split.train.meta.interval = spec.train;
      split.test.meta.interval = spec.test;
      return split;
    }
  }
  throw ContractError("could not fill the train and test intervals from the generator");
}

// --- running ---------------------------------------------------------------

RepeatResult run_repeat(const ExperimentConfig& config, std::size_t r, bool keep) {
  RepeatResult result;
  result.repeat = r;
  result.seed = config.seed + r;
  try {
    DatasetSplit split = generate_split(config.generator, result.seed);
    std::unique_ptr<OutcomeModel> model =
        make_model(config.model, config.generator, config.train.regularizer,
                   RngStream(result.seed).split(kModelStream));
    TrainConfig tc = config.train;
    tc.seed = result.seed;
    Evaluator evaluate;
    if (r == 0 && continuous_outcome(config.generator)) {
      evaluate = [&](const OutcomeModel& m) {
        return amse(ModelResponse(m), split.test, config.grid_size);
      };
    }
    result.history = train(*model, split.train.supervised(), tc, evaluate);

    const ModelResponse response(*model);
    const Dataset& test = split.test;
    if (continuous_outcome(config.generator)) {
      result.metrics["amse"] = amse(response, test, config.grid_size);
    } else if (config.generator.name == "ihdp") {
      result.metrics["ate_error"] = ate_error(response, test);
    } else {
      result.metrics["amse_dosage"] = amse_dosage(response, test, config.grid_size);
      const std::size_t arms = test.meta.n_arms;
      for (std::size_t k = 2; k <= std::min<std::size_t>(arms, 3); ++k) {
        result.metrics["upehe@" + std::to_string(k)] =
            pehe_at_k(response, test, *test.propensity, k, false);
        result.metrics["wpehe@" + std::to_string(k)] =
            pehe_at_k(response, test, *test.propensity, k, true);
      }
    }
    for (const auto& [name, value] : result.metrics) {
      if (!std::isfinite(value)) throw NumericError(name + " is not finite");
    }
    if (keep) {
      result.model = std::move(model);
      result.data = std::move(split);
    }
    spdlog::info("{} repeat {} (seed {}) done", config.name, r, result.seed);
  } catch (const std::exception& e) {
    result.status = "failed";
    result.message = e.what();
    result.metrics.clear();
    spdlog::warn("{} repeat {} (seed {}) failed: {}", config.name, r, result.seed, e.what());
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t jobs) {
  config.validate();
  const std::size_t n = config.n_repeats;
  ExperimentResult out;
  out.repeats.resize(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < n; r = next++) out.repeats[r] = run_repeat(config, r, true);
  };
  jobs = std::clamp<std::size_t>(jobs, 1, n);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  std::set<std::string> names;
  for (const RepeatResult& r : out.repeats) {
    if (!r.ok()) ++out.failed;
    for (const auto& [name, value] : r.metrics) names.insert(name);
  }
  auto stamp = [&](MetricReport rep) {
    rep.generator = config.generator.name;
    rep.h_train_low = config.generator.train.low;
    rep.h_train_high = config.generator.train.high;
    rep.h_test_high = config.generator.test.high;
    rep.seed = config.seed;
    rep.config_hash = config.hash();
    return rep;
  };
  for (const std::string& name : names) {
    std::vector<double> values;
    for (const RepeatResult& r : out.repeats) {
      if (r.ok()) values.push_back(r.metrics.at(name));
    }
    out.reports.push_back(stamp(MetricReport::aggregate(name, values)));
  }
  MetricReport failed;
  failed.metric = "failed_repeats";
  failed.value = static_cast<double>(out.failed);
  failed.n_repeats = n;
  out.reports.push_back(stamp(failed));

  // --- artifacts
  const std::filesystem::path dir = config.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto emit = [&](const std::string& file, const std::function<void(std::ostream&)>& body) {
    const std::filesystem::path path = dir / file;
    std::ofstream f = open_out(path);
    body(f);
    f.flush();
    if (!f) throw IoError("failed while writing " + path.string());
    out.artifacts.push_back(path);
  };
  emit("config.ini", [&](std::ostream& f) { f << config.to_ini(); });
  emit("results.csv", [&](std::ostream& f) { write_reports_csv(out.reports, f); });
  emit("repeats.csv", [&](std::ostream& f) {
    f << "repeat,seed,status";
    for (const std::string& name : names) f << ',' << name;
    f << ",message\n";
    for (const RepeatResult& r : out.repeats) {
      f << r.repeat << ',' << r.seed << ',' << r.status;
      for (const std::string& name : names) {
        const auto it = r.metrics.find(name);
        f << ',' << (it == r.metrics.end() ? "" : num(it->second));
      }
      std::string message = r.message;
      std::replace(message.begin(), message.end(), ',', ';');
      std::replace(message.begin(), message.end(), '\n', ' ');
      f << ',' << message << '\n';
    }
  });

  const auto first_ok = std::find_if(out.repeats.begin(), out.repeats.end(),
                                     [](const RepeatResult& r) { return r.ok(); });
  if (first_ok != out.repeats.end()) {
    const RepeatResult& best = *first_ok;
    emit("history.csv", [&](std::ostream& f) { best.history.write_csv(f); });
    emit("model.ckpt", [&](std::ostream& f) { best.model->save(f); });
    const Dataset& test = best.data->test;
    if (config.plot_adrf && continuous_outcome(config.generator)) {
      const std::vector<double> grid =
          treatment_grid(config.generator.test.low, config.generator.test.high, config.adrf_points);
      const AdrfCurve curve =
          plot_adrf(ModelResponse(*best.model), test, config.adrf_samples, grid, dir / "adrf.svg");
      out.artifacts.push_back(dir / "adrf.svg");
      emit("adrf.csv", [&](std::ostream& f) { curve.write_csv(f); });
    }
    if (config.export_attention) {
      if (const auto* tt = dynamic_cast<const TransTEE*>(best.model.get())) {
        const ForwardTrace trace = tt->trace(test.batch());
        export_attention(trace.cross_weights, test.meta.groups, dir, "attention");
        out.artifacts.push_back(dir / "attention.csv");
        out.artifacts.push_back(dir / "attention.svg");
      }
    }
  }
  for (RepeatResult& r : out.repeats) {
    r.model.reset();
    r.data.reset();
  }
  spdlog::info("{}: {} of {} repeats failed; results in {}", config.name, out.failed, n,
               dir.string());
  return out;
}

std::vector<std::filesystem::path> replot(const std::filesystem::path& run_dir) {
  std::vector<std::filesystem::path> written;
  if (std::ifstream in{run_dir / "adrf.csv"}) {
    const AdrfCurve curve = AdrfCurve::read_csv(in);
    std::ofstream out = open_out(run_dir / "adrf.svg");
    curve.write_svg(out);
    written.push_back(run_dir / "adrf.svg");
  }
  if (std::ifstream in{run_dir / "attention.csv"}) {
    const AttentionExport e = AttentionExport::read_csv(in);
    std::ofstream out = open_out(run_dir / "attention.svg");
    e.write_svg(out);
    written.push_back(run_dir / "attention.svg");
  }
  if (written.empty()) throw IoError("no adrf.csv or attention.csv in " + run_dir.string());
  return written;
}

}  // namespace transtee
