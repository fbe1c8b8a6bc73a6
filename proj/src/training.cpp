// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>

#include "transtee/errors.hpp"

namespace transtee {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kBatchStream = 0x62617463;  // "batc"

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Var propensity_loss(const TransTEE& model, const Binding& phi, Var repr, Var t,
                    Regularizer reg) {
  PropensityOutput out = model.forward_propensity(phi, repr);
  if (reg == Regularizer::kTR) return loss_tr(t, out.mean);
  if (!out.variance.valid()) {
    throw ConfigError("PTR needs a model built with the gaussian propensity head");
  }
  return loss_ptr(t, out.mean, out.variance);
}

void check_divergence(double loss, double limit) {
  if (!std::isfinite(loss) || loss > limit) {
    throw DivergenceError("training loss " + std::to_string(loss) + " exceeded " +
                          std::to_string(limit));
  }
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::kNone: return "none";
    case Regularizer::kTR: return "tr";
    case Regularizer::kPTR: return "ptr";
  }
  return "none";
}

std::string to_string(Schedule s) { return s == Schedule::kCosine ? "cosine" : "constant"; }

Regularizer parse_regularizer(const std::string& text) {
  if (text == "none") return Regularizer::kNone;
  if (text == "tr") return Regularizer::kTR;
  if (text == "ptr") return Regularizer::kPTR;
  throw ConfigError("unknown regularizer '" + text + "' (expected none, tr or ptr)");
}

Schedule parse_schedule(const std::string& text) {
  if (text == "cosine") return Schedule::kCosine;
  if (text == "constant") return Schedule::kConstant;
  throw ConfigError("unknown schedule '" + text + "' (expected cosine or constant)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (total_iterations == 0) throw ConfigError("total_iterations must be at least 1");
  if (regularizer != Regularizer::kNone && inner_steps == 0) {
    throw ConfigError("inner_steps must be at least 1 with a regularizer");
  }
}

Var loss_outcome(Var prediction, Var target) {
  require_same_shape(prediction, target, "outcome loss shapes differ");
  return mean(square(sub(target, prediction)));
}

Var loss_tr(Var t, Var t_hat) {
  require_same_shape(t, t_hat, "treatment loss shapes differ");
  return mean(square(sub(t, t_hat)));
}

Var loss_ptr(Var t, Var mean_t, Var variance) {
  require_same_shape(t, mean_t, "PTR mean shape differs");
  require_same_shape(t, variance, "PTR variance shape differs");
  for (double v : variance.value().values()) {
    if (!(v > 0.0)) throw NumericError("PTR variance must be positive");
  }
  Var quad = div(square(sub(t, mean_t)), scale(variance, 2.0));
  return mean(add(quad, scale(log(variance), 0.5)));
}

double cosine_schedule(std::size_t step, std::size_t total, double base_lr) {
  if (total == 0) throw ContractError("cosine schedule needs total >= 1");
  if (step > total) {
    throw ContractError("schedule step " + std::to_string(step) + " exceeds total " +
                        std::to_string(total));
  }
  if (step == total) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

Adam::Adam(const ParamSet& params, AdamOptions options) : options_(options) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params.value(ParamId{i}).shape();
    m_.emplace_back(s, 0.0);
    v_.emplace_back(s, 0.0);
  }
}

void Adam::step(ParamSet& params, std::span<const Tensor> grads, double lr) {
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw DimensionError("optimizer state does not match the parameter set");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.trainable(ParamId{i})) continue;
    if (grads[i].shape() != m_[i].shape()) {
      throw DimensionError("gradient for " + params.name(ParamId{i}) + " has shape " +
                           shape_string(grads[i].shape()));
    }
    if (!grads[i].all_finite()) {
      throw NumericError("non-finite gradient for " + params.name(ParamId{i}));
    }
  }
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamId id{i};
    if (!params.trainable(id)) continue;
    auto w = params.value(id).values();
    auto g = grads[i].values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.eps);
    }
  }
}

Supervised Supervised::rows(std::span<const std::size_t> index) const {
  Supervised out;
  out.inputs = inputs.rows(index);
  out.y.reserve(index.size());
  for (std::size_t i : index) out.y.push_back(y.at(i));
  return out;
}

StepLosses plain_step(OutcomeModel& model, Adam& theta_opt, const Supervised& batch, double lr,
                      double divergence_limit) {
  Tape tape;
  Binding theta(tape, model.params(), true);
  Var pred = model.predict(theta, batch.inputs, Mode::kTrain);
  Var loss = loss_outcome(pred, tape.constant(Tensor({batch.size()}, batch.y)));
  const double value = loss.value()[0];
  check_divergence(value, divergence_limit);
  tape.backward(loss);
  theta_opt.step(model.params(), theta.gradients(), lr);
  theta.commit_norm_stats(model.params());
  return {value, kNaN};
}

StepLosses adversarial_step(TransTEE& model, Adam& theta_opt, Adam& phi_opt,
                            const Supervised& batch, const TrainConfig& config, double lr) {
  if (config.regularizer == Regularizer::kNone) {
    throw ContractError("adversarial step needs a regularizer");
  }
  Tape tape;
  Binding theta(tape, model.params(), true);
  OutcomeForward fwd = model.forward_outcome(theta, batch.inputs, Mode::kTrain);
  Var l_theta = loss_outcome(fwd.prediction, tape.constant(Tensor({batch.size()}, batch.y)));
  check_divergence(l_theta.value()[0], config.divergence_limit);

  // (a) adversary: fit phi on the current, detached representation.
  const Tensor repr = fwd.covariate_repr.value();
  for (std::size_t k = 0; k < config.inner_steps; ++k) {
    Tape inner;
    Binding phi(inner, model.propensity_params(), true);
    Var l = propensity_loss(model, phi, inner.constant(repr), inner.constant(batch.inputs.t),
                            config.regularizer);
    check_divergence(l.value()[0], config.divergence_limit);
    inner.backward(l);
    phi_opt.step(model.propensity_params(), phi.gradients(), lr);
  }

  // (b) outcome update with phi frozen; -lambda*L_phi reaches theta only
  // through the covariate representation.
  Binding phi_frozen(tape, model.propensity_params(), false);
  Var l_phi = propensity_loss(model, phi_frozen, fwd.covariate_repr,
                              tape.constant(batch.inputs.t), config.regularizer);
  Var total = sub(l_theta, scale(l_phi, config.lambda));
  tape.backward(total);
  theta_opt.step(model.params(), theta.gradients(), lr);
  theta.commit_norm_stats(model.params());
  return {l_theta.value()[0], l_phi.value()[0]};
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "step,loss_outcome,loss_propensity,test_amse\n";
  for (const HistoryRow& r : rows) {
    out << r.step << ',' << csv_number(r.loss_outcome) << ',' << csv_number(r.loss_propensity)
        << ',' << csv_number(r.test_amse) << '\n';
  }
}

TrainHistory train(OutcomeModel& model, const Supervised& data, const TrainConfig& config,
                   const Evaluator& evaluate) {
  config.validate();
  const std::size_t n = data.size();
  if (n == 0) throw ContractError("cannot train on an empty dataset");
  if (data.inputs.size() != n) throw DimensionError("inputs and outcomes differ in length");

  TransTEE* adversarial = nullptr;
  if (config.regularizer != Regularizer::kNone) {
    adversarial = dynamic_cast<TransTEE*>(&model);
    if (adversarial == nullptr) {
      throw ConfigError("regularizer " + to_string(config.regularizer) +
                        " needs a transtee model, got " + model.kind());
    }
  }
  Adam theta_opt(model.params());
  std::optional<Adam> phi_opt;
  if (adversarial) phi_opt.emplace(adversarial->propensity_params());

  RngStream rng = RngStream(config.seed).split(kBatchStream);
  const std::size_t b = std::min(config.batch_size, n);
  std::vector<std::size_t> order = rng.permutation(n);
  std::size_t cursor = 0;
  TrainHistory history;
  for (std::size_t step = 0; step < config.total_iterations; ++step) {
    if (cursor + b > n) {
      order = rng.permutation(n);
      cursor = 0;
    }
    const Supervised batch = data.rows(std::span(order).subspan(cursor, b));
    cursor += b;
    const double lr = config.schedule == Schedule::kCosine
                          ? cosine_schedule(step, config.total_iterations, config.learning_rate)
                          : config.learning_rate;
    const StepLosses losses =
        adversarial ? adversarial_step(*adversarial, theta_opt, *phi_opt, batch, config, lr)
                    : plain_step(model, theta_opt, batch, lr, config.divergence_limit);
    if (config.history_every != 0 && (step + 1) % config.history_every == 0) {
      history.rows.push_back({step + 1, losses.outcome, losses.propensity,
                              evaluate ? evaluate(model) : kNaN});
    }
  }
  return history;
}

double train_propensity(TransTEE& model, const TreatmentBatch& data, const TrainConfig& config) {
  config.validate();
  if (config.regularizer == Regularizer::kNone) {
    throw ConfigError("propensity training needs the tr or ptr regularizer");
  }
  Tensor repr;
  {
    Tape tape;
    Binding theta(tape, model.params(), false);
    repr = model.forward_outcome(theta, data, Mode::kEval).covariate_repr.value();
  }
  Adam opt(model.propensity_params());
  for (std::size_t step = 0; step < config.total_iterations; ++step) {
    Tape tape;
    Binding phi(tape, model.propensity_params(), true);
    Var l = propensity_loss(model, phi, tape.constant(repr), tape.constant(data.t),
                            config.regularizer);
    check_divergence(l.value()[0], config.divergence_limit);
    tape.backward(l);
    const double lr = config.schedule == Schedule::kCosine
                          ? cosine_schedule(step, config.total_iterations, config.learning_rate)
                          : config.learning_rate;
    opt.step(model.propensity_params(), phi.gradients(), lr);
  }
  Tape tape;
  Binding phi(tape, model.propensity_params(), false);
  return propensity_loss(model, phi, tape.constant(repr), tape.constant(data.t),
                         config.regularizer)
      .value()[0];
}

}  // namespace transtee
