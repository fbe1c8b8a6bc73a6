// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "transtee/outcome_model.hpp"
#include "transtee/transtee_model.hpp"

namespace transtee {

enum class Regularizer { kNone, kTR, kPTR };
enum class Schedule { kConstant, kCosine };

std::string to_string(Regularizer r);
std::string to_string(Schedule s);
Regularizer parse_regularizer(const std::string& text);
Schedule parse_schedule(const std::string& text);

struct TrainConfig {
  std::size_t batch_size = 500;
  double learning_rate = 0.01;
  Schedule schedule = Schedule::kCosine;
  Regularizer regularizer = Regularizer::kNone;
  double lambda = 0.5;
  std::size_t total_iterations = 1500;
  std::size_t inner_steps = 1;  // propensity updates per outcome update
  std::uint64_t seed = 0;
  std::size_t history_every = 50;
  double divergence_limit = 1e6;

  void validate() const;
};

/// Mean squared error.
Var loss_outcome(Var prediction, Var target);
/// Mean squared treatment-prediction error.
Var loss_tr(Var t, Var t_hat);
/// Gaussian negative log-likelihood without the 0.5*log(2*pi) constant.
Var loss_ptr(Var t, Var mean, Var variance);

double cosine_schedule(std::size_t step, std::size_t total, double base_lr);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer over the trainable entries of one ParamSet.
class Adam {
 public:
  explicit Adam(const ParamSet& params, AdamOptions options = {});

  /// `grads` is aligned with the ParamSet (as Binding::gradients returns).
  void step(ParamSet& params, std::span<const Tensor> grads, double lr);
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

struct StepLosses {
  double outcome = 0.0;
  double propensity = 0.0;  // NaN without a regularizer
};

/// Outcome targets aligned with a TreatmentBatch.
struct Supervised {
  TreatmentBatch inputs;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  Supervised rows(std::span<const std::size_t> index) const;
};

/// One plain outcome-regression step.
StepLosses plain_step(OutcomeModel& model, Adam& theta_opt, const Supervised& batch, double lr,
                      double divergence_limit = 1e6);

/// Alternating minimax step: `inner_steps` propensity updates on the detached
/// covariate representation, then one outcome update on L_theta - lambda*L_phi
/// with phi frozen. Only the update step commits BatchNorm statistics.
StepLosses adversarial_step(TransTEE& model, Adam& theta_opt, Adam& phi_opt,
                            const Supervised& batch, const TrainConfig& config, double lr);

struct HistoryRow {
  std::size_t step = 0;
  double loss_outcome = 0.0;
  double loss_propensity = 0.0;
  double test_amse = 0.0;  // NaN when not evaluated
};

struct TrainHistory {
  std::vector<HistoryRow> rows;

  void write_csv(std::ostream& out) const;
};

/// Called at each history step; returns the test metric to log.
using Evaluator = std::function<double(const OutcomeModel&)>;

TrainHistory train(OutcomeModel& model, const Supervised& data, const TrainConfig& config,
                   const Evaluator& evaluate = {});

/// Trains only the propensity head of `model` on a frozen outcome network,
/// full batch, with config.regularizer selecting the TR or PTR loss. Returns
/// the final propensity loss.
double train_propensity(TransTEE& model, const TreatmentBatch& data, const TrainConfig& config);

}  // namespace transtee
