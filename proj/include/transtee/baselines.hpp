// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <functional>
#include <vector>

#include "transtee/outcome_model.hpp"

namespace transtee {

struct MlpConfig {
  std::size_t p = 1;
  std::size_t n_treatments = 1;
  bool has_dosage = false;
  std::vector<std::size_t> hidden = {50, 50};

  std::size_t input_width() const { return p + n_treatments * (has_dosage ? 2 : 1); }
  void validate() const;
};

/// S-learner: an MLP on concat(x, t[, s]).
class MlpBaseline final : public OutcomeModel {
 public:
  MlpBaseline(MlpConfig config, RngStream rng);

  std::string kind() const override { return "mlp"; }
  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  Var predict(Binding& bound, const TreatmentBatch& batch, Mode mode) const override;
  std::unique_ptr<OutcomeModel> clone() const override;
  const MlpConfig& config() const noexcept { return config_; }
  const DenseStack& stack() const noexcept { return stack_; }

 private:
  MlpConfig config_;
  ParamSet params_;
  DenseStack stack_;
};

struct DiscretizedConfig {
  std::size_t p = 1;
  std::size_t delta = 5;  // sub-intervals; delta + 1 branches
  double low = 0.0;
  double high = 1.0;
  std::vector<std::size_t> hidden = {50, 50};

  void validate() const;
  double grid_point(std::size_t k) const;
  /// Nearest grid index; treatments outside [low, high] clamp to an endpoint.
  std::size_t branch_of(double t) const;
};

/// Branch-per-grid-point estimator: t is rounded to the nearest of delta + 1
/// grid values and that branch's MLP is evaluated on x. Piecewise constant in t.
class DiscretizedBaseline final : public OutcomeModel {
 public:
  DiscretizedBaseline(DiscretizedConfig config, RngStream rng);

  std::string kind() const override { return "discretized"; }
  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  Var predict(Binding& bound, const TreatmentBatch& batch, Mode mode) const override;
  std::unique_ptr<OutcomeModel> clone() const override;
  const DiscretizedConfig& config() const noexcept { return config_; }

 private:
  DiscretizedConfig config_;
  ParamSet params_;
  std::vector<DenseStack> branches_;
};

struct BoundCheck {
  double max_error = 0.0;
  double bound = 0.0;

  bool holds() const noexcept { return max_error <= bound; }
};

/// Ideal discretised approximation of an L-Lipschitz `mu` on [low, high] with
/// delta sub-intervals and nearest-grid rounding, probed at n_probes evenly
/// spaced treatments. `bound` is L * (high - low) / delta.
BoundCheck prop1_bound_check(const std::function<double(double)>& mu, double lipschitz,
                             double low, double high, std::size_t delta,
                             std::size_t n_probes);

}  // namespace transtee
