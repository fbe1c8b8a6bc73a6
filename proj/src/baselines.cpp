// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "transtee/errors.hpp"

namespace transtee {

namespace {
std::vector<std::size_t> widths_for(std::size_t in, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  return widths;
}
}  // namespace

void MlpConfig::validate() const {
  if (p == 0 || n_treatments == 0) throw ConfigError("mlp needs p >= 1 and n_treatments >= 1");
  for (std::size_t w : hidden)
    if (w == 0) throw ConfigError("mlp hidden widths must be positive");
}

MlpBaseline::MlpBaseline(MlpConfig config, RngStream rng) : config_(std::move(config)) {
  config_.validate();
  stack_ = add_dense_stack(params_, "mlp", widths_for(config_.input_width(), config_.hidden), rng);
}

std::unique_ptr<OutcomeModel> MlpBaseline::clone() const {
  return std::make_unique<MlpBaseline>(*this);
}

Var MlpBaseline::predict(Binding& bound, const TreatmentBatch& batch, Mode) const {
  if (batch.x.dim(1) != config_.p || batch.t.dim(1) != config_.n_treatments) {
    throw DimensionError("batch does not match mlp input layout");
  }
  if (batch.s.has_value() != config_.has_dosage) {
    throw DimensionError("dosage presence does not match mlp configuration");
  }
  Tape& tape = bound.tape();
  std::vector<Var> parts{tape.constant(batch.x), tape.constant(batch.t)};
  if (batch.s) parts.push_back(tape.constant(*batch.s));
  Var y = apply_dense_stack(bound, stack_, concat_last(parts));
  return reshape(y, {batch.size()});
}

void DiscretizedConfig::validate() const {
  if (delta == 0) throw ConfigError("delta must be at least 1");
  if (!(low < high)) throw ConfigError("discretized interval needs low < high");
  if (p == 0) throw ConfigError("p must be at least 1");
}

double DiscretizedConfig::grid_point(std::size_t k) const {
  return low + (high - low) * static_cast<double>(k) / static_cast<double>(delta);
}

std::size_t DiscretizedConfig::branch_of(double t) const {
  const double pos = (t - low) / (high - low) * static_cast<double>(delta);
  const double clamped = std::clamp(pos, 0.0, static_cast<double>(delta));
  return static_cast<std::size_t>(std::llround(clamped));
}

DiscretizedBaseline::DiscretizedBaseline(DiscretizedConfig config, RngStream rng)
    : config_(std::move(config)) {
  config_.validate();
  const auto widths = widths_for(config_.p, config_.hidden);
  for (std::size_t k = 0; k <= config_.delta; ++k) {
    branches_.push_back(add_dense_stack(params_, "branch" + std::to_string(k), widths, rng));
  }
}

std::unique_ptr<OutcomeModel> DiscretizedBaseline::clone() const {
  return std::make_unique<DiscretizedBaseline>(*this);
}

Var DiscretizedBaseline::predict(Binding& bound, const TreatmentBatch& batch, Mode) const {
  if (batch.x.dim(1) != config_.p || batch.t.dim(1) != 1) {
    throw DimensionError("discretized baseline takes x:[B,p] and a single treatment column");
  }
  const std::size_t n = batch.size();
  const std::size_t branches = config_.delta + 1;
  Tensor selector({n, branches}, 0.0);
  for (std::size_t i = 0; i < n; ++i) selector.at(i, config_.branch_of(batch.t[i])) = 1.0;
  Tape& tape = bound.tape();
  Var x = tape.constant(batch.x);
  std::vector<Var> outs;
  outs.reserve(branches);
  for (const DenseStack& b : branches_) outs.push_back(apply_dense_stack(bound, b, x));
  Var all = concat_last(outs);
  return sum_axis(mul(all, tape.constant(std::move(selector))), 1);
}

BoundCheck prop1_bound_check(const std::function<double(double)>& mu, double lipschitz,
                             double low, double high, std::size_t delta,
                             std::size_t n_probes) {
  if (delta == 0 || !(low < high) || n_probes < 2) {
    throw ContractError("bound check needs delta >= 1, low < high and n_probes >= 2");
  }
  DiscretizedConfig grid;
  grid.delta = delta;
  grid.low = low;
  grid.high = high;
  std::vector<double> branch_values(delta + 1);
  for (std::size_t k = 0; k <= delta; ++k) branch_values[k] = mu(grid.grid_point(k));

  BoundCheck result;
  result.bound = lipschitz * (high - low) / static_cast<double>(delta);
  for (std::size_t i = 0; i < n_probes; ++i) {
    const double t = low + (high - low) * static_cast<double>(i) / static_cast<double>(n_probes - 1);
    const double err = std::abs(branch_values[grid.branch_of(t)] - mu(t));
    result.max_error = std::max(result.max_error, err);
  }
  return result;
}

}  // namespace transtee
