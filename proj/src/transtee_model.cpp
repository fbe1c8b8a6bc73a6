// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/transtee_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "transtee/errors.hpp"

namespace transtee {

bool CovariateGroups::is_partition(std::size_t p) const {
  if (names.size() != members.size()) return false;
  std::vector<int> seen(p, 0);
  for (const auto& group : members) {
    for (std::size_t i : group) {
      if (i >= p || seen[i]++ > 0) return false;
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
}

AttentionConfig TransTEEConfig::attention() const {
  AttentionConfig a;
  a.d_model = d_model;
  a.n_heads = n_heads;
  a.n_layers = n_layers;
  return a;
}

void TransTEEConfig::validate() const {
  if (p == 0) throw ConfigError("p must be at least 1");
  if (n_treatments == 0) throw ConfigError("n_treatments must be at least 1");
  if (d_model < n_heads) throw ConfigError("d_model must be at least n_heads");
  attention().validate();
}

TransTEE::TransTEE(TransTEEConfig config, RngStream rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  const std::size_t p = config_.p;
  const AttentionConfig att = config_.attention();

  layout_.covariate_weight = outcome_.add("embed.covariate.weight", init_uniform({p, d}, 1, rng));
  layout_.covariate_bias = outcome_.add("embed.covariate.bias", init_uniform({p, d}, 1, rng));
  layout_.treatment_weight = outcome_.add("embed.treatment.weight", init_uniform({d}, 1, rng));
  layout_.treatment_bias = outcome_.add("embed.treatment.bias", init_uniform({d}, 1, rng));
  if (config_.has_dosage) {
    layout_.dosage_weight = outcome_.add("embed.dosage.weight", init_uniform({d}, 1, rng));
    layout_.dosage_bias = outcome_.add("embed.dosage.bias", init_uniform({d}, 1, rng));
    layout_.fusion = add_linear(outcome_, "embed.fusion", 2 * d, d, rng);
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    layout_.covariate_encoder.push_back(
        add_encoder_block(outcome_, "covariate_encoder." + std::to_string(l), att, rng));
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    layout_.treatment_encoder.push_back(
        add_encoder_block(outcome_, "treatment_encoder." + std::to_string(l), att, rng));
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    layout_.cross.push_back(add_cross_block(outcome_, "cross." + std::to_string(l), att, rng));
  }
  const std::size_t hidden = config_.head_hidden != 0 ? config_.head_hidden : d;
  layout_.head = add_dense_stack(outcome_, "head", {d, hidden, 1}, rng);

  const std::size_t phid = config_.propensity_hidden != 0 ? config_.propensity_hidden : d;
  const std::size_t pout = config_.n_treatments *
                           (config_.propensity == PropensityMode::kGaussian ? 2 : 1);
  layout_.propensity = add_dense_stack(propensity_, "propensity", {d, phid, pout}, rng);
}

std::unique_ptr<OutcomeModel> TransTEE::clone() const {
  return std::make_unique<TransTEE>(*this);
}

Var TransTEE::embed_covariates(const Binding& theta, Var x) const {
  const Shape& s = x.shape();
  if (s.size() != 2 || s[1] != config_.p) {
    throw DimensionError("covariates " + shape_string(s) + " do not match p=" +
                         std::to_string(config_.p));
  }
  Var column = reshape(x, {s[0], s[1], 1});
  return add(mul(column, theta[layout_.covariate_weight]), theta[layout_.covariate_bias]);
}

Var TransTEE::embed_treatment(const Binding& theta, Var t, std::optional<Var> s) const {
  const Shape& ts = t.shape();
  if (ts.size() != 2 || ts[1] != config_.n_treatments) {
    throw DimensionError("treatments " + shape_string(ts) + " do not match n_treatments=" +
                         std::to_string(config_.n_treatments));
  }
  if (s.has_value() != config_.has_dosage) {
    throw ContractError(config_.has_dosage ? "model expects dosages"
                                           : "model was built without dosages");
  }
  Var mt = add(mul(reshape(t, {ts[0], ts[1], 1}), theta[layout_.treatment_weight]),
               theta[layout_.treatment_bias]);
  if (!s) return mt;
  if (s->shape() != ts) {
    throw DimensionError("dosages " + shape_string(s->shape()) + " do not match treatments " +
                         shape_string(ts));
  }
  Var ms = add(mul(reshape(*s, {ts[0], ts[1], 1}), theta[*layout_.dosage_weight]),
               theta[*layout_.dosage_bias]);
  const Var parts[] = {mt, ms};
  return apply_linear(theta, *layout_.fusion, concat_last(parts));
}

OutcomeForward TransTEE::forward_outcome(Binding& theta, const TreatmentBatch& batch,
                                         Mode mode) const {
  Tape& tape = theta.tape();
  Var x = tape.constant(batch.x);
  Var t = tape.constant(batch.t);
  std::optional<Var> s;
  if (batch.s) s = tape.constant(*batch.s);

  Var mx = embed_covariates(theta, x);
  for (const auto& block : layout_.covariate_encoder) mx = encoder_block(theta, block, mx, mode);

  Var mst = embed_treatment(theta, t, s);
  for (const auto& block : layout_.treatment_encoder) mst = encoder_block(theta, block, mst, mode);

  OutcomeForward out;
  Var m = mst;
  for (const auto& block : layout_.cross) {
    MultiHeadOutput step = cross_block(theta, block, m, mx);
    m = step.output;
    out.cross_weights.insert(out.cross_weights.end(), step.weights.begin(), step.weights.end());
  }
  Var y = apply_dense_stack(theta, layout_.head, mean_pool(m));
  out.prediction = reshape(y, {batch.size()});
  out.covariate_repr = mean_pool(mx);
  return out;
}

Var TransTEE::predict(Binding& bound, const TreatmentBatch& batch, Mode mode) const {
  return forward_outcome(bound, batch, mode).prediction;
}

PropensityOutput TransTEE::forward_propensity(const Binding& phi, Var covariate_repr) const {
  Var raw = apply_dense_stack(phi, layout_.propensity, covariate_repr);
  const std::size_t n = config_.n_treatments;
  PropensityOutput out;
  if (config_.propensity == PropensityMode::kPoint) {
    out.mean = raw;
    return out;
  }
  out.mean = slice_last(raw, 0, n);
  out.variance = exp(slice_last(raw, n, n));
  return out;
}

ForwardTrace TransTEE::trace(const TreatmentBatch& batch) const {
  Tape tape;
  Binding theta(tape, outcome_, false);
  Binding phi(tape, propensity_, false);
  OutcomeForward fwd = forward_outcome(theta, batch, Mode::kEval);
  PropensityOutput prop = forward_propensity(phi, fwd.covariate_repr);
  ForwardTrace trace;
  const auto& pv = fwd.prediction.value().values();
  trace.prediction.assign(pv.begin(), pv.end());
  for (const Var& w : fwd.cross_weights) trace.cross_weights.push_back(w.value());
  const auto& mv = prop.mean.value().values();
  trace.propensity_mean.assign(mv.begin(), mv.end());
  if (prop.variance.valid()) {
    const auto& vv = prop.variance.value().values();
    trace.propensity_variance.assign(vv.begin(), vv.end());
  }
  return trace;
}

void TransTEE::save(std::ostream& out) const {
  outcome_.save(out);
  propensity_.save(out);
}

void TransTEE::load(std::istream& in) {
  outcome_.load(in);
  propensity_.load(in);
}

std::vector<double> mean_attention(std::span<const Tensor> cross_weights) {
  if (cross_weights.empty()) throw ContractError("no attention weights to summarise");
  const std::size_t p = cross_weights.front().shape().back();
  std::vector<double> acc(p, 0.0);
  double rows_total = 0.0;
  for (const Tensor& w : cross_weights) {
    if (w.shape().back() != p) throw DimensionError("attention maps disagree on p");
    const std::size_t rows = w.size() / p;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < p; ++j) acc[j] += w[r * p + j];
    rows_total += static_cast<double>(rows);
  }
  for (double& v : acc) v /= rows_total;
  return acc;
}

AttentionSummary attention_summary(std::span<const Tensor> cross_weights,
                                   const CovariateGroups& groups) {
  AttentionSummary summary;
  summary.per_covariate = mean_attention(cross_weights);
  if (!groups.is_partition(summary.per_covariate.size())) {
    throw ContractError("covariate groups do not partition the covariate indices");
  }
  for (const auto& group : groups.members) {
    double s = 0.0;
    for (std::size_t i : group) s += summary.per_covariate[i];
    summary.group_sums.push_back(s);
  }
  return summary;
}

}  // namespace transtee
