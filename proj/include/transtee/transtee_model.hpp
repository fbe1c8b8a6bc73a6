// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "transtee/attention.hpp"
#include "transtee/covariate_groups.hpp"
#include "transtee/outcome_model.hpp"

namespace transtee {

enum class PropensityMode {
  kPoint,     // one predicted treatment per slot (TR)
  kGaussian,  // mean and variance per slot (PTR)
};

struct TransTEEConfig {
  std::size_t p = 1;             // covariates
  std::size_t n_treatments = 1;  // simultaneous treatment tokens
  bool has_dosage = false;
  std::size_t d_model = 10;
  std::size_t n_heads = 2;
  std::size_t n_layers = 1;
  std::size_t head_hidden = 0;        // 0 selects d_model
  std::size_t propensity_hidden = 0;  // 0 selects d_model
  PropensityMode propensity = PropensityMode::kPoint;

  AttentionConfig attention() const;
  void validate() const;
};

struct OutcomeForward {
  Var prediction;                  // [B]
  Var covariate_repr;              // [B, d_model], mean of covariate-encoder tokens
  std::vector<Var> cross_weights;  // layer-major then head; each [B, n_treatments, p]
};

struct PropensityOutput {
  Var mean;      // [B, n_treatments]
  Var variance;  // [B, n_treatments], gaussian mode only
};

/// Numeric snapshot of one eval-mode forward pass.
struct ForwardTrace {
  std::vector<double> prediction;
  std::vector<Tensor> cross_weights;
  std::vector<double> propensity_mean;
  std::vector<double> propensity_variance;
};

/// Transformer treatment-effect estimator. Outcome parameters (theta) and the
/// propensity head (phi) live in separate ParamSets so the adversarial trainer
/// can update them independently.
class TransTEE final : public OutcomeModel {
 public:
  TransTEE(TransTEEConfig config, RngStream rng);

  const TransTEEConfig& config() const noexcept { return config_; }
  std::string kind() const override { return "transtee"; }
  ParamSet& params() override { return outcome_; }
  const ParamSet& params() const override { return outcome_; }
  ParamSet& propensity_params() { return propensity_; }
  const ParamSet& propensity_params() const { return propensity_; }
  std::unique_ptr<OutcomeModel> clone() const override;

  /// x:[B,p] -> [B,p,d]; row i uses covariate i's own affine map.
  Var embed_covariates(const Binding& theta, Var x) const;
  /// t:[B,n] (and s:[B,n] iff has_dosage) -> [B,n,d].
  Var embed_treatment(const Binding& theta, Var t, std::optional<Var> s) const;

  OutcomeForward forward_outcome(Binding& theta, const TreatmentBatch& batch, Mode mode) const;
  Var predict(Binding& bound, const TreatmentBatch& batch, Mode mode) const override;

  /// Propensity head on the pooled covariate representation.
  PropensityOutput forward_propensity(const Binding& phi, Var covariate_repr) const;

  ForwardTrace trace(const TreatmentBatch& batch) const;

  void save(std::ostream& out) const override;
  void load(std::istream& in) override;

  struct Layout {
    ParamId covariate_weight;  // [p, d]
    ParamId covariate_bias;    // [p, d]
    ParamId treatment_weight;  // [d]
    ParamId treatment_bias;    // [d]
    std::optional<ParamId> dosage_weight;
    std::optional<ParamId> dosage_bias;
    std::optional<LinearParams> fusion;  // 2d -> d
    std::vector<EncoderBlockParams> covariate_encoder;
    std::vector<EncoderBlockParams> treatment_encoder;
    std::vector<CrossBlockParams> cross;
    DenseStack head;
    DenseStack propensity;
  };
  const Layout& layout() const noexcept { return layout_; }

 private:
  TransTEEConfig config_;
  ParamSet outcome_;
  ParamSet propensity_;
  Layout layout_;
};

struct AttentionSummary {
  std::vector<double> per_covariate;  // averaged weight per covariate, sums to 1
  std::vector<double> group_sums;     // aligned with CovariateGroups
};

/// Averages cross-attention weights over batch, treatment queries, heads and
/// layers, then sums within each group. Throws ContractError unless `groups`
/// partitions {0..p-1}.
AttentionSummary attention_summary(std::span<const Tensor> cross_weights,
                                   const CovariateGroups& groups);

/// Per-covariate average without grouping.
std::vector<double> mean_attention(std::span<const Tensor> cross_weights);

}  // namespace transtee
