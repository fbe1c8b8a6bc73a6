// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <string>
#include <vector>

#include "transtee/autodiff.hpp"
#include "transtee/params.hpp"

namespace transtee {

struct AttentionConfig {
  std::size_t d_model = 10;
  std::size_t n_heads = 2;
  /// Per-head key/query width; 0 selects d_model / n_heads.
  std::size_t d_k = 0;
  /// Per-head value width; 0 selects d_model / n_heads.
  std::size_t d_v = 0;
  std::size_t n_layers = 1;

  std::size_t key_width() const { return d_k != 0 ? d_k : d_model / n_heads; }
  std::size_t value_width() const { return d_v != 0 ? d_v : d_model / n_heads; }
  /// Throws ConfigError on inconsistent widths.
  void validate() const;
};

struct HeadParams {
  ParamId query;  // [d_model, d_k]
  ParamId key;    // [d_model, d_k]
  ParamId value;  // [d_model, d_v]
};

struct MultiHeadParams {
  std::vector<HeadParams> heads;
  ParamId output;  // [n_heads * d_v, d_model]
};

/// Two-layer ReLU MLP d -> d -> d.
struct MlpParams {
  LinearParams hidden;
  LinearParams output;
};

struct EncoderBlockParams {
  MultiHeadParams attention;
  NormParams norm;
  MlpParams mlp;
};

struct CrossBlockParams {
  MultiHeadParams attention;
  MlpParams mlp;
};

MultiHeadParams add_multi_head(ParamSet& params, const std::string& name,
                               const AttentionConfig& config, RngStream& rng);
MlpParams add_block_mlp(ParamSet& params, const std::string& name, std::size_t width,
                        RngStream& rng);
EncoderBlockParams add_encoder_block(ParamSet& params, const std::string& name,
                                     const AttentionConfig& config, RngStream& rng);
CrossBlockParams add_cross_block(ParamSet& params, const std::string& name,
                                 const AttentionConfig& config, RngStream& rng);

struct AttentionOutput {
  Var output;
  Var weights;  // [.., m, n], rows sum to 1
};

/// softmax(q k^T / sqrt(d_k)) v for q:[..,m,d_k], k:[..,n,d_k], v:[..,n,d_v].
AttentionOutput scaled_attention(Var q, Var k, Var v);

struct MultiHeadOutput {
  Var output;
  std::vector<Var> weights;  // one per head
};

MultiHeadOutput multi_head(const Binding& bound, const MultiHeadParams& params, Var q_in,
                           Var k_in, Var v_in);

Var block_mlp(const Binding& bound, const MlpParams& mlp, Var input);

/// Self-attention with residual, then MLP(BN(.)) with residual.
Var encoder_block(Binding& bound, const EncoderBlockParams& params, Var tokens, Mode mode);

/// Queries attend over context with a residual on the query path, then
/// MLP(.) with residual. No normalisation on this branch.
MultiHeadOutput cross_block(const Binding& bound, const CrossBlockParams& params, Var queries,
                            Var context);

}  // namespace transtee
