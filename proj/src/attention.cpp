// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/attention.hpp"

#include <cmath>

#include "transtee/errors.hpp"

namespace transtee {

void AttentionConfig::validate() const {
  if (d_model == 0) throw ConfigError("d_model must be positive");
  if (n_heads == 0) throw ConfigError("n_heads must be positive");
  if (n_layers == 0) throw ConfigError("n_layers must be positive");
  if ((d_k == 0 || d_v == 0) && d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " +
                      std::to_string(n_heads) + " heads");
  }
  if (key_width() == 0 || value_width() == 0) throw ConfigError("per-head width is zero");
}

MultiHeadParams add_multi_head(ParamSet& params, const std::string& name,
                               const AttentionConfig& config, RngStream& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  const std::size_t dk = config.key_width();
  const std::size_t dv = config.value_width();
  MultiHeadParams mh;
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    const std::string prefix = name + ".head" + std::to_string(h);
    HeadParams head;
    head.query = params.add(prefix + ".wq", init_uniform({d, dk}, d, rng));
    head.key = params.add(prefix + ".wk", init_uniform({d, dk}, d, rng));
    head.value = params.add(prefix + ".wv", init_uniform({d, dv}, d, rng));
    mh.heads.push_back(head);
  }
  const std::size_t cat = config.n_heads * dv;
  mh.output = params.add(name + ".wo", init_uniform({cat, d}, cat, rng));
  return mh;
}

MlpParams add_block_mlp(ParamSet& params, const std::string& name, std::size_t width,
                        RngStream& rng) {
  MlpParams mlp;
  mlp.hidden = add_linear(params, name + ".fc1", width, width, rng);
  mlp.output = add_linear(params, name + ".fc2", width, width, rng);
  return mlp;
}

EncoderBlockParams add_encoder_block(ParamSet& params, const std::string& name,
                                     const AttentionConfig& config, RngStream& rng) {
  EncoderBlockParams block;
  block.attention = add_multi_head(params, name + ".attn", config, rng);
  block.norm = add_norm(params, name + ".bn", config.d_model);
  block.mlp = add_block_mlp(params, name + ".mlp", config.d_model, rng);
  return block;
}

CrossBlockParams add_cross_block(ParamSet& params, const std::string& name,
                                 const AttentionConfig& config, RngStream& rng) {
  CrossBlockParams block;
  block.attention = add_multi_head(params, name + ".attn", config, rng);
  block.mlp = add_block_mlp(params, name + ".mlp", config.d_model, rng);
  return block;
}

AttentionOutput scaled_attention(Var q, Var k, Var v) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  const Shape& vs = v.shape();
  if (qs.size() != ks.size() || ks.size() != vs.size() || qs.size() < 2) {
    throw DimensionError("attention operands must share rank: " + shape_string(qs) + ", " +
                         shape_string(ks) + ", " + shape_string(vs));
  }
  const std::size_t dk = qs.back();
  if (dk == 0) throw ConfigError("d_k must be positive");
  if (ks.back() != dk) {
    throw DimensionError("query/key widths differ: " + shape_string(qs) + " vs " +
                         shape_string(ks));
  }
  if (ks[ks.size() - 2] != vs[vs.size() - 2]) {
    throw DimensionError("key/value token counts differ: " + shape_string(ks) + " vs " +
                         shape_string(vs));
  }
  Var logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
  Var weights = softmax_rows(logits);
  return {matmul(weights, v), weights};
}

MultiHeadOutput multi_head(const Binding& bound, const MultiHeadParams& params, Var q_in,
                           Var k_in, Var v_in) {
  const std::size_t d = bound.params().value(params.output).dim(1);
  for (const Var& in : {q_in, k_in, v_in}) {
    if (in.shape().back() != d) {
      throw ConfigError("attention input width " + std::to_string(in.shape().back()) +
                        " does not match d_model " + std::to_string(d));
    }
  }
  const std::size_t dv = bound.params().value(params.heads.front().value).dim(1);
  if (params.heads.size() * dv != bound.params().value(params.output).dim(0)) {
    throw ConfigError("n_heads * d_v does not match the output projection");
  }
  MultiHeadOutput out;
  std::vector<Var> heads;
  for (const HeadParams& h : params.heads) {
    AttentionOutput att = scaled_attention(matmul(q_in, bound[h.query]),
                                           matmul(k_in, bound[h.key]),
                                           matmul(v_in, bound[h.value]));
    heads.push_back(att.output);
    out.weights.push_back(att.weights);
  }
  Var cat = heads.size() == 1 ? heads.front() : concat_last(heads);
  out.output = matmul(cat, bound[params.output]);
  return out;
}

Var block_mlp(const Binding& bound, const MlpParams& mlp, Var input) {
  return apply_linear(bound, mlp.output, relu(apply_linear(bound, mlp.hidden, input)));
}

Var encoder_block(Binding& bound, const EncoderBlockParams& params, Var tokens, Mode mode) {
  Var attended = add(multi_head(bound, params.attention, tokens, tokens, tokens).output, tokens);
  return add(block_mlp(bound, params.mlp, apply_norm(bound, params.norm, attended, mode)),
             attended);
}

MultiHeadOutput cross_block(const Binding& bound, const CrossBlockParams& params, Var queries,
                            Var context) {
  MultiHeadOutput att = multi_head(bound, params.attention, queries, context, context);
  Var attended = add(att.output, queries);
  att.output = add(block_mlp(bound, params.mlp, attended), attended);
  return att;
}

}  // namespace transtee
