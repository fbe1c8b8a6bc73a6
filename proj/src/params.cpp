// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/params.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "transtee/errors.hpp"

namespace transtee {

namespace {
constexpr const char* kCheckpointHeader = "transtee-checkpoint v1";
}

ParamId ParamSet::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw ConfigError("duplicate parameter name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  trainable_.push_back(trainable);
  return ParamId{values_.size() - 1};
}

std::optional<ParamId> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return ParamId{i};
  }
  return std::nullopt;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (trainable_[i]) n += values_[i].size();
  }
  return n;
}

void ParamSet::save(std::ostream& out) const {
  out << kCheckpointHeader << '\n' << values_.size() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < values_.size(); ++i) {
    out << (trainable_[i] ? "param " : "buffer ") << names_[i] << ' ' << values_[i].rank();
    for (std::size_t d : values_[i].shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t k = 0; k < values_[i].size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", values_[i][k]);
      out << (k == 0 ? "" : " ") << buf;
    }
    out << '\n';
  }
}

void ParamSet::load(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kCheckpointHeader) {
    throw ParseError("missing checkpoint header", line_no);
  }
  ++line_no;
  std::size_t count = 0;
  if (!std::getline(in, line) || !(std::istringstream(line) >> count)) {
    throw ParseError("missing entry count", line_no);
  }
  if (count != values_.size()) {
    throw SchemaError("checkpoint holds " + std::to_string(count) + " entries, model has " +
                      std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    ++line_no;
    if (!std::getline(in, line)) throw ParseError("truncated checkpoint", line_no);
    std::istringstream head(line);
    std::string kind, name;
    std::size_t rank = 0;
    head >> kind >> name >> rank;
    Shape shape(rank);
    for (auto& d : shape) head >> d;
    if (!head || (kind != "param" && kind != "buffer")) {
      throw ParseError("bad entry header", line_no);
    }
    if (name != names_[i] || shape != values_[i].shape() ||
        (kind == "param") != trainable_[i]) {
      throw SchemaError("checkpoint entry " + name + shape_string(shape) +
                        " does not match model entry " + names_[i] +
                        shape_string(values_[i].shape()));
    }
    ++line_no;
    if (!std::getline(in, line)) throw ParseError("truncated checkpoint", line_no);
    std::istringstream body(line);
    std::vector<double> vals(shape_size(shape));
    for (double& v : vals) {
      std::string tok;
      if (!(body >> tok)) throw ParseError("too few values for " + name, line_no);
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') throw ParseError("bad number " + tok, line_no);
    }
    values_[i] = Tensor(shape, std::move(vals));
  }
}

Tensor init_uniform(Shape shape, std::size_t fan_in, RngStream& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

LinearParams add_linear(ParamSet& params, const std::string& name, std::size_t in,
                        std::size_t out, RngStream& rng) {
  LinearParams layer;
  layer.weight = params.add(name + ".weight", init_uniform({in, out}, in, rng));
  layer.bias = params.add(name + ".bias", init_uniform({out}, in, rng));
  return layer;
}

NormParams add_norm(ParamSet& params, const std::string& name, std::size_t width) {
  NormParams norm;
  norm.gamma = params.add(name + ".gamma", Tensor({width}, 1.0));
  norm.beta = params.add(name + ".beta", Tensor({width}, 0.0));
  norm.running_mean = params.add(name + ".running_mean", Tensor({width}, 0.0), false);
  norm.running_var = params.add(name + ".running_var", Tensor({width}, 1.0), false);
  return norm;
}

Binding::Binding(Tape& tape, const ParamSet& params, bool trainable)
    : tape_(&tape), params_(&params) {
  vars_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamId id{i};
    if (params.trainable(id)) vars_[i] = tape.leaf(params.value(id), trainable);
  }
}

Var Binding::operator[](ParamId id) const {
  const Var& v = vars_.at(id.index);
  if (!v.valid()) throw ContractError("parameter " + params_->name(id) + " is a buffer");
  return v;
}

void Binding::observe_norm(const NormParams& norm, NormObservation observation) {
  observations_.emplace_back(norm, std::move(observation));
}

void Binding::commit_norm_stats(ParamSet& target, double momentum) const {
  for (const auto& [norm, obs] : observations_) {
    update_running_stats(target.value(norm.running_mean), target.value(norm.running_var), obs,
                         momentum);
  }
}

std::vector<Tensor> Binding::gradients() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    const Tensor& value = params_->value(ParamId{i});
    if (vars_[i].valid() && !vars_[i].grad().empty()) {
      out.push_back(vars_[i].grad());
    } else {
      out.emplace_back(value.shape(), 0.0);
    }
  }
  return out;
}

Var apply_linear(const Binding& bound, const LinearParams& layer, Var input) {
  return linear(input, bound[layer.weight], bound[layer.bias]);
}

DenseStack add_dense_stack(ParamSet& params, const std::string& name,
                           const std::vector<std::size_t>& widths, RngStream& rng) {
  if (widths.size() < 2) throw ConfigError("dense stack needs at least input and output widths");
  DenseStack stack;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0) throw ConfigError("layer width must be positive");
    stack.layers.push_back(
        add_linear(params, name + ".fc" + std::to_string(i), widths[i], widths[i + 1], rng));
  }
  return stack;
}

Var apply_dense_stack(const Binding& bound, const DenseStack& stack, Var input) {
  Var h = input;
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    if (i > 0) h = relu(h);
    h = apply_linear(bound, stack.layers[i], h);
  }
  return h;
}

Var apply_norm(Binding& bound, const NormParams& norm, Var input, Mode mode) {
  if (mode == Mode::kEval) {
    return batch_norm(input, bound[norm.gamma], bound[norm.beta], bound.buffer(norm.running_mean),
                      bound.buffer(norm.running_var), NormMode::kRunningStats);
  }
  NormObservation obs;
  Var out = batch_norm(input, bound[norm.gamma], bound[norm.beta],
                       bound.buffer(norm.running_mean), bound.buffer(norm.running_var),
                       NormMode::kBatchStats, &obs);
  bound.observe_norm(norm, std::move(obs));
  return out;
}

}  // namespace transtee
