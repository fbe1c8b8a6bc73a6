// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "transtee/autodiff.hpp"
#include "transtee/rng.hpp"
#include "transtee/tensor.hpp"

namespace transtee {

struct ParamId {
  std::size_t index = 0;
};

/// Named, ordered collection of model tensors. Trainable entries are
/// optimised; buffers (batch-norm running statistics) are carried along for
/// evaluation and checkpointing only.
class ParamSet {
 public:
  ParamId add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(ParamId id) const { return names_.at(id.index); }
  bool trainable(ParamId id) const { return trainable_.at(id.index); }
  Tensor& value(ParamId id) { return values_.at(id.index); }
  const Tensor& value(ParamId id) const { return values_.at(id.index); }
  std::optional<ParamId> find(const std::string& name) const;

  /// Number of trainable scalars.
  std::size_t scalar_count() const;

  /// Text checkpoint: header line, then one `param|buffer name rank dims...`
  /// line per entry followed by its values printed with 17 significant digits.
  void save(std::ostream& out) const;
  /// Loads values into an already-structured set; names and shapes must match.
  void load(std::istream& in);

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<bool> trainable_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Tensor init_uniform(Shape shape, std::size_t fan_in, RngStream& rng);

struct LinearParams {
  ParamId weight;  // [in, out]
  ParamId bias;    // [out]
};

LinearParams add_linear(ParamSet& params, const std::string& name, std::size_t in,
                        std::size_t out, RngStream& rng);

struct NormParams {
  ParamId gamma;
  ParamId beta;
  ParamId running_mean;  // buffer
  ParamId running_var;   // buffer
};

NormParams add_norm(ParamSet& params, const std::string& name, std::size_t width);

/// A ParamSet placed on a tape for one forward pass. Trainable entries become
/// leaves (requiring grad when `trainable` is true); buffers are read directly.
class Binding {
 public:
  Binding(Tape& tape, const ParamSet& params, bool trainable);

  Tape& tape() const noexcept { return *tape_; }
  Var operator[](ParamId id) const;
  const Tensor& buffer(ParamId id) const { return params_->value(id); }
  const ParamSet& params() const noexcept { return *params_; }

  /// Records batch statistics seen by a training-mode batch norm.
  void observe_norm(const NormParams& norm, NormObservation observation);
  /// Folds recorded batch statistics into the running buffers of `target`.
  void commit_norm_stats(ParamSet& target, double momentum = kNormMomentum) const;

  /// Gradients after Tape::backward, aligned with ParamSet entries. Buffers and
  /// untouched entries yield zero tensors.
  std::vector<Tensor> gradients() const;

 private:
  Tape* tape_;
  const ParamSet* params_;
  std::vector<Var> vars_;
  std::vector<std::pair<NormParams, NormObservation>> observations_;
};

Var apply_linear(const Binding& bound, const LinearParams& layer, Var input);

/// Affine layers with ReLU between them (none after the last).
struct DenseStack {
  std::vector<LinearParams> layers;
};

/// widths = {in, hidden..., out}.
DenseStack add_dense_stack(ParamSet& params, const std::string& name,
                           const std::vector<std::size_t>& widths, RngStream& rng);
Var apply_dense_stack(const Binding& bound, const DenseStack& stack, Var input);

enum class Mode { kTrain, kEval };

/// Batch norm bound to NormParams. In kTrain the batch statistics are
/// recorded on `bound` for a later commit.
Var apply_norm(Binding& bound, const NormParams& norm, Var input, Mode mode);

}  // namespace transtee
