// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transtee/autodiff.hpp"
#include "transtee/params.hpp"
#include "transtee/tensor.hpp"

namespace transtee {

/// Something that maps (x, t[, s]) rows to responses: a fitted model or a
/// generator's ground-truth oracle.
class ResponseFunction {
 public:
  virtual ~ResponseFunction() = default;
  /// One value per row of `x` ([N, p]); `t` has N entries, `s` is empty or N.
  virtual std::vector<double> evaluate(const Tensor& x, std::span<const double> t,
                                       std::span<const double> s) const = 0;
};

/// Model inputs for one batch: x [B,p], t [B,n], optional s [B,n].
struct TreatmentBatch {
  Tensor x;
  Tensor t;
  std::optional<Tensor> s;

  std::size_t size() const { return x.dim(0); }
  /// Single-treatment batch from flat columns.
  static TreatmentBatch from_columns(Tensor x, std::span<const double> t,
                                     std::span<const double> s = {});
  TreatmentBatch rows(std::span<const std::size_t> index) const;
};

/// Outcome regressor trained on squared error.
class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;

  virtual std::string kind() const = 0;
  virtual ParamSet& params() = 0;
  virtual const ParamSet& params() const = 0;
  /// Predictions [B] for the batch.
  virtual Var predict(Binding& bound, const TreatmentBatch& batch, Mode mode) const = 0;
  virtual std::unique_ptr<OutcomeModel> clone() const = 0;

  virtual void save(std::ostream& out) const { params().save(out); }
  virtual void load(std::istream& in) { params().load(in); }
};

/// Evaluates a frozen OutcomeModel in eval mode, chunked to bound tape size.
class ModelResponse : public ResponseFunction {
 public:
  explicit ModelResponse(const OutcomeModel& model, std::size_t chunk = 4096)
      : model_(&model), chunk_(chunk) {}
  std::vector<double> evaluate(const Tensor& x, std::span<const double> t,
                               std::span<const double> s) const override;

 private:
  const OutcomeModel* model_;
  std::size_t chunk_;
};

}  // namespace transtee
