// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/outcome_model.hpp"

#include <algorithm>

#include "transtee/errors.hpp"

namespace transtee {

TreatmentBatch TreatmentBatch::from_columns(Tensor x, std::span<const double> t,
                                            std::span<const double> s) {
  const std::size_t n = x.dim(0);
  if (t.size() != n) {
    throw DimensionError("treatment column has " + std::to_string(t.size()) + " rows, x has " +
                         std::to_string(n));
  }
  if (!s.empty() && s.size() != n) {
    throw DimensionError("dosage column has " + std::to_string(s.size()) + " rows, x has " +
                         std::to_string(n));
  }
  TreatmentBatch batch;
  batch.x = std::move(x);
  batch.t = Tensor({n, 1}, std::vector<double>(t.begin(), t.end()));
  if (!s.empty()) batch.s = Tensor({n, 1}, std::vector<double>(s.begin(), s.end()));
  return batch;
}

namespace {
Tensor gather_rows(const Tensor& src, std::span<const std::size_t> index) {
  const std::size_t cols = src.size() / src.dim(0);
  Shape shape = src.shape();
  shape[0] = index.size();
  std::vector<double> out;
  out.reserve(index.size() * cols);
  for (std::size_t r : index) {
    const double* row = src.data() + r * cols;
    out.insert(out.end(), row, row + cols);
  }
  return Tensor(std::move(shape), std::move(out));
}
}  // namespace

TreatmentBatch TreatmentBatch::rows(std::span<const std::size_t> index) const {
  TreatmentBatch out;
  out.x = gather_rows(x, index);
  out.t = gather_rows(t, index);
  if (s) out.s = gather_rows(*s, index);
  return out;
}

std::vector<double> ModelResponse::evaluate(const Tensor& x, std::span<const double> t,
                                            std::span<const double> s) const {
  const std::size_t n = x.dim(0);
  const std::size_t p = x.dim(1);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += chunk_) {
    const std::size_t len = std::min(chunk_, n - start);
    Tensor xs({len, p}, std::vector<double>(x.data() + start * p, x.data() + (start + len) * p));
    TreatmentBatch batch = TreatmentBatch::from_columns(
        std::move(xs), t.subspan(start, len), s.empty() ? s : s.subspan(start, len));
    Tape tape;
    Binding bound(tape, model_->params(), false);
    Var pred = model_->predict(bound, batch, Mode::kEval);
    out.insert(out.end(), pred.value().values().begin(), pred.value().values().end());
  }
  return out;
}

}  // namespace transtee
