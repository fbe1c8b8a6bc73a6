// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/gradcheck.hpp"

#include <cmath>
#include <limits>

#include "transtee/errors.hpp"

namespace transtee {

double finite_diff_check(const ScalarFn& f, const GradientFn& analytic,
                         std::span<const double> params, double step) {
  if (!(step > 0.0)) throw ContractError("finite difference step must be positive");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> grad;
  try {
    grad = analytic(params);
  } catch (const NumericError&) {
    return kInf;
  }
  if (grad.size() != params.size()) {
    throw DimensionError("analytic gradient has " + std::to_string(grad.size()) +
                         " entries for " + std::to_string(params.size()) + " parameters");
  }
  std::vector<double> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    double plus, minus;
    try {
      probe[i] = saved + step;
      plus = f(probe);
      probe[i] = saved - step;
      minus = f(probe);
    } catch (const NumericError&) {
      return kInf;
    }
    probe[i] = saved;
    const double central = (plus - minus) / (2.0 * step);
    if (!std::isfinite(central) || !std::isfinite(grad[i])) return kInf;
    const double err = std::abs(grad[i] - central) / std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

std::vector<Tensor> unflatten(const std::vector<Tensor>& like, std::span<const double> flat) {
  std::vector<Tensor> out;
  out.reserve(like.size());
  std::size_t offset = 0;
  for (const Tensor& t : like) {
    std::vector<double> v(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                          flat.begin() + static_cast<std::ptrdiff_t>(offset + t.size()));
    out.emplace_back(t.shape(), std::move(v));
    offset += t.size();
  }
  return out;
}

}  // namespace

double check_tape_gradients(const std::vector<Tensor>& inputs, const TapeBuilder& build,
                            double step) {
  std::vector<double> flat;
  for (const Tensor& t : inputs) flat.insert(flat.end(), t.values().begin(), t.values().end());

  const ScalarFn f = [&](std::span<const double> p) {
    Tape tape;
    std::vector<Var> leaves;
    for (Tensor& t : unflatten(inputs, p)) leaves.push_back(tape.constant(std::move(t)));
    return build(tape, leaves).value()[0];
  };
  const GradientFn g = [&](std::span<const double> p) {
    Tape tape;
    std::vector<Var> leaves;
    for (Tensor& t : unflatten(inputs, p)) leaves.push_back(tape.leaf(std::move(t)));
    tape.backward(build(tape, leaves));
    std::vector<double> out;
    for (const Var& v : leaves) {
      if (v.grad().empty()) {
        out.insert(out.end(), v.value().size(), 0.0);
      } else {
        out.insert(out.end(), v.grad().values().begin(), v.grad().values().end());
      }
    }
    return out;
  };
  return finite_diff_check(f, g, flat, step);
}

}  // namespace transtee
