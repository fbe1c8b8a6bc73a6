// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "transtee/autodiff.hpp"

namespace transtee {

using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// Max over coordinates of |analytic - central| / max(1, |central|).
/// Returns +Inf if any evaluation is non-finite.
double finite_diff_check(const ScalarFn& f, const GradientFn& analytic,
                         std::span<const double> params, double step);

/// Builds a scalar on a fresh tape from leaves holding `inputs`.
using TapeBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// finite_diff_check over every element of every input tensor, with the
/// analytic gradient taken from Tape::backward.
double check_tape_gradients(const std::vector<Tensor>& inputs, const TapeBuilder& build,
                            double step = 1e-5);

}  // namespace transtee
