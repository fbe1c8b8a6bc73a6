// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace transtee {

/// Named groups of 0-based covariate indices (e.g. confounders, outcome-only,
/// treatment-only covariates).
struct CovariateGroups {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> members;

  std::size_t size() const { return names.size(); }
  /// True when the groups cover {0..p-1} exactly once.
  bool is_partition(std::size_t p) const;
};

}  // namespace transtee
