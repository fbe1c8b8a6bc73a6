// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace transtee {

/// Counter-based random stream. Draw k is a pure function of (seed, k), so
/// streams are reproducible across runs and platforms and can be split into
/// independent children by key without sharing state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Independent stream derived from this stream's seed and `key`.
  /// Does not advance this stream.
  RngStream split(std::uint64_t key) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (one draw per call, two uniforms consumed).
  double normal();
  double normal(double mean, double stddev);
  double exponential(double rate);
  double gamma(double shape);
  double beta(double a, double b);
  bool bernoulli(double p);
  /// Index drawn proportionally to nonnegative `weights`.
  std::size_t categorical(std::span<const double> weights);
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace transtee
