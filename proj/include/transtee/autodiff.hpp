// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "transtee/tensor.hpp"

namespace transtee {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient buffer filled by Tape::backward. Empty if the node has none.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool requires_grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only computation record. Nodes are stored in creation order, which is
/// a topological order; backward() walks it in reverse. Single-threaded.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op result. `backward` is dropped when no input requires grad.
  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs,
             BackwardFn backward);

  /// Reverse sweep from a scalar root. Every requires_grad node ends up with a
  /// gradient buffer of its own shape; previous gradients are discarded.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Gradient buffer of `id` for accumulation during backward; nullptr when the
  /// node does not require grad.
  Tensor* grad_accumulator(std::size_t id);

 private:
  struct Node {
    const char* op;
    Tensor value;
    Tensor grad;
    bool requires_grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. All inputs must live on the same tape.

/// Matrix product. Accepts [m,k]x[k,n], batched [B,m,k]x[B,k,n], and
/// [B,m,k]x[k,n] (right operand shared across the batch).
Var matmul(Var a, Var b);
/// Swaps the last two axes.
Var transpose(Var a);

/// Elementwise binary ops with right-aligned (numpy) broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var relu(Var a);
Var exp(Var a);
/// Throws NumericError on nonpositive input.
Var log(Var a);
Var square(Var a);

enum class Elementwise { kAdd, kSub, kMul, kRelu, kExp, kLog, kSquare };
/// Dispatching form; `b` is ignored for unary kinds.
Var elementwise(Elementwise kind, Var a, Var b = {});

/// Sum of all elements, shape [1].
Var sum(Var a);
Var mean(Var a);
Var sum_axis(Var a, std::size_t axis);
Var mean_axis(Var a, std::size_t axis);
/// Mean over the token axis: [tokens,d] -> [d], [B,tokens,d] -> [B,d].
Var mean_pool(Var a);

/// Softmax along the last axis, stabilised by subtracting the row max.
Var softmax_rows(Var a);

Var reshape(Var a, Shape shape);
Var concat_last(std::span<const Var> parts);
Var slice_last(Var a, std::size_t start, std::size_t length);
/// Same value, cut from the gradient graph.
Var detach(Var a);

/// a*w + b with w:[k,n], b:[n]; a may be [m,k] or [B,m,k].
Var linear(Var a, Var w, Var b);

enum class NormMode { kBatchStats, kRunningStats };

/// Per-feature batch statistics seen by a training-mode batch_norm call.
struct NormObservation {
  Tensor mean;
  Tensor unbiased_var;
};

inline constexpr double kNormEps = 1e-5;
inline constexpr double kNormMomentum = 0.1;

/// Normalises the last axis over all leading positions. kBatchStats uses the
/// batch mean/variance (and reports them through `observed`); kRunningStats
/// uses the supplied running statistics.
Var batch_norm(Var a, Var gamma, Var beta, const Tensor& running_mean,
               const Tensor& running_var, NormMode mode,
               NormObservation* observed = nullptr, double eps = kNormEps);

void update_running_stats(Tensor& running_mean, Tensor& running_var,
                          const NormObservation& observed,
                          double momentum = kNormMomentum);

}  // namespace transtee
