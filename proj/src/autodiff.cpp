// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The transtee-cpp Authors

#include "transtee/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <cblas.h>

#include "transtee/errors.hpp"

namespace transtee {

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("non-finite value in leaf tensor");
  nodes_.push_back(Node{"leaf", std::move(value), Tensor(), requires_grad, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output from ") + op + " at node " +
                       std::to_string(nodes_.size()));
  }
  bool needs = false;
  for (std::size_t in : inputs) needs = needs || nodes_[in].requires_grad;
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{op, std::move(value), Tensor(), needs, std::move(inputs),
                        std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_accumulator(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return &node.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ContractError("backward root belongs to another tape");
  if (root.value().size() != 1) {
    throw ContractError("backward root must be scalar, got " +
                        shape_string(root.value().shape()));
  }
  for (std::size_t i = 0; i <= root.id(); ++i) {
    Node& node = nodes_[i];
    if (node.requires_grad) {
      node.grad = Tensor(node.value.shape(), 0.0);
    } else {
      node.grad = Tensor();
    }
  }
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad.fill(1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad) continue;
    if (!node.grad.all_finite()) {
      throw NumericError(std::string("non-finite gradient at node ") + std::to_string(i) +
                         " (" + node.op + ")");
    }
    if (node.backward) node.backward(*this, i);
  }
}

// ---------------------------------------------------------------------------
// helpers

namespace {

blasint blas_int(std::size_t v) { return static_cast<blasint>(v); }

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw ContractError("operation on an unbound Var");
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

// out-of-place C(m,n) += A(m,k) * B(k,n)
// Products at or above this many multiply-adds go to BLAS.
constexpr std::size_t kBlasThreshold = 4096;

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  if (m * k * n >= kBlasThreshold) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(m), blas_int(n), blas_int(k),
                1.0, a, blas_int(k), b, blas_int(n), 1.0, c, blas_int(n));
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m,k) += G(m,n) * B(k,n)^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b,
             double* c) {
  if (m * k * n >= kBlasThreshold) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_int(m), blas_int(k), blas_int(n),
                1.0, g, blas_int(n), b, blas_int(n), 1.0, c, blas_int(k));
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C(k,n) += A(m,k)^T * G(m,n)
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* g,
             double* c) {
  if (m * k * n >= kBlasThreshold) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(k), blas_int(n), blas_int(m),
                1.0, a, blas_int(k), g, blas_int(n), 1.0, c, blas_int(n));
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError("cannot broadcast " + shape_string(a) + " with " +
                           shape_string(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : acc_a;
    sb[i] = pb[i] == 1 ? 0 : acc_b;
    acc_a *= pa[i];
    acc_b *= pb[i];
  }
  const std::size_t total = shape_size(plan.out);
  plan.a_index.resize(total);
  plan.b_index.resize(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    plan.a_index[flat] = ia;
    plan.b_index[flat] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < plan.out[d]) break;
      ia -= sa[d] * idx[d];
      ib -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return plan;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

const char* binary_name(BinaryKind kind) {
  switch (kind) {
    case BinaryKind::kAdd: return "add";
    case BinaryKind::kSub: return "sub";
    case BinaryKind::kMul: return "mul";
    case BinaryKind::kDiv: return "div";
  }
  return "binary";
}

inline double apply_binary(BinaryKind kind, double x, double y) {
  switch (kind) {
    case BinaryKind::kAdd: return x + y;
    case BinaryKind::kSub: return x - y;
    case BinaryKind::kMul: return x * y;
    case BinaryKind::kDiv: return x / y;
  }
  return 0.0;
}

Var binary(BinaryKind kind, Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(av.shape(), bv.shape()));
  Tensor out(plan->out);
  const std::size_t total = out.size();
  if (kind == BinaryKind::kDiv) {
    for (std::size_t i = 0; i < bv.size(); ++i) {
      if (bv[i] == 0.0) throw NumericError("division by zero");
    }
  }
  if (plan->same) {
    for (std::size_t i = 0; i < total; ++i) out[i] = apply_binary(kind, av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < total; ++i) {
      out[i] = apply_binary(kind, av[plan->a_index[i]], bv[plan->b_index[i]]);
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(
      binary_name(kind), std::move(out), {ia, ib},
      [kind, ia, ib, plan](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        Tensor* gx = t.grad_accumulator(ia);
        Tensor* gy = t.grad_accumulator(ib);
        const std::size_t total = g.size();
        for (std::size_t i = 0; i < total; ++i) {
          const std::size_t xa = plan->same ? i : plan->a_index[i];
          const std::size_t yb = plan->same ? i : plan->b_index[i];
          const double gi = g[i];
          switch (kind) {
            case BinaryKind::kAdd:
              if (gx) (*gx)[xa] += gi;
              if (gy) (*gy)[yb] += gi;
              break;
            case BinaryKind::kSub:
              if (gx) (*gx)[xa] += gi;
              if (gy) (*gy)[yb] -= gi;
              break;
            case BinaryKind::kMul:
              if (gx) (*gx)[xa] += gi * y[yb];
              if (gy) (*gy)[yb] += gi * x[xa];
              break;
            case BinaryKind::kDiv:
              if (gx) (*gx)[xa] += gi / y[yb];
              if (gy) (*gy)[yb] -= gi * x[xa] / (y[yb] * y[yb]);
              break;
          }
        }
      });
}

template <typename Fwd, typename Deriv>
Var unary(const char* name, Var a, Fwd fwd, Deriv deriv) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t ia = a.id();
  return tape.record(name, std::move(out), {ia},
                     [ia, deriv](Tape& t, std::size_t self) {
                       Tensor* gx = t.grad_accumulator(ia);
                       if (!gx) return;
                       const Tensor& g = t.grad(self);
                       const Tensor& x = t.value(ia);
                       const Tensor& y = t.value(self);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         (*gx)[i] += g[i] * deriv(x[i], y[i]);
                       }
                     });
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul / transpose

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape& sa = av.shape();
  const Shape& sb = bv.shape();
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  bool shared_rhs = false;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0];
    k = sa[1];
    n = sb[1];
    if (sb[0] != k) {
      throw DimensionError("matmul inner dimensions differ: " + shape_string(sa) + " x " +
                           shape_string(sb));
    }
    out_shape = {m, n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    batch = sa[0];
    m = sa[1];
    k = sa[2];
    n = sb[2];
    if (sb[0] != batch || sb[1] != k) {
      throw DimensionError("matmul dimensions differ: " + shape_string(sa) + " x " +
                           shape_string(sb));
    }
    out_shape = {batch, m, n};
  } else if (sa.size() == 3 && sb.size() == 2) {
    // Fold the batch into rows.
    m = sa[0] * sa[1];
    k = sa[2];
    n = sb[1];
    shared_rhs = true;
    if (sb[0] != k) {
      throw DimensionError("matmul inner dimensions differ: " + shape_string(sa) + " x " +
                           shape_string(sb));
    }
    out_shape = {sa[0], sa[1], n};
  } else {
    throw DimensionError("unsupported matmul ranks: " + shape_string(sa) + " x " +
                         shape_string(sb));
  }
  Tensor out(out_shape, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    gemm_nn(m, k, n, av.data() + bi * m * k, bv.data() + (shared_rhs ? 0 : bi * k * n),
            out.data() + bi * m * n);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("matmul", std::move(out), {ia, ib},
                     [=](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& x = t.value(ia);
                       const Tensor& y = t.value(ib);
                       Tensor* gx = t.grad_accumulator(ia);
                       Tensor* gy = t.grad_accumulator(ib);
                       for (std::size_t bi = 0; bi < batch; ++bi) {
                         const double* gb = g.data() + bi * m * n;
                         const std::size_t yoff = shared_rhs ? 0 : bi * k * n;
                         if (gx) gemm_nt(m, n, k, gb, y.data() + yoff, gx->data() + bi * m * k);
                         if (gy) gemm_tn(m, k, n, x.data() + bi * m * k, gb, gy->data() + yoff);
                       }
                     });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const Shape& s = av.shape();
  if (s.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_string(s));
  const std::size_t r = s[s.size() - 2];
  const std::size_t c = s[s.size() - 1];
  const std::size_t batch = av.size() / (r * c);
  Shape os = s;
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  Tensor out(os);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = av.data() + b * r * c;
    double* dst = out.data() + b * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  const std::size_t ia = a.id();
  return tape.record("transpose", std::move(out), {ia},
                     [=](Tape& t, std::size_t self) {
                       Tensor* gx = t.grad_accumulator(ia);
                       if (!gx) return;
                       const Tensor& g = t.grad(self);
                       for (std::size_t b = 0; b < batch; ++b) {
                         const double* src = g.data() + b * r * c;
                         double* dst = gx->data() + b * r * c;
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) dst[i * c + j] += src[j * r + i];
                       }
                     });
}

// ---------------------------------------------------------------------------
// elementwise

Var add(Var a, Var b) { return binary(BinaryKind::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(BinaryKind::kSub, a, b); }
Var mul(Var a, Var b) { return binary(BinaryKind::kMul, a, b); }
Var div(Var a, Var b) { return binary(BinaryKind::kDiv, a, b); }

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError("log of nonpositive value " + std::to_string(v));
  }
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var elementwise(Elementwise kind, Var a, Var b) {
  switch (kind) {
    case Elementwise::kAdd: return add(a, b);
    case Elementwise::kSub: return sub(a, b);
    case Elementwise::kMul: return mul(a, b);
    case Elementwise::kRelu: return relu(a);
    case Elementwise::kExp: return exp(a);
    case Elementwise::kLog: return log(a);
    case Elementwise::kSquare: return square(a);
  }
  throw ContractError("unknown elementwise kind");
}

// ---------------------------------------------------------------------------
// reductions

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::size_t ia = a.id();
  return tape.record("sum", Tensor::scalar(total), {ia}, [ia](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_accumulator(ia);
    if (!gx) return;
    const double g = t.grad(self)[0];
    for (double& v : gx->values()) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_axis(Var a, std::size_t axis) {
  Tape& tape = tape_of(a);
  const Shape& s = a.value().shape();
  const AxisSplit sp = split_axis(s, axis);
  Shape os;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) os.push_back(s[i]);
  if (os.empty()) os.push_back(1);
  Tensor out(os, 0.0);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t e = 0; e < sp.extent; ++e)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += av[(o * sp.extent + e) * sp.inner + i];
  const std::size_t ia = a.id();
  return tape.record("sum_axis", std::move(out), {ia}, [ia, sp](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_accumulator(ia);
    if (!gx) return;
    const Tensor& g = t.grad(self);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t e = 0; e < sp.extent; ++e)
        for (std::size_t i = 0; i < sp.inner; ++i)
          (*gx)[(o * sp.extent + e) * sp.inner + i] += g[o * sp.inner + i];
  });
}

Var mean_axis(Var a, std::size_t axis) {
  const std::size_t extent = split_axis(a.value().shape(), axis).extent;
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(extent));
}

Var mean_pool(Var a) {
  const std::size_t rank = a.value().rank();
  if (rank != 2 && rank != 3) {
    throw DimensionError("mean_pool expects [tokens,d] or [B,tokens,d], got " +
                         shape_string(a.value().shape()));
  }
  return mean_axis(a, rank - 2);
}

// ---------------------------------------------------------------------------
// softmax

Var softmax_rows(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  for (double v : av.values()) {
    if (std::isnan(v)) throw NumericError("softmax_rows input contains NaN");
  }
  const std::size_t cols = av.shape().back();
  const std::size_t rows = av.size() / cols;
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = av.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  const std::size_t ia = a.id();
  return tape.record("softmax_rows", std::move(out), {ia},
                     [ia, rows, cols](Tape& t, std::size_t self) {
                       Tensor* gx = t.grad_accumulator(ia);
                       if (!gx) return;
                       const Tensor& g = t.grad(self);
                       const Tensor& y = t.value(self);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* yr = y.data() + r * cols;
                         const double* gr = g.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
                         double* xr = gx->data() + r * cols;
                         for (std::size_t c = 0; c < cols; ++c) xr[c] += yr[c] * (gr[c] - dot);
                       }
                     });
}

// ---------------------------------------------------------------------------
// shape ops

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return tape.record("reshape", std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    Tensor* gx = t.grad_accumulator(ia);
    if (!gx) return;
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  });
}

Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_last of nothing");
  Tape& tape = tape_of(parts[0]);
  const Shape& s0 = parts[0].value().shape();
  const std::size_t rows = parts[0].value().size() / s0.back();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    const Shape& s = p.value().shape();
    if (s.size() != s0.size() || !std::equal(s.begin(), s.end() - 1, s0.begin())) {
      throw DimensionError("concat_last leading shapes differ: " + shape_string(s0) + " vs " +
                           shape_string(s));
    }
    widths.push_back(s.back());
    ids.push_back(p.id());
    total += s.back();
  }
  Shape os = s0;
  os.back() = total;
  Tensor out(os);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  return tape.record("concat_last", std::move(out), ids,
                     [ids, widths, rows, total](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (Tensor* gx = t.grad_accumulator(ids[k])) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < widths[k]; ++c)
                               (*gx)[r * widths[k] + c] += g[r * total + offset + c];
                         }
                         offset += widths[k];
                       }
                     });
}

Var slice_last(Var a, std::size_t start, std::size_t length) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t cols = av.shape().back();
  if (length == 0 || start + length > cols) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range for " +
                         shape_string(av.shape()));
  }
  const std::size_t rows = av.size() / cols;
  Shape os = av.shape();
  os.back() = length;
  Tensor out(os);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(av.data() + r * cols + start, length, out.data() + r * length);
  const std::size_t ia = a.id();
  return tape.record("slice_last", std::move(out), {ia},
                     [=](Tape& t, std::size_t self) {
                       Tensor* gx = t.grad_accumulator(ia);
                       if (!gx) return;
                       const Tensor& g = t.grad(self);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < length; ++c)
                           (*gx)[r * cols + start + c] += g[r * length + c];
                     });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

Var linear(Var a, Var w, Var b) {
  const Shape& ws = w.value().shape();
  const Shape& bs = b.value().shape();
  if (ws.size() != 2 || bs.size() != 1 || bs[0] != ws[1]) {
    throw DimensionError("linear weight/bias mismatch: " + shape_string(ws) + ", " +
                         shape_string(bs));
  }
  return add(matmul(a, w), b);
}

// ---------------------------------------------------------------------------
// batch norm

Var batch_norm(Var a, Var gamma, Var beta, const Tensor& running_mean,
               const Tensor& running_var, NormMode mode, NormObservation* observed,
               double eps) {
  Tape& tape = same_tape(a, gamma);
  same_tape(a, beta);
  const Tensor& av = a.value();
  const std::size_t d = av.shape().back();
  const std::size_t rows = av.size() / d;
  if (gamma.value().size() != d || beta.value().size() != d || running_mean.size() != d ||
      running_var.size() != d) {
    throw DimensionError("batch_norm parameters do not match feature width " +
                         std::to_string(d));
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(av.shape());
  const std::size_t ia = a.id(), ig = gamma.id(), ib = beta.id();

  if (mode == NormMode::kRunningStats) {
    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(running_var[j] + eps);
    std::vector<double> mu(running_mean.values().begin(), running_mean.values().end());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j)
        out[r * d + j] = gv[j] * (av[r * d + j] - mu[j]) * inv_std[j] + bv[j];
    return tape.record("batch_norm_eval", std::move(out), {ia, ig, ib},
                       [=](Tape& t, std::size_t self) {
                         const Tensor& g = t.grad(self);
                         const Tensor& x = t.value(ia);
                         const Tensor& gam = t.value(ig);
                         Tensor* gx = t.grad_accumulator(ia);
                         Tensor* gg = t.grad_accumulator(ig);
                         Tensor* gb = t.grad_accumulator(ib);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gi = g[r * d + j];
                             const double xhat = (x[r * d + j] - mu[j]) * inv_std[j];
                             if (gx) (*gx)[r * d + j] += gi * gam[j] * inv_std[j];
                             if (gg) (*gg)[j] += gi * xhat;
                             if (gb) (*gb)[j] += gi;
                           }
                       });
  }

  if (rows < 2) throw ContractError("batch_norm in training mode needs at least 2 rows");
  std::vector<double> mu(d, 0.0), var(d, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) mu[j] += av[r * d + j];
  for (double& m : mu) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = av[r * d + j] - mu[j];
      var[j] += c * c;
    }
  for (double& v : var) v /= static_cast<double>(rows);
  auto xhat = std::make_shared<std::vector<double>>(av.size());
  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (av[r * d + j] - mu[j]) * inv_std[j];
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = gv[j] * xh + bv[j];
    }
  if (observed) {
    observed->mean = Tensor({d}, mu);
    std::vector<double> unbiased(d);
    const double n = static_cast<double>(rows);
    for (std::size_t j = 0; j < d; ++j) unbiased[j] = var[j] * n / (n - 1.0);
    observed->unbiased_var = Tensor({d}, std::move(unbiased));
  }
  return tape.record(
      "batch_norm", std::move(out), {ia, ig, ib},
      [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& gam = t.value(ig);
        Tensor* gx = t.grad_accumulator(ia);
        Tensor* gg = t.grad_accumulator(ig);
        Tensor* gb = t.grad_accumulator(ib);
        std::vector<double> sum_g(d, 0.0), sum_gx(d, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) {
            sum_g[j] += g[r * d + j];
            sum_gx[j] += g[r * d + j] * (*xhat)[r * d + j];
          }
        if (gg)
          for (std::size_t j = 0; j < d; ++j) (*gg)[j] += sum_gx[j];
        if (gb)
          for (std::size_t j = 0; j < d; ++j) (*gb)[j] += sum_g[j];
        if (gx) {
          const double n = static_cast<double>(rows);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) {
              const double gi = g[r * d + j];
              (*gx)[r * d + j] += gam[j] * inv_std[j] / n *
                                  (n * gi - sum_g[j] - (*xhat)[r * d + j] * sum_gx[j]);
            }
        }
      });
}

void update_running_stats(Tensor& running_mean, Tensor& running_var,
                          const NormObservation& observed, double momentum) {
  if (observed.mean.size() != running_mean.size() ||
      observed.unbiased_var.size() != running_var.size()) {
    throw DimensionError("running statistics width mismatch");
  }
  for (std::size_t j = 0; j < running_mean.size(); ++j) {
    running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * observed.mean[j];
    running_var[j] = (1.0 - momentum) * running_var[j] + momentum * observed.unbiased_var[j];
  }
}

}  // namespace transtee
