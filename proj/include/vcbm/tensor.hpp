#pragma once

// Dynamic reverse-mode tape over dense double tensors. Ops record themselves
// as they execute; backward() walks the recorded graph in reverse creation
// order. The op set is deliberately small: matmul (with BLAS-style transpose
// flags), elementwise add/sub/mul/divide with limited broadcasting,
// scalar_mul, concat, softmax, exp, log, sigmoid, negate, the reductions
// sum/mean/l2_norm (with keepdim), and gather.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "vcbm/errors.hpp"

namespace vcbm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

enum class Op : std::uint8_t {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScalarMul,
  kConcat,
  kSoftmax,
  kExp,
  kLog,
  kSigmoid,
  kSum,
  kMean,
  kL2Norm,
  kGather,
  kNegate,
  kDivide,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul_elementwise";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kConcat: return "concat";
    case Op::kSoftmax: return "softmax";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kL2Norm: return "l2_norm";
    case Op::kGather: return "gather";
    case Op::kNegate: return "negate";
    case Op::kDivide: return "divide";
  }
  return "?";
}

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily; absent on non-grad tensors
  bool requires_grad = false;
  Op op = Op::kLeaf;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;
  std::uint64_t id = 0;

  std::size_t numel() const { return shape_numel(shape); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

namespace detail {
inline std::uint64_t next_node_id() {
  static std::uint64_t counter = 0;
  return ++counter;
}
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw shape_error("tensor: shape " + shape_str(shape) + " expects " +
                        std::to_string(shape_numel(shape)) + " values, got " +
                        std::to_string(values.size()));
    }
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    n->id = detail::next_node_id();
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return from(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, double value) {
    std::vector<double> v(shape_numel(shape), value);
    return from(std::move(shape), std::move(v), false);
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  static Tensor scalar(double value) { return from({}, {value}, false); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return require()->shape; }
  std::size_t rank() const { return require()->shape.size(); }
  std::size_t numel() const { return require()->numel(); }

  std::vector<double>& data() { return require()->data; }
  const std::vector<double>& data() const { return require()->data; }

  double value() const {
    auto n = require();
    if (n->numel() != 1) {
      throw shape_error("value: tensor " + shape_str(n->shape) + " is not a scalar");
    }
    return n->data[0];
  }

  double at(std::initializer_list<std::size_t> idx) const {
    auto n = require();
    if (idx.size() != n->shape.size()) {
      throw shape_error("at: rank mismatch for " + shape_str(n->shape));
    }
    std::size_t flat = 0;
    std::size_t d = 0;
    for (std::size_t i : idx) {
      if (i >= n->shape[d]) throw shape_error("at: index out of range");
      flat = flat * n->shape[d] + i;
      ++d;
    }
    return n->data[flat];
  }

  bool requires_grad() const { return require()->requires_grad; }

  void set_requires_grad(bool on) {
    auto n = require();
    if (n->backward_fn) {
      throw error("set_requires_grad: only valid on leaf tensors");
    }
    n->requires_grad = on;
    if (!on) n->grad.clear();
  }

  bool has_grad() const { return require()->grad.size() == require()->data.size(); }

  const std::vector<double>& grad() const {
    auto n = require();
    if (n->grad.size() != n->data.size()) {
      throw error("grad: no gradient present (tensor detached or backward not run)");
    }
    return n->grad;
  }

  void zero_grad() {
    auto n = require();
    if (!n->requires_grad) {
      throw error("zero_grad: tensor does not require grad");
    }
    n->grad.assign(n->data.size(), 0.0);
  }

  Tensor detach() const {
    auto n = require();
    return from(n->shape, n->data, false);
  }

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  const std::shared_ptr<TensorNode>& require() const {
    if (!node_) throw error("tensor: empty handle");
    return node_;
  }

  friend Tensor make_result(Shape shape, std::vector<double> data,
                            std::vector<Tensor> inputs, Op op,
                            std::function<void(TensorNode&)> fn);

  std::shared_ptr<TensorNode> node_;
};

// Records the op only when some input carries grad; otherwise the result is a
// plain constant leaf and the graph stays small.
inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::vector<Tensor> inputs, Op op,
                          std::function<void(TensorNode&)> fn) {
  bool needs = false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) needs = true;
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->id = detail::next_node_id();
  if (needs) {
    n->requires_grad = true;
    n->op = op;
    n->backward_fn = std::move(fn);
    n->parents.reserve(inputs.size());
    for (const auto& t : inputs) n->parents.push_back(t.node());
  }
  return Tensor(std::move(n));
}

namespace detail {

struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  v.extent = s[axis];
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

inline void check_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw shape_error(std::string(op) + ": axis " + std::to_string(axis) +
                      " out of range for " + shape_str(s));
  }
}

// C (m x n) += op(A) * op(B). A is stored (k x m) when ta else (m x k);
// B is stored (n x k) when tb else (k x n). Row-major throughout.
inline void gemm_acc(const double* A, const double* B, double* C,
                     std::size_t m, std::size_t k, std::size_t n,
                     bool ta, bool tb) {
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* a = A + i * k;
      double* c = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p];
        const double* b = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* a = A + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* b = B + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
        C[i * n + j] += s;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* a = A + p * m;
      const double* b = B + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i];
        double* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double* b = B + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += A[p * m + i] * b[p];
        C[i * n + j] += s;
      }
    }
  }
}

enum class Bcast { kSame, kScalarRhs, kScalarLhs, kRowRhs };

inline Bcast bcast_mode(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::kSame;
  if (shape_numel(b) == 1) return Bcast::kScalarRhs;
  if (shape_numel(a) == 1) return Bcast::kScalarLhs;
  if (a.size() == 2 && b.size() == 1 && a[1] == b[0]) return Bcast::kRowRhs;
  throw shape_error(std::string(op) + ": incompatible shapes " + shape_str(a) +
                    " and " + shape_str(b));
}

}  // namespace detail

// ---- matmul --------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b,
                     bool trans_a = false, bool trans_b = false) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 1 || sa.size() > 2 || sb.size() < 1 || sb.size() > 2) {
    throw shape_error("matmul: operands must be 1-D or 2-D, got " +
                      shape_str(sa) + " and " + shape_str(sb));
  }
  if ((trans_a && sa.size() != 2) || (trans_b && sb.size() != 2)) {
    throw shape_error("matmul: transpose flags require 2-D operands");
  }
  // Effective dims after 1-D promotion: a -> (m,k), b -> (k,n).
  const std::size_t m = sa.size() == 1 ? 1 : (trans_a ? sa[1] : sa[0]);
  const std::size_t ka = sa.size() == 1 ? sa[0] : (trans_a ? sa[0] : sa[1]);
  const std::size_t kb = sb.size() == 1 ? sb[0] : (trans_b ? sb[1] : sb[0]);
  const std::size_t n = sb.size() == 1 ? 1 : (trans_b ? sb[0] : sb[1]);
  if (ka != kb) {
    throw shape_error("matmul: inner dimension mismatch " + shape_str(sa) +
                      (trans_a ? "^T" : "") + " x " + shape_str(sb) +
                      (trans_b ? "^T" : ""));
  }
  const std::size_t k = ka;

  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) out_shape = {m, n};
  else if (sa.size() == 1 && sb.size() == 2) out_shape = {n};
  else if (sa.size() == 2 && sb.size() == 1) out_shape = {m};
  // both 1-D: scalar, shape {}

  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n,
                   trans_a, trans_b);

  auto an = a.node();
  auto bn = b.node();
  auto fn = [an, bn, m, k, n, trans_a, trans_b](TensorNode& self) {
    const double* G = self.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      double* dA = an->grad.data();
      const double* B = bn->data.data();
      if (!trans_a) {
        // dA (m,k)
        if (!trans_b) detail::gemm_acc(G, B, dA, m, n, k, false, true);
        else detail::gemm_acc(G, B, dA, m, n, k, false, false);
      } else {
        // dA stored (k,m)
        if (!trans_b) detail::gemm_acc(B, G, dA, k, n, m, false, true);
        else detail::gemm_acc(B, G, dA, k, n, m, true, true);
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      double* dB = bn->grad.data();
      const double* A = an->data.data();
      if (!trans_b) {
        // dB (k,n)
        if (!trans_a) detail::gemm_acc(A, G, dB, k, m, n, true, false);
        else detail::gemm_acc(A, G, dB, k, m, n, false, false);
      } else {
        // dB stored (n,k)
        if (!trans_a) detail::gemm_acc(G, A, dB, n, m, k, true, false);
        else detail::gemm_acc(G, A, dB, n, m, k, true, true);
      }
    }
  };
  return make_result(std::move(out_shape), std::move(out), {a, b}, Op::kMatmul,
                     std::move(fn));
}

// ---- elementwise binary ops ----------------------------------------------

namespace detail {

template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, Op op, const Tensor& a, const Tensor& b,
                 Fwd fwd, Bwd bwd) {
  const Bcast mode = bcast_mode(name, a.shape(), b.shape());
  const Shape& out_shape =
      (mode == Bcast::kScalarLhs) ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  const std::size_t cols =
      (mode == Bcast::kRowRhs) ? a.shape()[1] : 0;

  const auto& ad = a.data();
  const auto& bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double av = (mode == Bcast::kScalarLhs) ? ad[0] : ad[i];
    const double bv = (mode == Bcast::kSame) ? bd[i]
                     : (mode == Bcast::kScalarRhs) ? bd[0]
                     : (mode == Bcast::kScalarLhs) ? bd[i]
                     : bd[i % cols];
    out[i] = fwd(av, bv);
  }

  auto an = a.node();
  auto bn = b.node();
  auto fn = [an, bn, mode, cols, n, bwd](TensorNode& self) {
    const double* G = self.grad.data();
    const auto& ad = an->data;
    const auto& bd = bn->data;
    double* dA = nullptr;
    double* dB = nullptr;
    if (an->requires_grad) { an->ensure_grad(); dA = an->grad.data(); }
    if (bn->requires_grad) { bn->ensure_grad(); dB = bn->grad.data(); }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ai = (mode == Bcast::kScalarLhs) ? 0 : i;
      const std::size_t bi = (mode == Bcast::kSame) ? i
                            : (mode == Bcast::kScalarRhs) ? 0
                            : (mode == Bcast::kScalarLhs) ? i
                            : i % cols;
      double ga = 0.0, gb = 0.0;
      bwd(G[i], ad[ai], bd[bi], ga, gb);
      if (dA) dA[ai] += ga;
      if (dB) dB[bi] += gb;
    }
  };
  Shape shape_copy = out_shape;
  return make_result(std::move(shape_copy), std::move(out), {a, b}, op,
                     std::move(fn));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "add", Op::kAdd, a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double& ga, double& gb) {
        ga = g;
        gb = g;
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "sub", Op::kSub, a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double& ga, double& gb) {
        ga = g;
        gb = -g;
      });
}

inline Tensor mul_elementwise(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "mul_elementwise", Op::kMul, a, b,
      [](double x, double y) { return x * y; },
      [](double g, double x, double y, double& ga, double& gb) {
        ga = g * y;
        gb = g * x;
      });
}

inline Tensor divide(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) {
      throw numeric_error("divide: zero operand in denominator " +
                          shape_str(b.shape()));
    }
  }
  return detail::binary_op(
      "divide", Op::kDivide, a, b,
      [](double x, double y) { return x / y; },
      [](double g, double x, double y, double& ga, double& gb) {
        ga = g / y;
        gb = -g * x / (y * y);
      });
}

inline Tensor scalar_mul(const Tensor& a, double c) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = c * a.data()[i];
  auto an = a.node();
  auto fn = [an, c, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) an->grad[i] += c * self.grad[i];
  };
  return make_result(a.shape(), std::move(out), {a}, Op::kScalarMul,
                     std::move(fn));
}

inline Tensor negate(const Tensor& a) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = -a.data()[i];
  auto an = a.node();
  auto fn = [an, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) an->grad[i] -= self.grad[i];
  };
  return make_result(a.shape(), std::move(out), {a}, Op::kNegate,
                     std::move(fn));
}

// ---- elementwise unary ops -----------------------------------------------

inline Tensor exp(const Tensor& a) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a.data()[i]);
  auto an = a.node();
  auto fn = [an, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      an->grad[i] += self.grad[i] * self.data[i];
  };
  return make_result(a.shape(), std::move(out), {a}, Op::kExp, std::move(fn));
}

inline Tensor log(const Tensor& a) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = a.data()[i];
    if (v <= 0.0) {
      throw numeric_error("log: non-positive operand " + std::to_string(v) +
                          " at flat index " + std::to_string(i));
    }
    out[i] = std::log(v);
  }
  auto an = a.node();
  auto fn = [an, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      an->grad[i] += self.grad[i] / an->data[i];
  };
  return make_result(a.shape(), std::move(out), {a}, Op::kLog, std::move(fn));
}

inline Tensor sigmoid(const Tensor& a) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.data()[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  auto an = a.node();
  auto fn = [an, n](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double y = self.data[i];
      an->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  };
  return make_result(a.shape(), std::move(out), {a}, Op::kSigmoid,
                     std::move(fn));
}

// ---- structural ops ------------------------------------------------------

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw shape_error("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  detail::check_axis("concat", s0, axis);
  std::size_t total = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) {
      throw shape_error("concat: rank mismatch " + shape_str(s0) + " vs " +
                        shape_str(s));
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) {
        throw shape_error("concat: shapes " + shape_str(s0) + " and " +
                          shape_str(s) + " differ off axis " +
                          std::to_string(axis));
      }
    }
    total += s[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total;
  const auto ov = detail::axis_view(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));

  std::size_t offset = 0;  // running offset along the axis
  std::vector<std::size_t> offsets(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = offset;
    const auto& t = parts[p];
    const auto pv = detail::axis_view(t.shape(), axis);
    const auto& pd = t.data();
    for (std::size_t o = 0; o < pv.outer; ++o) {
      const std::size_t src = o * pv.extent * pv.inner;
      const std::size_t dst = (o * ov.extent + offset) * ov.inner;
      std::copy(pd.begin() + src, pd.begin() + src + pv.extent * pv.inner,
                out.begin() + dst);
    }
    offset += t.shape()[axis];
  }

  std::vector<std::shared_ptr<TensorNode>> pnodes;
  std::vector<std::size_t> extents;
  for (const auto& t : parts) {
    pnodes.push_back(t.node());
    extents.push_back(t.shape()[axis]);
  }
  auto fn = [pnodes, offsets, extents, ov](TensorNode& self) {
    for (std::size_t p = 0; p < pnodes.size(); ++p) {
      auto& pn = *pnodes[p];
      if (!pn.requires_grad) continue;
      pn.ensure_grad();
      const std::size_t ext = extents[p];
      for (std::size_t o = 0; o < ov.outer; ++o) {
        const std::size_t src = (o * ov.extent + offsets[p]) * ov.inner;
        const std::size_t dst = o * ext * ov.inner;
        for (std::size_t i = 0; i < ext * ov.inner; ++i) {
          pn.grad[dst + i] += self.grad[src + i];
        }
      }
    }
  };
  return make_result(std::move(out_shape), std::move(out), parts, Op::kConcat,
                     std::move(fn));
}

inline Tensor gather(const Tensor& a, std::size_t axis,
                     const std::vector<std::size_t>& indices) {
  const Shape& s = a.shape();
  detail::check_axis("gather", s, axis);
  const auto v = detail::axis_view(s, axis);
  for (std::size_t idx : indices) {
    if (idx >= v.extent) {
      throw shape_error("gather: index " + std::to_string(idx) +
                        " out of range for axis " + std::to_string(axis) +
                        " of " + shape_str(s));
    }
  }
  Shape out_shape = s;
  out_shape[axis] = indices.size();
  std::vector<double> out(shape_numel(out_shape));
  const auto& ad = a.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t j = 0; j < indices.size(); ++j) {
      const std::size_t src = (o * v.extent + indices[j]) * v.inner;
      const std::size_t dst = (o * indices.size() + j) * v.inner;
      std::copy(ad.begin() + src, ad.begin() + src + v.inner,
                out.begin() + dst);
    }
  }
  auto an = a.node();
  auto idx_copy = indices;
  auto fn = [an, idx_copy, v](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t j = 0; j < idx_copy.size(); ++j) {
        const std::size_t dst = (o * v.extent + idx_copy[j]) * v.inner;
        const std::size_t src = (o * idx_copy.size() + j) * v.inner;
        for (std::size_t i = 0; i < v.inner; ++i) {
          an->grad[dst + i] += self.grad[src + i];
        }
      }
    }
  };
  return make_result(std::move(out_shape), std::move(out), {a}, Op::kGather,
                     std::move(fn));
}

// ---- softmax -------------------------------------------------------------

inline Tensor softmax(const Tensor& a, std::size_t axis) {
  const Shape& s = a.shape();
  detail::check_axis("softmax", s, axis);
  const auto v = detail::axis_view(s, axis);
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double mx = ad[base];
      for (std::size_t k = 1; k < v.extent; ++k)
        mx = std::max(mx, ad[base + k * v.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < v.extent; ++k) {
        const double e = std::exp(ad[base + k * v.inner] - mx);
        out[base + k * v.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < v.extent; ++k) out[base + k * v.inner] /= z;
    }
  }
  auto an = a.node();
  auto fn = [an, v](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < v.extent; ++k) {
          const std::size_t f = base + k * v.inner;
          dot += self.grad[f] * self.data[f];
        }
        for (std::size_t k = 0; k < v.extent; ++k) {
          const std::size_t f = base + k * v.inner;
          an->grad[f] += self.data[f] * (self.grad[f] - dot);
        }
      }
    }
  };
  return make_result(s, std::move(out), {a}, Op::kSoftmax, std::move(fn));
}

// ---- reductions ----------------------------------------------------------

namespace detail {

inline Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

}  // namespace detail

inline Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false) {
  const Shape& s = a.shape();
  detail::check_axis("sum", s, axis);
  const auto v = detail::axis_view(s, axis);
  const auto& ad = a.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.extent; ++k) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        out[o * v.inner + i] += ad[(o * v.extent + k) * v.inner + i];
      }
    }
  }
  auto an = a.node();
  auto fn = [an, v](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t k = 0; k < v.extent; ++k) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          an->grad[(o * v.extent + k) * v.inner + i] +=
              self.grad[o * v.inner + i];
        }
      }
    }
  };
  return make_result(detail::reduced_shape(s, axis, keepdim), std::move(out),
                     {a}, Op::kSum, std::move(fn));
}

inline Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false) {
  const Shape& s = a.shape();
  detail::check_axis("mean", s, axis);
  const auto v = detail::axis_view(s, axis);
  if (v.extent == 0) throw shape_error("mean: empty axis in " + shape_str(s));
  const double inv = 1.0 / static_cast<double>(v.extent);
  const auto& ad = a.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.extent; ++k) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        out[o * v.inner + i] += ad[(o * v.extent + k) * v.inner + i];
      }
    }
  }
  for (auto& x : out) x *= inv;
  auto an = a.node();
  auto fn = [an, v, inv](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t k = 0; k < v.extent; ++k) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          an->grad[(o * v.extent + k) * v.inner + i] +=
              inv * self.grad[o * v.inner + i];
        }
      }
    }
  };
  return make_result(detail::reduced_shape(s, axis, keepdim), std::move(out),
                     {a}, Op::kMean, std::move(fn));
}

inline constexpr double kNormEpsilon = 1e-12;

// sqrt(sum x^2 + 1e-12) along the axis; the epsilon keeps the gradient finite
// at zero vectors.
inline Tensor l2_norm(const Tensor& a, std::size_t axis, bool keepdim = false) {
  const Shape& s = a.shape();
  detail::check_axis("l2_norm", s, axis);
  const auto v = detail::axis_view(s, axis);
  const auto& ad = a.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.extent; ++k) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const double x = ad[(o * v.extent + k) * v.inner + i];
        out[o * v.inner + i] += x * x;
      }
    }
  }
  for (auto& x : out) x = std::sqrt(x + kNormEpsilon);
  auto an = a.node();
  auto fn = [an, v](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t k = 0; k < v.extent; ++k) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t f = (o * v.extent + k) * v.inner + i;
          an->grad[f] += self.grad[o * v.inner + i] * an->data[f] /
                         self.data[o * v.inner + i];
        }
      }
    }
  };
  return make_result(detail::reduced_shape(s, axis, keepdim), std::move(out),
                     {a}, Op::kL2Norm, std::move(fn));
}

// ---- backward ------------------------------------------------------------

inline void backward(const Tensor& loss) {
  auto root = loss.node();
  if (!root) throw error("backward: empty tensor");
  if (root->numel() != 1) {
    throw shape_error("backward: loss must be scalar, got " +
                      shape_str(root->shape));
  }
  if (!root->requires_grad) {
    throw error("backward: loss is not connected to the recorded graph");
  }

  std::vector<TensorNode*> nodes;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });

  // Interior grads start fresh each call; leaf grads accumulate across calls.
  for (TensorNode* n : nodes) {
    if (n->backward_fn) {
      n->grad.assign(n->data.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  root->grad[0] += 1.0;
  for (TensorNode* n : nodes) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace vcbm
