#pragma once
// Reverse-mode differentiable tensor core: flat float64 storage, a linear
// gradient tape, and the primitive kernels everything else is built from.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gega {

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct TensorData {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const std::string& op,
                               const std::vector<std::size_t>& shape) {
  if (shape.empty())
    throw TensorError(op + ": shape must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0)
      throw TensorError(op + ": zero-length dimension in shape " +
                        shape_str(shape));
    n *= d;
  }
  return n;
}

// C += op(A) * op(B) with optional transposes; all matrices row-major.
enum class Gemm { NN, NT, TN };

inline void gemm_acc(Gemm mode, const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  switch (mode) {
    case Gemm::NN:  // A[m,k] B[k,n]
      for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = arow[p];
          const double* brow = b + p * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
      break;
    case Gemm::NT:  // A[m,k] B[n,k]^T
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double* brow = b + j * k;
          double s = 0.0;
          for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
          crow[j] += s;
        }
      }
      break;
    case Gemm::TN:  // A[k,m]^T B[k,n]
      for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
          const double av = arow[i];
          double* crow = c + i * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
      break;
  }
}

}  // namespace detail

// Shared-payload handle. Copies alias the same storage, so a Tensor held by a
// tape closure and one held by the caller see the same values and grad.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape) {
    return make(std::move(shape), {}, false, "Tensor::zeros");
  }

  static Tensor constant(std::vector<std::size_t> shape,
                         std::vector<double> values) {
    return make(std::move(shape), std::move(values), false,
                "Tensor::constant");
  }

  static Tensor param(std::vector<std::size_t> shape,
                      std::vector<double> values) {
    return make(std::move(shape), std::move(values), true, "Tensor::param");
  }

  static Tensor scalar(double v) { return constant({1}, {v}); }

  static Tensor vec(std::vector<double> values) {
    std::size_t n = values.size();
    return constant({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return constant({rows, cols}, std::move(values));
  }

  static Tensor uniform(std::vector<std::size_t> shape, double lo, double hi,
                        std::mt19937_64& rng, bool requires_grad = false) {
    std::size_t n = detail::shape_numel("Tensor::uniform", shape);
    std::vector<double> vals(n);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : vals) v = dist(rng);
    return make(std::move(shape), std::move(vals), requires_grad,
                "Tensor::uniform");
  }

  bool defined() const { return d_ != nullptr; }

  const std::vector<std::size_t>& shape() const { return data().shape; }
  std::size_t ndim() const { return data().shape.size(); }
  std::size_t dim(std::size_t i) const { return data().shape.at(i); }
  std::size_t size() const { return data().values.size(); }

  std::vector<double>& values() const { return data().values; }

  std::vector<double>& grad() const {
    auto& d = data();
    if (d.grad.size() != d.values.size()) d.grad.assign(d.values.size(), 0.0);
    return d.grad;
  }

  bool requires_grad() const { return data().requires_grad; }

  void set_requires_grad(bool rg) const {
    data().requires_grad = rg;
    if (rg) grad();
  }

  void zero_grad() const {
    auto& d = data();
    std::fill(d.grad.begin(), d.grad.end(), 0.0);
  }

  double item() const {
    if (size() != 1)
      throw TensorError("Tensor::item: expected a scalar, got shape " +
                        detail::shape_str(shape()));
    return data().values[0];
  }

  double& at(std::size_t i) const { return data().values.at(i); }

  double& at(std::size_t r, std::size_t c) const {
    auto& d = data();
    if (d.shape.size() != 2)
      throw TensorError("Tensor::at(r,c): tensor is not 2-D, shape " +
                        detail::shape_str(d.shape));
    return d.values.at(r * d.shape[1] + c);
  }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

 private:
  static Tensor make(std::vector<std::size_t> shape,
                     std::vector<double> values, bool requires_grad,
                     const std::string& op) {
    std::size_t n = detail::shape_numel(op, shape);
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->shape = std::move(shape);
    if (values.empty()) {
      t.d_->values.assign(n, 0.0);
    } else {
      if (values.size() != n)
        throw TensorError(op + ": got " + std::to_string(values.size()) +
                          " values for shape " + detail::shape_str(t.d_->shape));
      t.d_->values = std::move(values);
    }
    if (requires_grad) {
      t.d_->requires_grad = true;
      t.d_->grad.assign(n, 0.0);
    }
    return t;
  }

  detail::TensorData& data() const {
    if (!d_) throw TensorError("use of an undefined Tensor");
    return *d_;
  }

  std::shared_ptr<detail::TensorData> d_;
};

// Identifiers for the primitive kernels, usable through apply_primitive for
// generic enumeration (the gradient-check harness walks this list).
enum class Primitive {
  Add,
  AddScalar,
  Sub,
  Mul,
  ScalarMul,
  MatMul,
  Transpose,
  Concat,
  SliceCols,
  GatherRows,
  Reshape,
  Softmax,
  LogSumExp,
  Relu,
  Tanh,
  Sigmoid,
  Log,
  Exp,
  LayerNorm,
  Sum,
  Mean,
  SumAll,
  Normalize,
  NormalizeRows,
  ClampMin,
};

constexpr Primitive kAllPrimitives[] = {
    Primitive::Add,        Primitive::AddScalar, Primitive::Sub,
    Primitive::Mul,        Primitive::ScalarMul, Primitive::MatMul,
    Primitive::Transpose,  Primitive::Concat,    Primitive::SliceCols,
    Primitive::GatherRows, Primitive::Reshape,   Primitive::Softmax,
    Primitive::LogSumExp,  Primitive::Relu,      Primitive::Tanh,
    Primitive::Sigmoid,    Primitive::Log,       Primitive::Exp,
    Primitive::LayerNorm,  Primitive::Sum,       Primitive::Mean,
    Primitive::SumAll,     Primitive::Normalize, Primitive::NormalizeRows,
    Primitive::ClampMin,
};

inline const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::Add: return "add";
    case Primitive::AddScalar: return "add_scalar";
    case Primitive::Sub: return "sub";
    case Primitive::Mul: return "mul";
    case Primitive::ScalarMul: return "scalar_mul";
    case Primitive::MatMul: return "matmul";
    case Primitive::Transpose: return "transpose";
    case Primitive::Concat: return "concat";
    case Primitive::SliceCols: return "slice_cols";
    case Primitive::GatherRows: return "gather_rows";
    case Primitive::Reshape: return "reshape";
    case Primitive::Softmax: return "softmax";
    case Primitive::LogSumExp: return "logsumexp";
    case Primitive::Relu: return "relu";
    case Primitive::Tanh: return "tanh";
    case Primitive::Sigmoid: return "sigmoid";
    case Primitive::Log: return "log";
    case Primitive::Exp: return "exp";
    case Primitive::LayerNorm: return "layer_norm";
    case Primitive::Sum: return "sum";
    case Primitive::Mean: return "mean";
    case Primitive::SumAll: return "sum_all";
    case Primitive::Normalize: return "normalize";
    case Primitive::NormalizeRows: return "normalize_rows";
    case Primitive::ClampMin: return "clamp_min";
  }
  return "?";
}

// Extra arguments for primitives that need them (axis, scalar, slice bounds,
// gather indices, reshape target).
struct OpArgs {
  int axis = -1;
  double scalar = 0.0;
  std::size_t col_begin = 0;
  std::size_t col_end = 0;
  std::vector<std::size_t> indices;
  std::vector<std::size_t> target_shape;
};

// Records one backward closure per primitive application, in execution order.
// A tape lives for a single forward/backward pass; backward() replays the
// closures once each, in reverse. Constructing with recording=false gives an
// inference-only tape: values are computed, nothing is recorded, outputs do
// not require grad.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }

  void clear() { entries_.clear(); }

  // Scalar `loss` gets seed gradient 1, then every recorded closure runs once
  // in reverse order. Repeated calls without zeroing grads accumulate.
  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
      throw TensorError(
          "backward: loss must be a defined scalar tensor" +
          (loss.defined() ? ", got shape " + detail::shape_str(loss.shape())
                          : std::string()));
    loss.grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

  // Zeroes the grad of every tensor produced on this tape. Leaf inputs are the
  // caller's to zero.
  void zero_grads() {
    for (const Tensor& t : outputs_) t.zero_grad();
  }

  // ---------------------------------------------------------------- binary

  Tensor add(const Tensor& a, const Tensor& b) { return binary("add", a, b, false); }
  Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", a, b, true); }

  // Elementwise product; `b` may also be a 1-D vector broadcast across the
  // rows of 2-D `a`.
  Tensor mul(const Tensor& a, const Tensor& b) {
    check_defined("mul", a);
    check_defined("mul", b);
    const bool bcast = broadcast_row("mul", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    const std::size_t cols = bcast ? b.size() : 0;
    for (std::size_t i = 0; i < ov.size(); ++i)
      ov[i] = av[i] * bv[bcast ? i % cols : i];
    record(out, {a, b}, [a, b, out, bcast, cols] {
      const auto& g = out.grad();
      const auto& avv = a.values();
      const auto& bvv = b.values();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * bvv[bcast ? i % cols : i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[bcast ? i % cols : i] += g[i] * avv[i];
      }
    });
    return out;
  }

  Tensor add_scalar(const Tensor& a, double c) {
    check_defined("add_scalar", a);
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
    record(out, {a}, [a, out] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
  }

  Tensor scalar_mul(const Tensor& a, double c) {
    check_defined("scalar_mul", a);
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    record(out, {a}, [a, out, c] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
    return out;
  }

  // ----------------------------------------------------------------- matmul

  // Supports [m,k]x[k,n] -> [m,n], [m,k]x[k] -> [m], [k]x[k,n] -> [n].
  Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined("matmul", a);
    check_defined("matmul", b);
    std::size_t m, k, kb, n;
    std::vector<std::size_t> out_shape;
    if (a.ndim() == 2 && b.ndim() == 2) {
      m = a.dim(0); k = a.dim(1); kb = b.dim(0); n = b.dim(1);
      out_shape = {m, n};
    } else if (a.ndim() == 2 && b.ndim() == 1) {
      m = a.dim(0); k = a.dim(1); kb = b.dim(0); n = 1;
      out_shape = {m};
    } else if (a.ndim() == 1 && b.ndim() == 2) {
      m = 1; k = a.dim(0); kb = b.dim(0); n = b.dim(1);
      out_shape = {n};
    } else {
      throw TensorError(std::string("matmul: unsupported ranks, lhs ") +
                        detail::shape_str(a.shape()) + ", rhs " +
                        detail::shape_str(b.shape()));
    }
    if (k != kb)
      throw TensorError("matmul: inner dimensions differ, lhs " +
                        detail::shape_str(a.shape()) + ", rhs " +
                        detail::shape_str(b.shape()));
    Tensor out = Tensor::zeros(out_shape);
    detail::gemm_acc(detail::Gemm::NN, a.values().data(), b.values().data(),
                     out.values().data(), m, k, n);
    record(out, {a, b}, [a, b, out, m, k, n] {
      const double* g = out.grad().data();
      if (a.requires_grad())  // dA += G B^T
        detail::gemm_acc(detail::Gemm::NT, g, b.values().data(),
                         a.grad().data(), m, n, k);
      if (b.requires_grad())  // dB += A^T G
        detail::gemm_acc(detail::Gemm::TN, a.values().data(), g,
                         b.grad().data(), k, m, n);
    });
    return out;
  }

  Tensor transpose(const Tensor& a) {
    check_defined("transpose", a);
    if (a.ndim() != 2)
      throw TensorError("transpose: expected a 2-D tensor, got " +
                        detail::shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    Tensor out = Tensor::zeros({c, r});
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = av[i * c + j];
    record(out, {a}, [a, out, r, c] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
    return out;
  }

  // ------------------------------------------------------------ structural

  Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw TensorError("concat: no inputs");
    for (const Tensor& p : parts) check_defined("concat", p);
    const std::size_t nd = parts[0].ndim();
    if (nd == 1) {
      if (axis != 0)
        throw TensorError("concat: axis " + std::to_string(axis) +
                          " invalid for 1-D inputs");
      std::size_t total = 0;
      for (const Tensor& p : parts) {
        if (p.ndim() != 1)
          throw TensorError("concat: mixed ranks, expected 1-D, got " +
                            detail::shape_str(p.shape()));
        total += p.size();
      }
      Tensor out = Tensor::zeros({total});
      auto& ov = out.values();
      std::size_t off = 0;
      for (const Tensor& p : parts) {
        const auto& pv = p.values();
        std::copy(pv.begin(), pv.end(), ov.begin() + off);
        off += pv.size();
      }
      record(out, parts, [parts, out] {
        const auto& g = out.grad();
        std::size_t off = 0;
        for (const Tensor& p : parts) {
          if (p.requires_grad()) {
            auto& gp = p.grad();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
          }
          off += p.size();
        }
      });
      return out;
    }
    if (nd != 2 || (axis != 0 && axis != 1))
      throw TensorError("concat: expected 1-D or 2-D inputs with axis 0 or 1");
    const std::size_t fixed = axis == 0 ? parts[0].dim(1) : parts[0].dim(0);
    std::size_t grow = 0;
    for (const Tensor& p : parts) {
      if (p.ndim() != 2 ||
          (axis == 0 ? p.dim(1) : p.dim(0)) != fixed)
        throw TensorError("concat: shape mismatch at axis " +
                          std::to_string(axis) + ", got " +
                          detail::shape_str(p.shape()) + " expected other dim " +
                          std::to_string(fixed));
      grow += axis == 0 ? p.dim(0) : p.dim(1);
    }
    const std::size_t rows = axis == 0 ? grow : fixed;
    const std::size_t cols = axis == 0 ? fixed : grow;
    Tensor out = Tensor::zeros({rows, cols});
    auto& ov = out.values();
    if (axis == 0) {
      std::size_t off = 0;
      for (const Tensor& p : parts) {
        const auto& pv = p.values();
        std::copy(pv.begin(), pv.end(), ov.begin() + off);
        off += pv.size();
      }
    } else {
      std::size_t coff = 0;
      for (const Tensor& p : parts) {
        const auto& pv = p.values();
        const std::size_t pc = p.dim(1);
        for (std::size_t i = 0; i < rows; ++i)
          std::copy(pv.begin() + i * pc, pv.begin() + (i + 1) * pc,
                    ov.begin() + i * cols + coff);
        coff += pc;
      }
    }
    record(out, parts, [parts, out, axis, rows, cols] {
      const auto& g = out.grad();
      if (axis == 0) {
        std::size_t off = 0;
        for (const Tensor& p : parts) {
          if (p.requires_grad()) {
            auto& gp = p.grad();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
          }
          off += p.size();
        }
      } else {
        std::size_t coff = 0;
        for (const Tensor& p : parts) {
          const std::size_t pc = p.dim(1);
          if (p.requires_grad()) {
            auto& gp = p.grad();
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < pc; ++j)
                gp[i * pc + j] += g[i * cols + coff + j];
          }
          coff += pc;
        }
      }
    });
    return out;
  }

  Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    check_defined("slice_cols", a);
    if (a.ndim() != 2)
      throw TensorError("slice_cols: expected a 2-D tensor, got " +
                        detail::shape_str(a.shape()));
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    if (c0 >= c1 || c1 > cols)
      throw TensorError("slice_cols: range [" + std::to_string(c0) + ", " +
                        std::to_string(c1) + ") invalid for " +
                        detail::shape_str(a.shape()));
    const std::size_t w = c1 - c0;
    Tensor out = Tensor::zeros({rows, w});
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(av.begin() + i * cols + c0, av.begin() + i * cols + c1,
                ov.begin() + i * w);
    record(out, {a}, [a, out, rows, cols, c0, w] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j)
          ga[i * cols + c0 + j] += g[i * w + j];
    });
    return out;
  }

  // Row selection for 2-D input, element selection for 1-D. Repeated indices
  // accumulate grad into the same source row.
  Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    check_defined("gather_rows", a);
    if (idx.empty()) throw TensorError("gather_rows: empty index list");
    const std::size_t limit = a.dim(0);
    for (std::size_t i : idx)
      if (i >= limit)
        throw TensorError("gather_rows: index " + std::to_string(i) +
                          " out of range for " + detail::shape_str(a.shape()));
    if (a.ndim() == 1) {
      Tensor out = Tensor::zeros({idx.size()});
      const auto& av = a.values();
      auto& ov = out.values();
      for (std::size_t i = 0; i < idx.size(); ++i) ov[i] = av[idx[i]];
      record(out, {a}, [a, out, idx] {
        if (!a.requires_grad()) return;
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += g[i];
      });
      return out;
    }
    if (a.ndim() != 2)
      throw TensorError("gather_rows: expected 1-D or 2-D input, got " +
                        detail::shape_str(a.shape()));
    const std::size_t cols = a.dim(1);
    Tensor out = Tensor::zeros({idx.size(), cols});
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy(av.begin() + idx[i] * cols, av.begin() + (idx[i] + 1) * cols,
                ov.begin() + i * cols);
    record(out, {a}, [a, out, idx, cols] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j)
          ga[idx[i] * cols + j] += g[i * cols + j];
    });
    return out;
  }

  Tensor reshape(const Tensor& a, const std::vector<std::size_t>& shape) {
    check_defined("reshape", a);
    const std::size_t n = detail::shape_numel("reshape", shape);
    if (n != a.size())
      throw TensorError("reshape: cannot view " + detail::shape_str(a.shape()) +
                        " as " + detail::shape_str(shape));
    Tensor out = Tensor::constant(shape, a.values());
    record(out, {a}, [a, out] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
  }

  // -------------------------------------------------------------- pointwise

  Tensor relu(const Tensor& a) {
    return unary("relu", a,
                 [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
  }

  Tensor tanh(const Tensor& a) {
    return unary("tanh", a,
                 [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
  }

  Tensor sigmoid(const Tensor& a) {
    return unary("sigmoid", a,
                 [](double x) {
                   return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                   : std::exp(x) / (1.0 + std::exp(x));
                 },
                 [](double, double y) { return y * (1.0 - y); });
  }

  Tensor exp(const Tensor& a) {
    return unary("exp", a,
                 [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
  }

  Tensor log(const Tensor& a) {
    check_defined("log", a);
    const auto& av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i)
      if (av[i] <= 0.0)
        throw TensorError("log: non-positive input " + std::to_string(av[i]) +
                          " at index " + std::to_string(i));
    return unary("log", a,
                 [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
  }

  Tensor clamp_min(const Tensor& a, double floor) {
    return unary("clamp_min", a,
                 [floor](double x) { return x < floor ? floor : x; },
                 [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
  }

  // ------------------------------------------------- rowwise/axis kernels

  // Numerically stable softmax along `axis` (max-shifted). 1-D: axis 0.
  Tensor softmax(const Tensor& a, int axis) {
    check_defined("softmax", a);
    Tensor out = Tensor::zeros(a.shape());
    for_each_line("softmax", a, axis, [&](std::size_t base, std::size_t step,
                                          std::size_t len) {
      const auto& av = a.values();
      auto& ov = out.values();
      double mx = av[base];
      for (std::size_t i = 1; i < len; ++i)
        mx = std::max(mx, av[base + i * step]);
      double denom = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(av[base + i * step] - mx);
        ov[base + i * step] = e;
        denom += e;
      }
      for (std::size_t i = 0; i < len; ++i) ov[base + i * step] /= denom;
    });
    record(out, {a}, [this, a, out, axis] {
      if (!a.requires_grad()) return;
      for_each_line("softmax", a, axis, [&](std::size_t base, std::size_t step,
                                            std::size_t len) {
        const auto& y = out.values();
        const auto& g = out.grad();
        auto& ga = a.grad();
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i)
          dot += g[base + i * step] * y[base + i * step];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t p = base + i * step;
          ga[p] += y[p] * (g[p] - dot);
        }
      });
    });
    return out;
  }

  // Max-shifted log(sum(exp)) reducing `axis` away; 1-D input gives shape [1].
  Tensor logsumexp(const Tensor& a, int axis) {
    check_defined("logsumexp", a);
    Tensor out = reduce_shape("logsumexp", a, axis);
    std::size_t line = 0;
    for_each_line("logsumexp", a, axis, [&](std::size_t base, std::size_t step,
                                            std::size_t len) {
      const auto& av = a.values();
      double mx = av[base];
      for (std::size_t i = 1; i < len; ++i)
        mx = std::max(mx, av[base + i * step]);
      double s = 0.0;
      for (std::size_t i = 0; i < len; ++i)
        s += std::exp(av[base + i * step] - mx);
      out.values()[line++] = mx + std::log(s);
    });
    record(out, {a}, [this, a, out, axis] {
      if (!a.requires_grad()) return;
      std::size_t line = 0;
      for_each_line("logsumexp", a, axis, [&](std::size_t base,
                                              std::size_t step,
                                              std::size_t len) {
        const auto& av = a.values();
        auto& ga = a.grad();
        const double y = out.values()[line];
        const double g = out.grad()[line];
        ++line;
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t p = base + i * step;
          ga[p] += g * std::exp(av[p] - y);
        }
      });
    });
    return out;
  }

  Tensor sum(const Tensor& a, int axis) { return reduce("sum", a, axis, false); }
  Tensor mean(const Tensor& a, int axis) { return reduce("mean", a, axis, true); }

  Tensor sum_all(const Tensor& a) {
    check_defined("sum_all", a);
    Tensor out = Tensor::zeros({1});
    const auto& av = a.values();
    double s = 0.0;
    for (double v : av) s += v;
    out.values()[0] = s;
    record(out, {a}, [a, out] {
      if (!a.requires_grad()) return;
      const double g = out.grad()[0];
      auto& ga = a.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
    return out;
  }

  // Zero-mean unit-variance normalization of each row (last axis), no affine
  // part; epsilon 1e-5 inside the square root.
  Tensor layer_norm(const Tensor& a) {
    check_defined("layer_norm", a);
    constexpr double kEps = 1e-5;
    Tensor out = Tensor::zeros(a.shape());
    const int axis = a.ndim() == 1 ? 0 : 1;
    for_each_line("layer_norm", a, axis, [&](std::size_t base, std::size_t step,
                                             std::size_t len) {
      const auto& av = a.values();
      auto& ov = out.values();
      double mu = 0.0;
      for (std::size_t i = 0; i < len; ++i) mu += av[base + i * step];
      mu /= static_cast<double>(len);
      double var = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double d = av[base + i * step] - mu;
        var += d * d;
      }
      var /= static_cast<double>(len);
      const double inv = 1.0 / std::sqrt(var + kEps);
      for (std::size_t i = 0; i < len; ++i)
        ov[base + i * step] = (av[base + i * step] - mu) * inv;
    });
    record(out, {a}, [this, a, out, axis] {
      if (!a.requires_grad()) return;
      constexpr double kEps2 = 1e-5;
      for_each_line("layer_norm", a, axis, [&](std::size_t base,
                                               std::size_t step,
                                               std::size_t len) {
        const auto& av = a.values();
        const auto& y = out.values();
        const auto& g = out.grad();
        auto& ga = a.grad();
        const double n = static_cast<double>(len);
        double mu = 0.0;
        for (std::size_t i = 0; i < len; ++i) mu += av[base + i * step];
        mu /= n;
        double var = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          const double d = av[base + i * step] - mu;
          var += d * d;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kEps2);
        double gmean = 0.0, gymean = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t p = base + i * step;
          gmean += g[p];
          gymean += g[p] * y[p];
        }
        gmean /= n;
        gymean /= n;
        // dx = inv * (g - mean(g) - y * mean(g .* y))
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t p = base + i * step;
          ga[p] += inv * (g[p] - gmean - y[p] * gymean);
        }
      });
    });
    return out;
  }

  // x / sum(x) over the whole tensor. The mass must be strictly positive.
  Tensor normalize(const Tensor& a) {
    check_defined("normalize", a);
    const auto& av = a.values();
    double s = 0.0;
    for (double v : av) s += v;
    if (!(s > 0.0))
      throw TensorError("normalize: non-positive total mass " +
                        std::to_string(s));
    Tensor out = Tensor::zeros(a.shape());
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / s;
    record(out, {a}, [a, out, s] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      const auto& y = out.values();
      auto& ga = a.grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (g[i] - dot) / s;
    });
    return out;
  }

  // Per-row variant for 2-D tensors (1-D falls back to normalize()).
  Tensor normalize_rows(const Tensor& a) {
    check_defined("normalize_rows", a);
    if (a.ndim() == 1) return normalize(a);
    if (a.ndim() != 2)
      throw TensorError("normalize_rows: expected 1-D or 2-D input, got " +
                        detail::shape_str(a.shape()));
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    const auto& av = a.values();
    std::vector<double> sums(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) sums[i] += av[i * cols + j];
      if (!(sums[i] > 0.0))
        throw TensorError("normalize_rows: non-positive mass " +
                          std::to_string(sums[i]) + " in row " +
                          std::to_string(i));
    }
    Tensor out = Tensor::zeros(a.shape());
    auto& ov = out.values();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        ov[i * cols + j] = av[i * cols + j] / sums[i];
    record(out, {a}, [a, out, sums, rows, cols] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      const auto& y = out.values();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
          dot += g[i * cols + j] * y[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
          ga[i * cols + j] += (g[i * cols + j] - dot) / sums[i];
      }
    });
    return out;
  }

  // ------------------------------------------------------------- extension

  // Escape hatch for one-off differentiable ops (and for deliberately broken
  // backward rules in gradient-check tests). Output has the input's shape.
  Tensor custom_unary(
      const Tensor& a,
      const std::function<std::vector<double>(const std::vector<double>&)>& fwd,
      const std::function<std::vector<double>(
          const std::vector<double>&, const std::vector<double>&,
          const std::vector<double>&)>& bwd) {
    check_defined("custom_unary", a);
    std::vector<double> vals = fwd(a.values());
    if (vals.size() != a.size())
      throw TensorError("custom_unary: forward changed element count");
    Tensor out = Tensor::constant(a.shape(), std::move(vals));
    record(out, {a}, [a, out, bwd] {
      if (!a.requires_grad()) return;
      std::vector<double> dx = bwd(a.values(), out.values(), out.grad());
      auto& ga = a.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) ga[i] += dx[i];
    });
    return out;
  }

 private:
  static void check_defined(const char* op, const Tensor& t) {
    if (!t.defined())
      throw TensorError(std::string(op) + ": undefined input tensor");
  }

  // b broadcasts across rows of a iff a is 2-D and b is 1-D of width a.cols.
  static bool broadcast_row(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return false;
    if (a.ndim() == 2 && b.ndim() == 1 && b.dim(0) == a.dim(1)) return true;
    throw TensorError(std::string(op) + ": shape mismatch, lhs " +
                      detail::shape_str(a.shape()) + ", rhs " +
                      detail::shape_str(b.shape()));
  }

  Tensor binary(const char* op, const Tensor& a, const Tensor& b,
                bool negate_b) {
    check_defined(op, a);
    check_defined(op, b);
    const bool bcast = broadcast_row(op, a, b);
    const double sign = negate_b ? -1.0 : 1.0;
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    const std::size_t cols = bcast ? b.size() : 0;
    for (std::size_t i = 0; i < ov.size(); ++i)
      ov[i] = av[i] + sign * bv[bcast ? i % cols : i];
    record(out, {a, b}, [a, b, out, bcast, cols, sign] {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[bcast ? i % cols : i] += sign * g[i];
      }
    });
    return out;
  }

  template <class Fwd, class Bwd>
  Tensor unary(const char* op, const Tensor& a, Fwd f, Bwd dfdx) {
    check_defined(op, a);
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i]);
    record(out, {a}, [a, out, dfdx] {
      if (!a.requires_grad()) return;
      const auto& g = out.grad();
      const auto& x = a.values();
      const auto& y = out.values();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * dfdx(x[i], y[i]);
    });
    return out;
  }

  // Walk the 1-D lines of `a` along `axis`: emit(base, step, len) per line.
  template <class Fn>
  static void for_each_line(const char* op, const Tensor& a, int axis, Fn emit) {
    if (a.ndim() == 1) {
      if (axis != 0)
        throw TensorError(std::string(op) + ": axis " + std::to_string(axis) +
                          " invalid for 1-D input");
      emit(0, 1, a.dim(0));
      return;
    }
    if (a.ndim() != 2)
      throw TensorError(std::string(op) + ": expected 1-D or 2-D input, got " +
                        detail::shape_str(a.shape()));
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    if (axis == 1) {
      for (std::size_t i = 0; i < rows; ++i) emit(i * cols, 1, cols);
    } else if (axis == 0) {
      for (std::size_t j = 0; j < cols; ++j) emit(j, cols, rows);
    } else {
      throw TensorError(std::string(op) + ": axis " + std::to_string(axis) +
                        " invalid for 2-D input");
    }
  }

  static Tensor reduce_shape(const char* op, const Tensor& a, int axis) {
    if (a.ndim() == 1) {
      if (axis != 0)
        throw TensorError(std::string(op) + ": axis " + std::to_string(axis) +
                          " invalid for 1-D input");
      return Tensor::zeros({1});
    }
    if (a.ndim() != 2 || (axis != 0 && axis != 1))
      throw TensorError(std::string(op) + ": expected 1-D or 2-D input, got " +
                        detail::shape_str(a.shape()) + " axis " +
                        std::to_string(axis));
    return Tensor::zeros({axis == 0 ? a.dim(1) : a.dim(0)});
  }

  Tensor reduce(const char* op, const Tensor& a, int axis, bool take_mean) {
    check_defined(op, a);
    Tensor out = reduce_shape(op, a, axis);
    std::size_t line = 0;
    for_each_line(op, a, axis, [&](std::size_t base, std::size_t step,
                                   std::size_t len) {
      const auto& av = a.values();
      double s = 0.0;
      for (std::size_t i = 0; i < len; ++i) s += av[base + i * step];
      out.values()[line++] = take_mean ? s / static_cast<double>(len) : s;
    });
    std::string saved_op = op;
    record(out, {a}, [a, out, axis, take_mean, saved_op] {
      if (!a.requires_grad()) return;
      std::size_t line = 0;
      for_each_line(saved_op.c_str(), a, axis,
                    [&](std::size_t base, std::size_t step, std::size_t len) {
                      auto& ga = a.grad();
                      double g = out.grad()[line++];
                      if (take_mean) g /= static_cast<double>(len);
                      for (std::size_t i = 0; i < len; ++i)
                        ga[base + i * step] += g;
                    });
    });
    return out;
  }

  void record(Tensor& out, const std::vector<Tensor>& inputs,
              std::function<void()> pull) {
    if (!recording_) return;
    bool any = false;
    for (const Tensor& t : inputs) any = any || t.requires_grad();
    if (!any) return;
    out.set_requires_grad(true);
    outputs_.push_back(out);
    entries_.push_back(std::move(pull));
  }

  bool recording_;
  std::vector<std::function<void()>> entries_;
  std::vector<Tensor> outputs_;
};

// Uniform dispatcher over the primitive set; mainly for harnesses that want
// to enumerate kernels generically.
inline Tensor apply_primitive(Tape& tape, Primitive op,
                              const std::vector<Tensor>& in,
                              const OpArgs& args = {}) {
  auto want = [&](std::size_t n) {
    if (in.size() != n)
      throw TensorError(std::string(primitive_name(op)) + ": expected " +
                        std::to_string(n) + " inputs, got " +
                        std::to_string(in.size()));
  };
  switch (op) {
    case Primitive::Add: want(2); return tape.add(in[0], in[1]);
    case Primitive::AddScalar: want(1); return tape.add_scalar(in[0], args.scalar);
    case Primitive::Sub: want(2); return tape.sub(in[0], in[1]);
    case Primitive::Mul: want(2); return tape.mul(in[0], in[1]);
    case Primitive::ScalarMul: want(1); return tape.scalar_mul(in[0], args.scalar);
    case Primitive::MatMul: want(2); return tape.matmul(in[0], in[1]);
    case Primitive::Transpose: want(1); return tape.transpose(in[0]);
    case Primitive::Concat: return tape.concat(in, args.axis);
    case Primitive::SliceCols:
      want(1);
      return tape.slice_cols(in[0], args.col_begin, args.col_end);
    case Primitive::GatherRows: want(1); return tape.gather_rows(in[0], args.indices);
    case Primitive::Reshape: want(1); return tape.reshape(in[0], args.target_shape);
    case Primitive::Softmax: want(1); return tape.softmax(in[0], args.axis);
    case Primitive::LogSumExp: want(1); return tape.logsumexp(in[0], args.axis);
    case Primitive::Relu: want(1); return tape.relu(in[0]);
    case Primitive::Tanh: want(1); return tape.tanh(in[0]);
    case Primitive::Sigmoid: want(1); return tape.sigmoid(in[0]);
    case Primitive::Log: want(1); return tape.log(in[0]);
    case Primitive::Exp: want(1); return tape.exp(in[0]);
    case Primitive::LayerNorm: want(1); return tape.layer_norm(in[0]);
    case Primitive::Sum: want(1); return tape.sum(in[0], args.axis);
    case Primitive::Mean: want(1); return tape.mean(in[0], args.axis);
    case Primitive::SumAll: want(1); return tape.sum_all(in[0]);
    case Primitive::Normalize: want(1); return tape.normalize(in[0]);
    case Primitive::NormalizeRows: want(1); return tape.normalize_rows(in[0]);
    case Primitive::ClampMin: want(1); return tape.clamp_min(in[0], args.scalar);
  }
  throw TensorError("apply_primitive: unknown op");
}

}  // namespace gega
