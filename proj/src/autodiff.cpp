#include "cascadenet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cascadenet/errors.hpp"

namespace cascadenet::ad {

namespace {

std::string shape_str(const Tape::Node& n) { return std::to_string(n.rows) + "x" + std::to_string(n.cols); }

[[noreturn]] void shape_fail(std::string_view op, const Tape::Node& a, const Tape::Node* b = nullptr,
                             std::string_view detail = {}) {
  std::string msg = std::string(op) + ": incompatible shape " + shape_str(a);
  if (b) msg += " and " + shape_str(*b);
  if (!detail.empty()) msg += " (" + std::string(detail) + ")";
  throw ShapeError(msg);
}

Tape& same_tape(Var a, Var b, std::string_view op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) throw DomainError(std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a, std::string_view op) {
  if (!a.valid()) throw DomainError(std::string(op) + ": invalid tensor handle");
  return *a.tape();
}

// C (m x n) += A (m x k) * B (k x n)
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

// C (m x k) += A (m x n) * B^T, B is k x n
void gemm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* b = B + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += a[j] * b[j];
      C[i * k + p] += acc;
    }
  }
}

// C (k x n) += A^T * B, A is m x k, B is m x n
void gemm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* b = B + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      double* c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

bool any_requires(Tape& t, std::initializer_list<std::size_t> ids) {
  return std::any_of(ids.begin(), ids.end(), [&](std::size_t id) { return t.node(id).requires_grad; });
}

Tape::Node make_node(std::string_view op, std::size_t rows, std::size_t cols) {
  Tape::Node n;
  n.op = op;
  n.rows = rows;
  n.cols = cols;
  n.value.assign(rows * cols, 0.0);
  return n;
}

// Elementwise unary op whose derivative is expressible from (input, output).
template <typename Fwd, typename Deriv>
Var unary(Var a, std::string_view op, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a, op);
  const auto& in = t.node(a.id());
  auto n = make_node(op, in.rows, in.cols);
  for (std::size_t i = 0; i < in.value.size(); ++i) n.value[i] = fwd(in.value[i]);
  n.requires_grad = in.requires_grad;
  const std::size_t ia = a.id();
  if (n.requires_grad) {
    n.backward = [ia, deriv](Tape& tp, std::size_t self) {
      const auto& out = tp.node(self);
      auto& ga = tp.grad_buffer(ia);
      const auto& x = tp.node(ia).value;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[i] * deriv(x[i], out.value[i]);
    };
  }
  return t.push(std::move(n));
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw ShapeError("matrix: " + std::to_string(data.size()) + " values for shape " + std::to_string(r) + "x" +
                     std::to_string(c));
  }
}

std::size_t Var::rows() const { return tape_->node(id_).rows; }
std::size_t Var::cols() const { return tape_->node(id_).cols; }
std::span<const double> Var::value() const { return tape_->node(id_).value; }
std::span<const double> Var::grad() const { return tape_->node(id_).grad; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

double Var::item() const {
  const auto& n = tape_->node(id_);
  if (n.rows != 1 || n.cols != 1) throw ShapeError("item: tensor is " + shape_str(n) + ", not 1x1");
  return n.value[0];
}

Matrix Var::to_matrix() const {
  const auto& n = tape_->node(id_);
  return Matrix(n.rows, n.cols, n.value);
}

Matrix Var::grad_matrix() const {
  const auto& n = tape_->node(id_);
  if (n.grad.empty()) return Matrix(n.rows, n.cols);
  return Matrix(n.rows, n.cols, n.grad);
}

Var Tape::leaf(Matrix value, bool requires_grad, std::string_view name) {
  Node n;
  n.op = "leaf";
  n.name = std::string(name);
  n.rows = value.rows;
  n.cols = value.cols;
  n.value = std::move(value.data);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::push(Node node) {
#ifndef NDEBUG
  if (node.op != "leaf" && std::any_of(node.value.begin(), node.value.end(), [](double v) { return !std::isfinite(v); })) {
    throw NumericalError(std::string(node.op) + " #" + std::to_string(nodes_.size()) + " produced a non-finite value");
  }
#endif
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw DomainError("backward: loss belongs to another tape");
  const auto& ln = nodes_[loss.id()];
  if (ln.rows != 1 || ln.cols != 1) throw DomainError("backward: loss must be a 1x1 tensor, got " + shape_str(ln));
  if (backward_done_) throw StateError("backward called twice without zero_grad()");
  backward_done_ = true;
  if (!ln.requires_grad) return;
  grad_buffer(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.clear();
  backward_done_ = false;
}

std::optional<std::string> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (std::any_of(n.value.begin(), n.value.end(), [](double v) { return !std::isfinite(v); })) {
      std::string d = std::string(n.op) + " #" + std::to_string(i);
      if (!n.name.empty()) d += " (" + n.name + ")";
      return d;
    }
  }
  return std::nullopt;
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const auto& na = t.node(a.id());
  const auto& nb = t.node(b.id());
  if (na.cols != nb.rows) shape_fail("matmul", na, &nb);
  const std::size_t m = na.rows;
  const std::size_t k = na.cols;
  const std::size_t n = nb.cols;
  auto out = make_node("matmul", m, n);
  gemm_nn(na.value.data(), nb.value.data(), out.value.data(), m, k, n);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  out.requires_grad = any_requires(t, {ia, ib});
  if (out.requires_grad) {
    out.backward = [ia, ib, m, k, n](Tape& tp, std::size_t self) {
      const auto& g = tp.node(self).grad;
      if (tp.node(ia).requires_grad) gemm_nt(g.data(), tp.node(ib).value.data(), tp.grad_buffer(ia).data(), m, n, k);
      if (tp.node(ib).requires_grad) gemm_tn(tp.node(ia).value.data(), g.data(), tp.grad_buffer(ib).data(), m, k, n);
    };
  }
  return t.push(std::move(out));
}

Var transpose(Var a) {
  Tape& t = tape_of(a, "transpose");
  const auto& na = t.node(a.id());
  const std::size_t r = na.rows;
  const std::size_t c = na.cols;
  auto out = make_node("transpose", c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.value[j * r + i] = na.value[i * c + j];
  out.requires_grad = na.requires_grad;
  const std::size_t ia = a.id();
  if (out.requires_grad) {
    out.backward = [ia, r, c](Tape& tp, std::size_t self) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    };
  }
  return t.push(std::move(out));
}

namespace {

template <typename Fwd>
Var binary_same_shape(Var a, Var b, std::string_view op, Fwd fwd, double sign_b, bool product) {
  Tape& t = same_tape(a, b, op);
  const auto& na = t.node(a.id());
  const auto& nb = t.node(b.id());
  if (na.rows != nb.rows || na.cols != nb.cols) shape_fail(op, na, &nb);
  auto out = make_node(op, na.rows, na.cols);
  for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = fwd(na.value[i], nb.value[i]);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  out.requires_grad = any_requires(t, {ia, ib});
  if (out.requires_grad) {
    out.backward = [ia, ib, sign_b, product](Tape& tp, std::size_t self) {
      const auto& g = tp.node(self).grad;
      if (tp.node(ia).requires_grad) {
        auto& ga = tp.grad_buffer(ia);
        if (product) {
          const auto& vb = tp.node(ib).value;
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
      }
      if (tp.node(ib).requires_grad) {
        auto& gb = tp.grad_buffer(ib);
        if (product) {
          const auto& va = tp.node(ia).value;
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign_b * g[i];
        }
      }
    };
  }
  return t.push(std::move(out));
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape(a, b, "add", [](double x, double y) { return x + y; }, 1.0, false);
}

Var sub(Var a, Var b) {
  return binary_same_shape(a, b, "sub", [](double x, double y) { return x - y; }, -1.0, false);
}

Var mul(Var a, Var b) {
  return binary_same_shape(a, b, "mul", [](double x, double y) { return x * y; }, 1.0, true);
}

Var scale(Var a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var scale(Var s, Var a) {
  Tape& t = same_tape(s, a, "scale");
  const auto& ns = t.node(s.id());
  const auto& na = t.node(a.id());
  if (ns.rows != 1 || ns.cols != 1) shape_fail("scale", ns, &na, "first operand must be 1x1");
  auto out = make_node("scale_var", na.rows, na.cols);
  const double sv = ns.value[0];
  for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = sv * na.value[i];
  const std::size_t is = s.id();
  const std::size_t ia = a.id();
  out.requires_grad = any_requires(t, {is, ia});
  if (out.requires_grad) {
    out.backward = [is, ia](Tape& tp, std::size_t self) {
      const auto& g = tp.node(self).grad;
      const auto& va = tp.node(ia).value;
      if (tp.node(is).requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * va[i];
        tp.grad_buffer(is)[0] += acc;
      }
      if (tp.node(ia).requires_grad) {
        const double sv = tp.node(is).value[0];
        auto& ga = tp.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sv * g[i];
      }
    };
  }
  return t.push(std::move(out));
}

Var add_scalar(Var a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var power(Var a, double p) {
  return unary(a, "power", [p](double x) { return std::pow(x, p); },
               [p](double x, double) { return p == 0.0 ? 0.0 : p * std::pow(x, p - 1.0); });
}

Var log2(Var a) {
  return unary(a, "log2", [](double x) { return std::log2(x); },
               [](double x, double) { return 1.0 / (x * std::numbers::ln2); });
}

Var sum(Var a) {
  Tape& t = tape_of(a, "sum");
  const auto& na = t.node(a.id());
  auto out = make_node("sum", 1, 1);
  double acc = 0.0;
  for (double v : na.value) acc += v;
  out.value[0] = acc;
  out.requires_grad = na.requires_grad;
  const std::size_t ia = a.id();
  if (out.requires_grad) {
    out.backward = [ia](Tape& tp, std::size_t self) {
      const double g = tp.node(self).grad[0];
      for (double& v : tp.grad_buffer(ia)) v += g;
    };
  }
  return t.push(std::move(out));
}

Var softmax(Var a, int axis) {
  Tape& t = tape_of(a, "softmax");
  const auto& na = t.node(a.id());
  if (axis != 0 && axis != 1) shape_fail("softmax", na, nullptr, "axis must be 0 or 1");
  const std::size_t r = na.rows;
  const std::size_t c = na.cols;
  // Softmax over groups: axis 1 -> each row, axis 0 -> each column.
  const std::size_t groups = axis == 1 ? r : c;
  const std::size_t len = axis == 1 ? c : r;
  auto index = [=](std::size_t g, std::size_t i) { return axis == 1 ? g * c + i : i * c + g; };
  auto out = make_node("softmax", r, c);
  for (std::size_t g = 0; g < groups; ++g) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, na.value[index(g, i)]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(na.value[index(g, i)] - mx);
      out.value[index(g, i)] = e;
      z += e;
    }
    for (std::size_t i = 0; i < len; ++i) out.value[index(g, i)] /= z;
  }
  out.requires_grad = na.requires_grad;
  const std::size_t ia = a.id();
  if (out.requires_grad) {
    out.backward = [ia, groups, len, index](Tape& tp, std::size_t self) {
      const auto& o = tp.node(self);
      auto& ga = tp.grad_buffer(ia);
      for (std::size_t g = 0; g < groups; ++g) {
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += o.grad[index(g, i)] * o.value[index(g, i)];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t k = index(g, i);
          ga[k] += o.value[k] * (o.grad[k] - dot);
        }
      }
    };
  }
  return t.push(std::move(out));
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Tape& t = tape_of(parts[0], "concat");
  for (const Var& p : parts) {
    if (p.tape() != &t) throw DomainError("concat: operands live on different tapes");
  }
  if (axis != 0 && axis != 1) shape_fail("concat", t.node(parts[0].id()), nullptr, "axis must be 0 or 1");
  const auto& first = t.node(parts[0].id());
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (const Var& p : parts) {
    const auto& n = t.node(p.id());
    if (axis == 0) {
      if (n.cols != first.cols) shape_fail("concat", first, &n, "axis 0 needs equal column counts");
      rows += n.rows;
      cols = n.cols;
    } else {
      if (n.rows != first.rows) shape_fail("concat", first, &n, "axis 1 needs equal row counts");
      cols += n.cols;
      rows = n.rows;
    }
  }
  auto out = make_node("concat", rows, cols);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const auto& n = t.node(p.id());
    ids.push_back(p.id());
    offsets.push_back(off);
    for (std::size_t i = 0; i < n.rows; ++i)
      for (std::size_t j = 0; j < n.cols; ++j) {
        const std::size_t dst = axis == 0 ? (off + i) * cols + j : i * cols + off + j;
        out.value[dst] = n.value[i * n.cols + j];
      }
    off += axis == 0 ? n.rows : n.cols;
    out.requires_grad = out.requires_grad || n.requires_grad;
  }
  if (out.requires_grad) {
    out.backward = [ids, offsets, axis, cols](Tape& tp, std::size_t self) {
      const auto& g = tp.node(self).grad;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        if (!tp.node(ids[p]).requires_grad) continue;
        auto& gp = tp.grad_buffer(ids[p]);
        const auto& n = tp.node(ids[p]);
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t j = 0; j < n.cols; ++j) {
            const std::size_t src = axis == 0 ? (offsets[p] + i) * cols + j : i * cols + offsets[p] + j;
            gp[i * n.cols + j] += g[src];
          }
      }
    };
  }
  return t.push(std::move(out));
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a, "slice");
  const auto& na = t.node(a.id());
  if (axis != 0 && axis != 1) shape_fail("slice", na, nullptr, "axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? na.rows : na.cols;
  if (begin > end || end > extent) {
    shape_fail("slice", na, nullptr, "range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of bounds");
  }
  const std::size_t r = axis == 0 ? end - begin : na.rows;
  const std::size_t c = axis == 1 ? end - begin : na.cols;
  const std::size_t src_cols = na.cols;
  auto out = make_node("slice", r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t src = axis == 0 ? (begin + i) * src_cols + j : i * src_cols + begin + j;
      out.value[i * c + j] = na.value[src];
    }
  out.requires_grad = na.requires_grad;
  const std::size_t ia = a.id();
  if (out.requires_grad) {
    out.backward = [ia, axis, begin, r, c, src_cols](Tape& tp, std::size_t self) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t dst = axis == 0 ? (begin + i) * src_cols + j : i * src_cols + begin + j;
          ga[dst] += g[i * c + j];
        }
    };
  }
  return t.push(std::move(out));
}

Var gather_columns(Var table, std::span<const std::size_t> ids) {
  Tape& t = tape_of(table, "gather_columns");
  const auto& nt = t.node(table.id());
  const std::size_t h = nt.rows;
  const std::size_t n = nt.cols;
  for (std::size_t id : ids) {
    if (id >= n) throw std::out_of_range("gather_columns: index " + std::to_string(id) + " >= " + std::to_string(n));
  }
  auto out = make_node("gather_columns", ids.size(), h);
  for (std::size_t k = 0; k < ids.size(); ++k)
    for (std::size_t i = 0; i < h; ++i) out.value[k * h + i] = nt.value[i * n + ids[k]];
  out.requires_grad = nt.requires_grad;
  const std::size_t it = table.id();
  if (out.requires_grad) {
    out.backward = [it, h, n, idx = std::vector<std::size_t>(ids.begin(), ids.end())](Tape& tp, std::size_t self) {
      const auto& g = tp.node(self).grad;
      auto& gt = tp.grad_buffer(it);
      for (std::size_t k = 0; k < idx.size(); ++k)
        for (std::size_t i = 0; i < h; ++i) gt[i * n + idx[k]] += g[k * h + i];
    };
  }
  return t.push(std::move(out));
}

Var repeat_rows(Var a, std::size_t times) {
  Tape& t = tape_of(a, "repeat_rows");
  const auto& na = t.node(a.id());
  if (na.rows != 1) shape_fail("repeat_rows", na, nullptr, "operand must be a single row");
  const std::size_t c = na.cols;
  auto out = make_node("repeat_rows", times, c);
  for (std::size_t k = 0; k < times; ++k) std::copy(na.value.begin(), na.value.end(), out.value.begin() + static_cast<std::ptrdiff_t>(k * c));
  out.requires_grad = na.requires_grad;
  const std::size_t ia = a.id();
  if (out.requires_grad) {
    out.backward = [ia, times, c](Tape& tp, std::size_t self) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.grad_buffer(ia);
      for (std::size_t k = 0; k < times; ++k)
        for (std::size_t j = 0; j < c; ++j) ga[j] += g[k * c + j];
    };
  }
  return t.push(std::move(out));
}

GradCheck finite_diff_check(const TapeFunction& f, const std::vector<Matrix>& params, double eps) {
  auto evaluate = [&](const std::vector<Matrix>& ps, bool with_grad, std::vector<Matrix>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(ps.size());
    for (const auto& p : ps) leaves.push_back(tape.leaf(p, with_grad));
    Var out = f(tape, leaves);
    const double v = out.item();
    if (with_grad) {
      tape.backward(out);
      for (const Var& l : leaves) grads->push_back(l.grad_matrix());
    }
    return v;
  };

  std::vector<Matrix> analytic;
  evaluate(params, true, &analytic);
  GradCheck result;
  result.per_input.assign(params.size(), 0.0);
  auto work = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = work[p].data[i];
      work[p].data[i] = orig + eps;
      const double up = evaluate(work, false, nullptr);
      work[p].data[i] = orig - eps;
      const double down = evaluate(work, false, nullptr);
      work[p].data[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double ga = analytic[p].data[i];
      const double rel = std::abs(ga - numeric) / std::max(1e-8, std::abs(ga) + std::abs(numeric));
      result.per_input[p] = std::max(result.per_input[p], rel);
      result.max_rel_error = std::max(result.max_rel_error, rel);
    }
  }
  return result;
}

}  // namespace cascadenet::ad
