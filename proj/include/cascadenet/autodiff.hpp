#pragma once

// Dense binary64 tensors with tape-based reverse-mode differentiation.
//
// Every tensor is two-dimensional and row-major; vectors are 1 x n or n x 1.
// Shapes never broadcast, except for the two scalar-multiply forms. Each op
// appends a node to the Tape it was called on, and Tape::backward walks the
// nodes once in reverse.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cascadenet::ad {

class Tape;

// Plain owned array used to hand values into and out of a tape.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::size_t size() const noexcept { return data.size(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Handle to a tensor recorded on a tape. Cheap to copy. Spans returned by
// value() and grad() stay valid for the lifetime of the tape.
class Var {
 public:
  Var() = default;

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  std::vector<std::size_t> shape() const { return {rows(), cols()}; }
  std::span<const double> value() const;
  // Empty until backward has reached this tensor.
  std::span<const double> grad() const;
  bool requires_grad() const;
  double item() const;  // value of a 1 x 1 tensor
  Matrix to_matrix() const;
  Matrix grad_matrix() const;  // zeros when no gradient reached it

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true, std::string_view name = "leaf");
  Var constant(Matrix value, std::string_view name = "const") { return leaf(std::move(value), false, name); }
  Var scalar(double v, bool requires_grad = false) { return leaf(Matrix(1, 1, v), requires_grad, "scalar"); }

  // Fills grads with d loss / d tensor for every tensor that requires grad.
  // Throws DomainError if loss is not 1 x 1, StateError if called twice
  // without zero_grad().
  void backward(Var loss);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }

  // Description ("op #index") of the first tensor holding NaN/Inf, if any.
  std::optional<std::string> first_non_finite() const;

  // Used by the op implementations.
  struct Node {
    std::string_view op;
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };
  Var push(Node node);
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  // Grad buffer of `id`, allocated (zeroed) on first use.
  std::vector<double>& grad_buffer(std::size_t id);

 private:
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// Primitives. All throw ShapeError on incompatible shapes, naming the op.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);         // elementwise
Var scale(Var a, double s);    // scalar multiply
Var scale(Var s, Var a);       // a times the 1 x 1 tensor s
Var add_scalar(Var a, double s);
Var sigmoid(Var a);
Var tanh(Var a);
Var power(Var a, double p);    // elementwise a^p
Var log2(Var a);
Var sum(Var a);                // 1 x 1
Var softmax(Var a, int axis);  // axis 1: each row sums to 1; axis 0: each column
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);
// Row k of the result is column ids[k] of `table` (table is H x N).
Var gather_columns(Var table, std::span<const std::size_t> ids);
// Stacks `times` copies of the 1 x n row a.
Var repeat_rows(Var a, std::size_t times);

// Central-difference gradient check. `f` builds a scalar from tape leaves
// holding `params`; the result is max |g_a - g_n| / max(1e-8, |g_a| + |g_n|)
// over every coordinate, also broken down per input.
struct GradCheck {
  double max_rel_error = 0.0;
  std::vector<double> per_input;
};
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;
GradCheck finite_diff_check(const TapeFunction& f, const std::vector<Matrix>& params, double eps = 1e-5);

}  // namespace cascadenet::ad
