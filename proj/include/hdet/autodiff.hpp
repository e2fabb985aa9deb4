#pragma once

// Reverse-mode automatic differentiation over dense 64-bit arrays.
//
// A Tape owns every node created while building an expression; a Var is a
// cheap handle (tape + node index). Nodes are appended in creation order, so
// inputs always precede their consumers and the reverse sweep in backward()
// is a plain descending loop over indices. Values are never mutated after a
// node is created.
//
// Tapes are single-threaded. Distinct tapes share nothing and can be built and
// differentiated concurrently.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hdet::ad {

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t numel() const;
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }
  std::span<const double> value() const;
  /// Adjoint; empty until backward() has run on a root depending on this node.
  std::span<const double> grad() const;
  double item() const;
  bool requires_grad() const;
  const std::string& op() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::size_t> inputs;
  /// Adds this node's adjoint contribution into its inputs' adjoints.
  std::function<void(Tape&, const Node&)> backward;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient. Throws ShapeError on length mismatch or empty shape.
  Var constant(std::vector<double> data, Shape shape);
  /// Leaf that receives a gradient.
  Var parameter(std::vector<double> data, Shape shape);
  Var scalar(double v) { return constant({v}, Shape{1}); }

  /// Populates adjoints of every node reachable from `root` that requires a
  /// gradient. Adjoints are recomputed from zero on every call.
  void backward(const Var& root);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  /// Appends an op node; `requires_grad` is derived from the inputs.
  Var push(std::string op, Shape shape, std::vector<double> value,
           std::vector<std::size_t> inputs, std::function<void(Tape&, const Node&)> backward);

  /// Adjoint buffer of a node, allocated on first use during backward.
  std::vector<double>& grad_of(std::size_t id);

 private:
  std::deque<Node> nodes_;
};

// ---- elementwise --------------------------------------------------------
// Binary ops take equal shapes, or one side with a single element which is
// broadcast against the other.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);

Var neg(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
/// Throws hdet::NumericalError if any input is <= 0.
Var log(const Var& x);
Var relu(const Var& x);
Var square(const Var& x);
Var atan(const Var& x);
/// log(1 + e^x), computed without overflow.
Var softplus(const Var& x);
/// Gradient passes on the closed interval [lo, hi], zero outside.
Var clamp(const Var& x, double lo, double hi);
Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double c, const Var& x) { return scale(x, c); }
inline Var operator*(const Var& x, double c) { return scale(x, c); }
inline Var operator+(const Var& x, double c) { return add_scalar(x, c); }
inline Var operator+(double c, const Var& x) { return add_scalar(x, c); }
inline Var operator-(const Var& x, double c) { return add_scalar(x, -c); }
inline Var operator-(double c, const Var& x) { return add_scalar(neg(x), c); }

/// Elementwise product with a constant array (no gradient to the weights).
Var mul_const(const Var& x, std::span<const double> weights);

// ---- linear algebra / structure -------------------------------------------

/// [m,k] x [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);

/// input [C,H,W], kernels [O,C,kh,kw] -> [O,H',W'] (cross-correlation).
/// Throws ShapeError when (H + 2*pad - kh) is not a multiple of stride.
Var conv2d(const Var& input, const Var& kernels, std::size_t stride, std::size_t pad);

/// x [C,H,W] + bias [C] broadcast over the spatial extent.
Var add_channel_bias(const Var& x, const Var& bias);

/// 2x2 stride-2 max pooling over [C,H,W]; H and W must be even.
Var maxpool2(const Var& x);

/// Reduction over the given axes (dropped from the result shape; reducing all
/// axes yields shape [1]).
Var reduce_sum(const Var& x, const std::vector<std::size_t>& axes);
Var reduce_mean(const Var& x, const std::vector<std::size_t>& axes);
/// Sum of all elements, shape [1].
Var sum(const Var& x);

/// out[i] = x.flat[indices[i]], reshaped to `shape`. Backward scatter-adds.
Var gather(const Var& x, std::vector<std::size_t> indices, Shape shape);
Var reshape(const Var& x, Shape shape);

/// Flat concatenation; result shape [total element count].
Var concat(const std::vector<Var>& parts);

// ---- fault injection ----------------------------------------------------
// Used by the gradient checker's self-test to prove it can see a broken rule.

enum class Fault { none, sigmoid_backward_sign };
void set_fault(Fault f);
Fault current_fault();

}  // namespace hdet::ad
