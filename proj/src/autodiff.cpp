#include "hdet/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

#include "hdet/error.hpp"
#include "hdet/kernels.hpp"

namespace hdet::ad {

namespace {

std::atomic<Fault> g_fault{Fault::none};

void check_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ShapeError("operands live on different tapes");
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Unary op with derivative expressed through input value x and output y.
template <typename F, typename D>
Var unary(const char* name, const Var& x, F f, D dfdx) {
  const auto in = x.value();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const std::size_t xi = x.id();
  return x.tape().push(name, x.shape(), std::move(out), {xi},
                       [xi, dfdx](Tape& t, const Node& self) {
                         const auto& xv = t.node(xi).value;
                         auto& gx = t.grad_of(xi);
                         for (std::size_t i = 0; i < xv.size(); ++i)
                           gx[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
                       });
}

// Binary op with scalar broadcasting. dfa/dfb map (a, b, y) to partials.
template <typename F, typename DA, typename DB>
Var binary(const char* name, const Var& a, const Var& b, F f, DA dfa, DB dfb) {
  check_same_tape(a, b);
  const std::size_t na = a.numel(), nb = b.numel();
  Shape shape;
  if (a.shape() == b.shape()) {
    shape = a.shape();
  } else if (nb == 1) {
    shape = a.shape();
  } else if (na == 1) {
    shape = b.shape();
  } else {
    throw ShapeError(std::string(name) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  const std::size_t n = shape.numel();
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[na == 1 ? 0 : i], bv[nb == 1 ? 0 : i]);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(name, shape, std::move(out), {ai, bi},
                       [ai, bi, na, nb, dfa, dfb](Tape& t, const Node& self) {
                         const auto& avv = t.node(ai).value;
                         const auto& bvv = t.node(bi).value;
                         const bool ga = t.node(ai).requires_grad;
                         const bool gb = t.node(bi).requires_grad;
                         for (std::size_t i = 0; i < self.value.size(); ++i) {
                           const std::size_t ia = na == 1 ? 0 : i, ib = nb == 1 ? 0 : i;
                           const double g = self.grad[i];
                           if (ga) t.grad_of(ai)[ia] += g * dfa(avv[ia], bvv[ib], self.value[i]);
                           if (gb) t.grad_of(bi)[ib] += g * dfb(avv[ia], bvv[ib], self.value[i]);
                         }
                       });
}

}  // namespace

// ---- Shape ----------------------------------------------------------------

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {}
Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

std::size_t Shape::numel() const {
  if (dims_.empty()) return 0;
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

// ---- Var ------------------------------------------------------------------

const Shape& Var::shape() const { return tape_->node(id_).shape; }
std::span<const double> Var::value() const { return tape_->node(id_).value; }
std::span<const double> Var::grad() const { return tape_->node(id_).grad; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }
const std::string& Var::op() const { return tape_->node(id_).op; }

double Var::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar " + shape().str());
  return value()[0];
}

// ---- Tape -----------------------------------------------------------------

namespace {
void check_leaf(const std::vector<double>& data, const Shape& shape) {
  if (shape.rank() == 0 || shape.numel() == 0)
    throw ShapeError("shape " + shape.str() + " has no elements");
  if (data.size() != shape.numel())
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape.str());
}
}  // namespace

Var Tape::constant(std::vector<double> data, Shape shape) {
  check_leaf(data, shape);
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(data);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(std::vector<double> data, Shape shape) {
  check_leaf(data, shape);
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(data);
  n.requires_grad = true;
  n.op = "parameter";
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(std::string op, Shape shape, std::vector<double> value,
               std::vector<std::size_t> inputs,
               std::function<void(Tape&, const Node&)> backward) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.op = std::move(op);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](std::size_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_of(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.clear();
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw ShapeError("backward root belongs to another tape");
  if (root.numel() != 1) throw ShapeError("backward root must be scalar, got " + root.shape().str());
  zero_grad();
  if (!nodes_[root.id()].requires_grad) return;
  grad_of(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, n);
  }
}

// ---- elementwise ------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

// Ties send the whole gradient to the first operand.
Var minimum(const Var& a, const Var& b) {
  return binary(
      "minimum", a, b, [](double x, double y) { return std::min(x, y); },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Var maximum(const Var& a, const Var& b) {
  return binary(
      "maximum", a, b, [](double x, double y) { return std::max(x, y); },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Var neg(const Var& x) {
  return unary("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var sigmoid(const Var& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double s) {
    const double d = s * (1.0 - s);
    return g_fault.load(std::memory_order_relaxed) == Fault::sigmoid_backward_sign ? -d : d;
  });
}

Var exp(const Var& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  for (double v : x.value())
    if (!(v > 0.0)) throw NumericalError("log of non-positive value " + std::to_string(v));
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var relu(const Var& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var square(const Var& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var atan(const Var& x) {
  return unary(
      "atan", x, [](double v) { return std::atan(v); },
      [](double v, double) { return 1.0 / (1.0 + v * v); });
}

Var softplus(const Var& x) {
  return unary("softplus", x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Var clamp(const Var& x, double lo, double hi) {
  if (lo > hi) throw ShapeError("clamp: lo > hi");
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var scale(const Var& x, double c) {
  return unary(
      "scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& x, double c) {
  return unary(
      "add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var mul_const(const Var& x, std::span<const double> weights) {
  if (weights.size() != x.numel())
    throw ShapeError("mul_const: " + std::to_string(weights.size()) + " weights for " +
                     x.shape().str());
  auto w = std::make_shared<std::vector<double>>(weights.begin(), weights.end());
  const auto xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * (*w)[i];
  const std::size_t xi = x.id();
  return x.tape().push("mul_const", x.shape(), std::move(out), {xi},
                       [xi, w](Tape& t, const Node& self) {
                         auto& gx = t.grad_of(xi);
                         for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (*w)[i];
                       });
}

// ---- linear algebra ---------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: " + a.shape().str() + " x " + b.shape().str());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  kernels::omp::gemm_nn(m, n, k, a.value(), b.value(), out);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push("matmul", Shape{m, n}, std::move(out), {ai, bi},
                       [ai, bi, m, n, k](Tape& t, const Node& self) {
                         if (t.node(ai).requires_grad)  // dA = dC * B^T
                           kernels::omp::gemm_nt(m, k, n, self.grad, t.node(bi).value,
                                                 t.grad_of(ai));
                         if (t.node(bi).requires_grad)  // dB = A^T * dC
                           kernels::omp::gemm_tn(k, n, m, t.node(ai).value, self.grad,
                                                 t.grad_of(bi));
                       });
}

Var conv2d(const Var& input, const Var& kernels_var, std::size_t stride, std::size_t pad) {
  check_same_tape(input, kernels_var);
  const Shape& is = input.shape();
  const Shape& ks = kernels_var.shape();
  if (is.rank() != 3 || ks.rank() != 4 || ks[1] != is[0])
    throw ShapeError("conv2d: input " + is.str() + " kernels " + ks.str());
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  kernels::ConvGeometry g{is[0], is[1], is[2], ks[2], ks[3], stride, pad};
  if (is[1] + 2 * pad < ks[2] || is[2] + 2 * pad < ks[3] ||
      (is[1] + 2 * pad - ks[2]) % stride != 0 || (is[2] + 2 * pad - ks[3]) % stride != 0)
    throw ShapeError("conv2d: non-integral output size for input " + is.str() + " kernels " +
                     ks.str() + " stride " + std::to_string(stride) + " pad " +
                     std::to_string(pad));
  const std::size_t out_c = ks[0], patch = g.patch(), positions = g.positions();

  auto col = std::make_shared<std::vector<double>>(patch * positions);
  kernels::omp::im2col(g, input.value(), *col);
  std::vector<double> out(out_c * positions, 0.0);
  kernels::omp::gemm_nn(out_c, positions, patch, kernels_var.value(), *col, out);

  const std::size_t ii = input.id(), ki = kernels_var.id();
  return input.tape().push(
      "conv2d", Shape{out_c, g.out_h(), g.out_w()}, std::move(out), {ii, ki},
      [ii, ki, g, col, out_c, patch, positions](Tape& t, const Node& self) {
        if (t.node(ki).requires_grad)  // dK[O,patch] = dY[O,P] * col[patch,P]^T
          kernels::omp::gemm_nt(out_c, patch, positions, self.grad, *col, t.grad_of(ki));
        if (t.node(ii).requires_grad) {  // dcol = K^T * dY, folded back
          std::vector<double> dcol(patch * positions, 0.0);
          kernels::omp::gemm_tn(patch, positions, out_c, t.node(ki).value, self.grad, dcol);
          kernels::omp::col2im(g, dcol, t.grad_of(ii));
        }
      });
}

Var add_channel_bias(const Var& x, const Var& bias) {
  check_same_tape(x, bias);
  const Shape& xs = x.shape();
  if (xs.rank() != 3 || bias.numel() != xs[0])
    throw ShapeError("add_channel_bias: x " + xs.str() + " bias " + bias.shape().str());
  const std::size_t c = xs[0], plane = xs[1] * xs[2];
  const auto xv = x.value();
  const auto bv = bias.value();
  std::vector<double> out(xv.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) out[ch * plane + p] = xv[ch * plane + p] + bv[ch];
  const std::size_t xi = x.id(), bi = bias.id();
  return x.tape().push("add_channel_bias", xs, std::move(out), {xi, bi},
                       [xi, bi, c, plane](Tape& t, const Node& self) {
                         if (t.node(xi).requires_grad) {
                           auto& gx = t.grad_of(xi);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                         }
                         if (t.node(bi).requires_grad) {
                           auto& gb = t.grad_of(bi);
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             double acc = 0.0;
                             for (std::size_t p = 0; p < plane; ++p)
                               acc += self.grad[ch * plane + p];
                             gb[ch] += acc;
                           }
                         }
                       });
}

Var maxpool2(const Var& x) {
  const Shape& xs = x.shape();
  if (xs.rank() != 3 || xs[1] % 2 != 0 || xs[2] % 2 != 0)
    throw ShapeError("maxpool2: needs [C,H,W] with even H,W, got " + xs.str());
  const std::size_t c = xs[0], h = xs[1], w = xs[2];
  const std::size_t n_out = c * (h / 2) * (w / 2);
  std::vector<double> out(n_out);
  auto argmax = std::make_shared<std::vector<std::size_t>>(n_out);
  kernels::omp::maxpool2(c, h, w, x.value(), out, *argmax);
  const std::size_t xi = x.id();
  return x.tape().push("maxpool2", Shape{c, h / 2, w / 2}, std::move(out), {xi},
                       [xi, argmax](Tape& t, const Node& self) {
                         auto& gx = t.grad_of(xi);
                         for (std::size_t o = 0; o < self.grad.size(); ++o)
                           gx[(*argmax)[o]] += self.grad[o];
                       });
}

// ---- reductions / structure -------------------------------------------------

namespace {

Var reduce_impl(const char* name, const Var& x, const std::vector<std::size_t>& axes,
                bool mean) {
  const auto& dims = x.shape().dims();
  std::vector<bool> reduced(dims.size(), false);
  for (std::size_t ax : axes) {
    if (ax >= dims.size())
      throw ShapeError(std::string(name) + ": axis " + std::to_string(ax) + " invalid for " +
                       x.shape().str());
    reduced[ax] = true;
  }
  std::vector<std::size_t> out_dims;
  std::size_t count = 1;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    if (reduced[d])
      count *= dims[d];
    else
      out_dims.push_back(dims[d]);
  }
  if (out_dims.empty()) out_dims.push_back(1);

  // map every input element to its output slot
  const std::size_t n = x.numel();
  auto slot = std::make_shared<std::vector<std::size_t>>(n);
  {
    std::vector<std::size_t> idx(dims.size(), 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < dims.size(); ++d)
        if (!reduced[d]) o = o * dims[d] + idx[d];
      (*slot)[flat] = o;
      for (std::size_t d = dims.size(); d-- > 0;) {
        if (++idx[d] < dims[d]) break;
        idx[d] = 0;
      }
    }
  }
  Shape out_shape(out_dims);
  std::vector<double> out(out_shape.numel(), 0.0);
  const auto xv = x.value();
  for (std::size_t i = 0; i < n; ++i) out[(*slot)[i]] += xv[i];
  const double factor = mean ? 1.0 / static_cast<double>(count) : 1.0;
  if (mean)
    for (double& v : out) v *= factor;
  const std::size_t xi = x.id();
  return x.tape().push(name, out_shape, std::move(out), {xi},
                       [xi, slot, factor](Tape& t, const Node& self) {
                         auto& gx = t.grad_of(xi);
                         for (std::size_t i = 0; i < gx.size(); ++i)
                           gx[i] += self.grad[(*slot)[i]] * factor;
                       });
}

}  // namespace

Var reduce_sum(const Var& x, const std::vector<std::size_t>& axes) {
  return reduce_impl("reduce_sum", x, axes, false);
}

Var reduce_mean(const Var& x, const std::vector<std::size_t>& axes) {
  return reduce_impl("reduce_mean", x, axes, true);
}

Var sum(const Var& x) {
  const auto xv = x.value();
  double acc = 0.0;
  for (double v : xv) acc += v;
  const std::size_t xi = x.id();
  return x.tape().push("sum", Shape{1}, {acc}, {xi}, [xi](Tape& t, const Node& self) {
    auto& gx = t.grad_of(xi);
    for (double& g : gx) g += self.grad[0];
  });
}

Var gather(const Var& x, std::vector<std::size_t> indices, Shape shape) {
  if (shape.numel() != indices.size())
    throw ShapeError("gather: " + std::to_string(indices.size()) + " indices for shape " +
                     shape.str());
  const auto xv = x.value();
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.size())
      throw ShapeError("gather: index " + std::to_string(indices[i]) + " out of range for " +
                       x.shape().str());
    out[i] = xv[indices[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  const std::size_t xi = x.id();
  return x.tape().push("gather", std::move(shape), std::move(out), {xi},
                       [xi, idx](Tape& t, const Node& self) {
                         auto& gx = t.grad_of(xi);
                         for (std::size_t i = 0; i < idx->size(); ++i)
                           gx[(*idx)[i]] += self.grad[i];
                       });
}

Var reshape(const Var& x, Shape shape) {
  if (shape.numel() != x.numel())
    throw ShapeError("reshape: " + x.shape().str() + " -> " + shape.str());
  const std::size_t xi = x.id();
  auto v = x.value();
  return x.tape().push("reshape", std::move(shape), std::vector<double>(v.begin(), v.end()), {xi},
                       [xi](Tape& t, const Node& self) {
                         auto& gx = t.grad_of(xi);
                         for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                       });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<double> out;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    check_same_tape(parts.front(), p);
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id());
  }
  const std::size_t total = out.size();
  return parts.front().tape().push("concat", Shape{total}, std::move(out), ids,
                                   [ids](Tape& t, const Node& self) {
                                     std::size_t off = 0;
                                     for (std::size_t id : ids) {
                                       const std::size_t n = t.node(id).value.size();
                                       if (t.node(id).requires_grad) {
                                         auto& g = t.grad_of(id);
                                         for (std::size_t i = 0; i < n; ++i)
                                           g[i] += self.grad[off + i];
                                       }
                                       off += n;
                                     }
                                   });
}

void set_fault(Fault f) { g_fault.store(f); }
Fault current_fault() { return g_fault.load(); }

}  // namespace hdet::ad
