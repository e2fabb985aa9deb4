#include "hdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "hdet/geometry.hpp"
#include "hdet/loss.hpp"
#include "hdet/model.hpp"
#include "hdet/rng.hpp"
#include "hdet/taxonomy.hpp"

namespace hdet {

using ad::Shape;
using ad::Tape;
using ad::Var;

GradError max_relative_error(const GraphFn& f, const std::vector<GradLeaf>& leaves,
                             double tolerance, double h, bool freeze_trade_off) {
  std::optional<FrozenTradeOff> frozen;
  if (freeze_trade_off) frozen.emplace();

  Tape tape;
  std::vector<Var> vars;
  for (const auto& l : leaves) vars.push_back(tape.parameter(l.data, l.shape));
  const Var root = f(tape, vars);
  tape.backward(root);
  if (frozen) frozen->freeze();

  auto evaluate = [&](const std::vector<GradLeaf>& ls) {
    if (frozen) frozen->rewind();
    Tape t;
    std::vector<Var> vs;
    for (const auto& l : ls) vs.push_back(t.constant(l.data, l.shape));
    return f(t, vs).item();
  };

  GradError out;
  const double f0 = evaluate(leaves);
  std::vector<GradLeaf> probe = leaves;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto grad = vars[i].grad();
    for (std::size_t k = 0; k < leaves[i].data.size(); ++k) {
      const double x = leaves[i].data[k];
      probe[i].data[k] = x + h;
      const double fp = evaluate(probe);
      probe[i].data[k] = x - h;
      const double fm = evaluate(probe);
      probe[i].data[k] = x;
      const double analytic = grad.empty() ? 0.0 : grad[k];
      auto rel = [analytic](double numeric) {
        return std::abs(analytic - numeric) /
               std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
      };
      double err = rel((fp - fm) / (2.0 * h));
      const double right = (fp - f0) / h, left = (f0 - fm) / h;
      const double gap = std::abs(right - left) / std::max({std::abs(left), std::abs(right), kRelFloor});
      if (err > tolerance && gap > tolerance) {
        ++out.kinks;
        probe[i].data[k] = x + 2.0 * h;
        const double fpp = evaluate(probe);
        probe[i].data[k] = x - 2.0 * h;
        const double fmm = evaluate(probe);
        probe[i].data[k] = x;
        const double right2 = (-3.0 * f0 + 4.0 * fp - fpp) / (2.0 * h);
        const double left2 = (3.0 * f0 - 4.0 * fm + fmm) / (2.0 * h);
        err = std::min(rel(right2), rel(left2));
      }
      out.max_rel_error = std::max(out.max_rel_error, std::isfinite(err) ? err : INFINITY);
      ++out.checked;
    }
  }
  return out;
}

namespace {

// Uniform draws in [lo, hi), redrawn until `ok` accepts them.
std::vector<double> draw(Rng& rng, std::size_t n, double lo, double hi,
                         const std::function<bool(double)>& ok = {}) {
  std::vector<double> v(n);
  for (double& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (ok && !ok(x));
  }
  return v;
}

// Projects any output onto a scalar with fixed random weights.
struct Projector {
  std::vector<double> weights;
  Var operator()(const Var& out) const {
    std::vector<double> w(weights.begin(), weights.begin() + static_cast<long>(out.numel()));
    return ad::sum(ad::mul_const(out, w));
  }
};

class Runner {
 public:
  explicit Runner(std::uint64_t seed) : rng_(Rng::substream(seed, 7)) {
    proj_.weights = draw(rng_, 4096, -1.0, 1.0);
  }

  void check(const std::string& suite, const std::string& op, double tol,
             const std::vector<GradLeaf>& leaves, const GraphFn& f, bool freeze = false) {
    const GradError e = max_relative_error(f, leaves, tol, kGradcheckStep, freeze);
    entries_.push_back({suite, op, e.max_rel_error, tol, e.checked, e.kinks});
  }

  /// Unary elementwise op on a [2,3] input.
  void unary(const std::string& op, double lo, double hi,
             const std::function<Var(const Var&)>& fn,
             const std::function<bool(double)>& ok = {}) {
    const Projector p = proj_;
    check("autodiff", op, kPrimitiveTolerance, {{draw(rng_, 6, lo, hi, ok), Shape{2, 3}}},
          [fn, p](Tape&, const std::vector<Var>& v) { return p(fn(v[0])); });
  }

  void binary(const std::string& op, const std::function<Var(const Var&, const Var&)>& fn,
              std::vector<double> a, std::vector<double> b, Shape sa, Shape sb) {
    const Projector p = proj_;
    check("autodiff", op, kPrimitiveTolerance, {{std::move(a), sa}, {std::move(b), sb}},
          [fn, p](Tape&, const std::vector<Var>& v) { return p(fn(v[0], v[1])); });
  }

  Rng& rng() { return rng_; }
  const Projector& proj() const { return proj_; }
  std::vector<GradcheckEntry> take() { return std::move(entries_); }

 private:
  Rng rng_;
  Projector proj_;
  std::vector<GradcheckEntry> entries_;
};

void autodiff_suite(Runner& r) {
  Rng& g = r.rng();
  const auto away = [](double c, double m) { return [c, m](double x) { return std::abs(x - c) > m; }; };

  auto pair_apart = [&](std::size_t n, double gap) {
    std::vector<double> a = draw(g, n, -2, 2), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      do {
        b[i] = g.uniform(-2, 2);
      } while (std::abs(a[i] - b[i]) < gap);
    }
    return std::pair{a, b};
  };

  r.binary("add", ad::add, draw(g, 6, -2, 2), draw(g, 6, -2, 2), Shape{2, 3}, Shape{2, 3});
  r.binary("add (broadcast)", ad::add, draw(g, 6, -2, 2), draw(g, 1, -2, 2), Shape{2, 3}, Shape{1});
  r.binary("sub", ad::sub, draw(g, 6, -2, 2), draw(g, 6, -2, 2), Shape{2, 3}, Shape{2, 3});
  r.binary("sub (broadcast)", ad::sub, draw(g, 1, -2, 2), draw(g, 6, -2, 2), Shape{1}, Shape{2, 3});
  r.binary("mul", ad::mul, draw(g, 6, -2, 2), draw(g, 6, -2, 2), Shape{2, 3}, Shape{2, 3});
  r.binary("mul (broadcast)", ad::mul, draw(g, 6, -2, 2), draw(g, 1, -2, 2), Shape{2, 3}, Shape{1});
  const auto nonzero = [](double x) { return std::abs(x) > 0.5; };
  r.binary("div", ad::div, draw(g, 6, -2, 2), draw(g, 6, -2, 2, nonzero), Shape{2, 3}, Shape{2, 3});
  r.binary("div (broadcast)", ad::div, draw(g, 6, -2, 2), draw(g, 1, -2, 2, nonzero), Shape{2, 3},
           Shape{1});
  {
    auto [a, b] = pair_apart(6, 0.05);
    r.binary("minimum", ad::minimum, a, b, Shape{2, 3}, Shape{2, 3});
  }
  {
    auto [a, b] = pair_apart(6, 0.05);
    r.binary("maximum", ad::maximum, a, b, Shape{2, 3}, Shape{2, 3});
  }

  r.unary("neg", -2, 2, [](const Var& x) { return ad::neg(x); });
  r.unary("sigmoid", -2, 2, [](const Var& x) { return ad::sigmoid(x); });
  r.unary("exp", -2, 2, [](const Var& x) { return ad::exp(x); });
  r.unary("log", 0.2, 2, [](const Var& x) { return ad::log(x); });
  r.unary("relu", -2, 2, [](const Var& x) { return ad::relu(x); }, away(0.0, 0.05));
  r.unary("square", -2, 2, [](const Var& x) { return ad::square(x); });
  r.unary("atan", -2, 2, [](const Var& x) { return ad::atan(x); });
  r.unary("softplus", -2, 2, [](const Var& x) { return ad::softplus(x); });
  r.unary("clamp", -2, 2, [](const Var& x) { return ad::clamp(x, -1.0, 1.0); },
          [](double x) { return std::abs(std::abs(x) - 1.0) > 0.05; });
  r.unary("scale", -2, 2, [](const Var& x) { return ad::scale(x, -1.7); });
  r.unary("add_scalar", -2, 2, [](const Var& x) { return ad::add_scalar(x, 0.3); });
  {
    const auto w = draw(g, 6, -2, 2);
    r.unary("mul_const", -2, 2, [w](const Var& x) { return ad::mul_const(x, w); });
  }

  const Projector& p = r.proj();
  r.check("autodiff", "matmul", kPrimitiveTolerance,
          {{draw(g, 12, -2, 2), Shape{3, 4}}, {draw(g, 8, -2, 2), Shape{4, 2}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::matmul(v[0], v[1])); });
  r.check("autodiff", "conv2d (stride 1, pad 1)", kPrimitiveTolerance,
          {{draw(g, 50, -2, 2), Shape{2, 5, 5}}, {draw(g, 54, -1, 1), Shape{3, 2, 3, 3}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::conv2d(v[0], v[1], 1, 1)); });
  r.check("autodiff", "conv2d (stride 2, pad 0)", kPrimitiveTolerance,
          {{draw(g, 50, -2, 2), Shape{2, 5, 5}}, {draw(g, 36, -1, 1), Shape{2, 2, 3, 3}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::conv2d(v[0], v[1], 2, 0)); });
  r.check("autodiff", "add_channel_bias", kPrimitiveTolerance,
          {{draw(g, 24, -2, 2), Shape{2, 3, 4}}, {draw(g, 2, -2, 2), Shape{2}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::add_channel_bias(v[0], v[1])); });
  {
    // distinct values so every window has a clear maximum
    std::vector<double> x(32);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = -2.0 + 0.125 * static_cast<double>(i);
    g.shuffle(x.begin(), x.end());
    r.check("autodiff", "maxpool2", kPrimitiveTolerance, {{x, Shape{2, 4, 4}}},
            [p](Tape&, const std::vector<Var>& v) { return p(ad::maxpool2(v[0])); });
  }
  r.check("autodiff", "reduce_sum", kPrimitiveTolerance, {{draw(g, 24, -2, 2), Shape{2, 3, 4}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::reduce_sum(v[0], {1})); });
  r.check("autodiff", "reduce_mean", kPrimitiveTolerance, {{draw(g, 24, -2, 2), Shape{2, 3, 4}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::reduce_mean(v[0], {0, 2})); });
  r.check("autodiff", "sum", kPrimitiveTolerance, {{draw(g, 6, -2, 2), Shape{2, 3}}},
          [](Tape&, const std::vector<Var>& v) { return ad::sum(ad::square(v[0])); });
  r.check("autodiff", "gather", kPrimitiveTolerance, {{draw(g, 6, -2, 2), Shape{2, 3}}},
          [p](Tape&, const std::vector<Var>& v) {
            return p(ad::gather(v[0], {5, 0, 0, 3, 2, 5, 1, 4}, Shape{2, 4}));
          });
  r.check("autodiff", "reshape", kPrimitiveTolerance, {{draw(g, 6, -2, 2), Shape{2, 3}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::reshape(v[0], Shape{3, 2})); });
  r.check("autodiff", "concat", kPrimitiveTolerance,
          {{draw(g, 6, -2, 2), Shape{2, 3}}, {draw(g, 2, -2, 2), Shape{2}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::concat({v[0], v[1], v[0]})); });

  r.check("autodiff", "log(exp(x))", kCompositeTolerance, {{draw(g, 6, -8, 8), Shape{2, 3}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::log(ad::exp(v[0]))); });
  r.check("autodiff", "log(sigmoid(x))", kCompositeTolerance, {{draw(g, 6, -8, 8), Shape{2, 3}}},
          [p](Tape&, const std::vector<Var>& v) { return p(ad::log(ad::sigmoid(v[0]))); });
}

BBox random_box(Rng& g) {
  return {g.uniform(0.2, 0.8), g.uniform(0.2, 0.8), g.uniform(0.05, 0.4), g.uniform(0.05, 0.4)};
}

void geometry_suite(Runner& r) {
  Rng& g = r.rng();
  constexpr std::size_t n = 6;
  std::vector<BBox> gt(n);
  std::vector<double> cx(n), cy(n), w(n), h(n);
  for (std::size_t i = 0; i < n; ++i) {
    gt[i] = random_box(g);
    // predictions near their targets so overlap terms are active
    cx[i] = gt[i].cx + g.uniform(-0.08, 0.08);
    cy[i] = gt[i].cy + g.uniform(-0.08, 0.08);
    w[i] = gt[i].w * g.uniform(0.6, 1.5);
    h[i] = gt[i].h * g.uniform(0.6, 1.5);
  }
  const Projector& p = r.proj();
  r.check("geometry", "ciou_loss", 1e-5,
          {{cx, Shape{n}}, {cy, Shape{n}}, {w, Shape{n}}, {h, Shape{n}}},
          [gt, p](Tape&, const std::vector<Var>& v) { return p(ciou_loss_var(v[0], v[1], v[2], v[3], gt)); },
          true);
}

struct LossFixture {
  GridSpec grid;
  Taxonomy taxonomy;
  std::vector<LabeledBox> gt;
  Assignment assignment;
  std::vector<std::size_t> targets;
  std::vector<BBox> gt_boxes;
};

LossFixture loss_fixture(Rng& g) {
  LossFixture fx;
  fx.grid.s = 2;
  fx.grid.b = 2;
  fx.grid.n_fine = 4;
  fx.grid.anchors = {{0.2, 0.2}, {0.4, 0.3}};
  fx.taxonomy = Taxonomy::series_stage(2, 2);
  for (int i = 0; i < 3; ++i) fx.gt.push_back({g.below(4), random_box(g)});
  fx.assignment = assign(fx.gt, fx.grid);
  for (const auto& e : fx.assignment.entries) {
    fx.targets.push_back(fx.gt[e.gt].cls);
    fx.gt_boxes.push_back(fx.gt[e.gt].box);
  }
  return fx;
}

void loss_suite(Runner& r) {
  Rng& g = r.rng();
  const LossFixture fx = loss_fixture(g);
  const HierLossParams params = HierLossParams::proposed(2.0, 1.0);
  const std::size_t cells = fx.grid.cells(), b = fx.grid.b, f = fx.grid.fields();

  r.check("loss", "classification_loss", kCompositeTolerance,
          {{draw(g, cells * b * 4, -3, 3), Shape{cells, b, 4}}},
          [fx, params](Tape&, const std::vector<Var>& v) {
            return classification_loss(v[0], fx.targets, fx.assignment, fx.taxonomy, params);
          });
  r.check("loss", "objectness_loss", kCompositeTolerance,
          {{draw(g, cells * b, -3, 3), Shape{cells, b}}},
          [fx](Tape&, const std::vector<Var>& v) { return objectness_loss(v[0], fx.assignment); });
  r.check("loss", "box_loss", kCompositeTolerance,
          {{draw(g, cells * b * f, -1.5, 1.5), Shape{cells, b, f}}},
          [fx](Tape&, const std::vector<Var>& v) {
            return box_loss(decode_assigned(v[0], fx.assignment, fx.grid), fx.gt_boxes, fx.assignment);
          },
          true);
  r.check("loss", "total_loss", kCompositeTolerance,
          {{draw(g, cells * b * f, -1.5, 1.5), Shape{cells, b, f}}},
          [fx, params](Tape&, const std::vector<Var>& v) {
            return total_loss(v[0], fx.gt, fx.grid, fx.taxonomy, params).total;
          },
          true);
}

void model_suite(Runner& r, std::uint64_t seed) {
  Rng& g = r.rng();
  DetectorConfig cfg;
  cfg.image_size = 32;
  cfg.widths = {3, 3, 4, 4};
  cfg.grid.s = 2;
  cfg.grid.b = 2;
  cfg.grid.n_fine = 4;
  cfg.grid.anchors = {{0.2, 0.2}, {0.4, 0.3}};
  const Detector det = Detector::init(cfg, seed);
  const Taxonomy taxonomy = Taxonomy::series_stage(2, 2);
  std::vector<LabeledBox> gt;
  for (int i = 0; i < 3; ++i) gt.push_back({g.below(4), random_box(g)});
  const std::vector<double> planar = draw(g, 3 * 32 * 32, 0.0, 1.0);
  const HierLossParams params = HierLossParams::proposed(2.0, 1.0);

  std::vector<GradLeaf> leaves;
  for (const auto& p : det.params) leaves.push_back({p.data, p.shape});
  r.check("model", "detector objective", kCompositeTolerance, leaves,
          [cfg, taxonomy, gt, planar, params](Tape& t, const std::vector<Var>& v) {
            const auto pass = forward_with(t, cfg, v, planar);
            return total_loss(pass.head, gt, cfg.grid, taxonomy, params).total;
          },
          true);
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed) {
  Runner r(seed);
  autodiff_suite(r);
  geometry_suite(r);
  loss_suite(r);
  model_suite(r, seed);
  return r.take();
}

}  // namespace hdet
