#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hdet/error.hpp"
#include "hdet/loss.hpp"
#include "hdet/model.hpp"
#include "hdet/rng.hpp"

using namespace hdet;
using ad::Shape;
using ad::Tape;
using ad::Var;

namespace {

Assignment single_pair(std::size_t pairs) {
  Assignment a;
  a.entries.push_back({0, 0, 0});
  a.obj_target.assign(pairs, 0.0);
  a.obj_target[0] = 1.0;
  return a;
}

double softplus(double x) { return std::log1p(std::exp(x)); }

GridSpec small_grid() {
  GridSpec g;
  g.s = 2;
  g.b = 2;
  g.n_fine = 4;
  g.anchors = {{0.2, 0.2}, {0.4, 0.3}};
  return g;
}

}  // namespace

TEST_CASE("assign") {
  GridSpec g = small_grid();
  Assignment a = assign({{0, {0.5, 0.5, 0.2, 0.2}}}, g);
  REQUIRE(!a.entries.empty());
  CHECK(a.entries[0].cell == 3);

  a = assign({{0, {0.2, 0.3, 0.2, 0.2}}}, g);
  CHECK(a.entries.size() == 2);  // ratio 1 and 2 both < 4
  CHECK(a.entries[0].anchor == 0);

  a = assign({{0, {0.5, 0.5, 4.0, 0.2}}}, g);
  REQUIRE(a.entries.size() == 1);
  CHECK(a.entries[0].anchor == 1);

  double total = 0.0;
  for (double t : a.obj_target) total += t;
  CHECK(total == 1.0);
  CHECK_THROWS_AS(assign({{0, {1.2, 0.5, 0.1, 0.1}}}, g), ValidationError);
}

TEST_CASE("assign resolves conflicts by anchor IoU") {
  GridSpec g = small_grid();
  const Assignment a = assign({{0, {0.1, 0.1, 0.2, 0.2}}, {1, {0.15, 0.15, 0.35, 0.3}}}, g);
  for (std::size_t i = 0; i < a.entries.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      CHECK_FALSE((a.entries[i].cell == a.entries[j].cell && a.entries[i].anchor == a.entries[j].anchor));
  for (const auto& e : a.entries)
    if (e.anchor == 0) CHECK(e.gt == 0);
  CHECK(a.dropped >= 1);
}

TEST_CASE("classification loss hand values") {
  const Taxonomy merged{{"a", "b"}, {"ab"}, {0, 0}};
  const Taxonomy split{{"a", "b"}, {"a", "b"}, {0, 1}};
  const std::size_t target[] = {0};
  {
    Tape t;
    const Var logits = t.constant({0.0, 0.0}, Shape{1, 1, 2});
    const Var l = classification_loss(logits, target, single_pair(1), merged, HierLossParams::proposed(2.0, 1.0));
    CHECK(l.item() == doctest::Approx(2.0 * std::numbers::ln2).epsilon(1e-12));
  }
  {
    Tape t;
    const Var logits = t.constant({0.0, 3.0}, Shape{1, 1, 2});
    const Var l = classification_loss(logits, target, single_pair(1), split, HierLossParams::proposed(2.0, 1.0));
    CHECK(l.item() == doctest::Approx(2.0 * (std::numbers::ln2 + softplus(3.0))).epsilon(1e-12));
  }
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    Tape t;
    const Var logits = t.constant({rng.uniform(-3, 3), rng.uniform(-3, 3)}, Shape{1, 1, 2});
    const double a = rng.uniform(1.0, 4.0);
    const double pb = classification_loss(logits, target, single_pair(1), split, HierLossParams::proposed(a, 0.0)).item();
    const double cw = classification_loss(logits, target, single_pair(1), split, HierLossParams::class_weighted(a)).item();
    CHECK(std::abs(pb - cw) <= 1e-12);
  }
}

TEST_CASE("objectness loss") {
  GridSpec g = small_grid();
  const Assignment none = assign({}, g);
  Tape t;
  const Var zeros = t.constant(std::vector<double>(8, 0.0), Shape{4, 2});
  CHECK(objectness_loss(zeros, none).item() == doctest::Approx(8 * std::numbers::ln2).epsilon(1e-12));

  Assignment one = single_pair(8);
  std::vector<double> sat(8, -20.0);
  sat[0] = 20.0;
  CHECK(objectness_loss(t.constant(sat, Shape{4, 2}), one).item() <= 1e-6 * 8);

  Assignment flipped = one;
  for (double& x : flipped.obj_target) x = 1.0 - x;
  CHECK(objectness_loss(zeros, flipped).item() == doctest::Approx(objectness_loss(zeros, one).item()));
}

TEST_CASE("box loss") {
  GridSpec g;
  g.s = 1;
  g.b = 1;
  g.n_fine = 1;
  g.anchors = {{0.4, 0.2}};
  const Assignment a = single_pair(1);
  // zero raw offsets decode to the anchor at the cell center
  const BBox exact{0.5, 0.5, 0.4, 0.2};
  Tape t;
  const Var raw = t.constant(std::vector<double>(6, 0.0), Shape{1, 1, 6});
  const BoxVars d = decode_assigned(raw, a, g);
  CHECK(box_loss(d, {exact}, a).item() == doctest::Approx(0.0));
  CHECK(box_loss(d, {BBox{0.5, 0.5, 0.8, 0.4}}, a).item() == doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS(box_loss(d, {exact, exact}, a), ShapeError);

  Assignment empty;
  empty.obj_target.assign(1, 0.0);
  BoxVars none{t.scalar(0.0), {}, {}, {}};
  CHECK(box_loss(none, {}, empty).item() == 0.0);
}

TEST_CASE("total loss composition and ladder") {
  const GridSpec g = small_grid();
  const Taxonomy tax = Taxonomy::series_stage(2, 2);
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> head(g.pairs() * g.fields());
    for (double& x : head) x = rng.uniform(-3, 3);
    std::vector<LabeledBox> gt;
    for (int i = 0; i < 3; ++i)
      gt.push_back({static_cast<std::size_t>(rng.below(4)),
                    {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)}});
    auto total = [&](const HierLossParams& p) {
      Tape t;
      const auto lb = total_loss(t.constant(head, Shape{g.cells(), g.b, g.fields()}), gt, g, tax, p);
      CHECK(lb.total_value == doctest::Approx(lb.box + lb.obj + p.effective_alpha() * lb.cls).epsilon(1e-12));
      return lb;
    };
    const auto n = total(HierLossParams::normal());
    CHECK(std::abs(n.total_value - total(HierLossParams::class_weighted(1.0)).total_value) <= 1e-12);
    CHECK(std::abs(n.total_value - total(HierLossParams::proposed(1.0, 0.0)).total_value) <= 1e-12);
    const double a = rng.uniform(1.0, 4.0);
    CHECK(std::abs(total(HierLossParams::proposed(a, 0.0)).total_value -
                   total(HierLossParams::class_weighted(a)).total_value) <= 1e-12);
    // monotone in beta and alpha
    CHECK(total(HierLossParams::proposed(2.0, 2.0)).total_value >= total(HierLossParams::proposed(2.0, 1.0)).total_value);
    CHECK(total(HierLossParams::proposed(3.0, 1.0)).total_value >= total(HierLossParams::proposed(2.0, 1.0)).total_value);
  }
}

TEST_CASE("classification term ignores unassigned logits") {
  const GridSpec g = small_grid();
  const Taxonomy tax = Taxonomy::series_stage(2, 2);
  const std::vector<LabeledBox> gt{{1, {0.2, 0.2, 0.2, 0.2}}};
  Rng rng(2);
  std::vector<double> head(g.pairs() * g.fields());
  for (double& x : head) x = rng.uniform(-2, 2);
  Tape t;
  const auto base = total_loss(t.constant(head, Shape{4, 2, 9}), gt, g, tax, HierLossParams::proposed(2, 1));
  // swap the class logits of two unassigned pairs (cells 2 and 3, anchor 0)
  for (std::size_t c = 0; c < 4; ++c) std::swap(head[(2 * 2) * 9 + 5 + c], head[(3 * 2) * 9 + 5 + c]);
  const auto swapped = total_loss(t.constant(head, Shape{4, 2, 9}), gt, g, tax, HierLossParams::proposed(2, 1));
  CHECK(swapped.cls == base.cls);
}
