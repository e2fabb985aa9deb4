#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hdet/geometry.hpp"
#include "hdet/gradcheck.hpp"
#include "hdet/rng.hpp"

using namespace hdet;

TEST_CASE("iou") {
  const BBox b{0.5, 0.5, 0.2, 0.3};
  CHECK(iou(b, b) == doctest::Approx(1.0));
  CHECK(iou(b, BBox{0.9, 0.9, 0.1, 0.1}) == 0.0);
  const BBox p = BBox::from_corners(0, 0, 2, 2), q = BBox::from_corners(1, 1, 3, 3);
  CHECK(iou(p, q) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const BBox a{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    const BBox c{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    CHECK(iou(a, c) == iou(c, a));
    CHECK(iou(a, c) >= 0.0);
    CHECK(iou(a, c) <= 1.0);
  }
}

TEST_CASE("ciou loss values") {
  const BBox gt{0.5, 0.5, 0.4, 0.2};
  CHECK(ciou_loss(gt, gt) == doctest::Approx(0.0));
  CHECK(ciou_loss(BBox{0.5, 0.5, 0.2, 0.1}, gt) == doctest::Approx(0.75).epsilon(1e-12));

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const BBox a{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    const BBox c{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    const double l = ciou_loss(a, c);
    CHECK(l >= 0.0);
    CHECK(l <= 1.0 - iou(a, c) + 2.0);
  }
}

TEST_CASE("ciou loss decreases toward a concentric target") {
  const BBox gt{0.4, 0.6, 0.3, 0.2};
  double prev = 1e9;
  for (int i = 0; i <= 10; ++i) {
    const double t = 0.1 + 0.09 * i;
    const double l = ciou_loss(BBox{gt.cx, gt.cy, gt.w * t, gt.h * t}, gt);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("ciou_loss_var agrees with the scalar form and its gradient") {
  Rng rng(7);
  std::vector<BBox> gt;
  std::vector<double> cx, cy, w, h;
  for (int i = 0; i < 5; ++i) {
    gt.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)});
    cx.push_back(gt.back().cx + rng.uniform(-0.05, 0.05));
    cy.push_back(gt.back().cy + rng.uniform(-0.05, 0.05));
    w.push_back(gt.back().w * rng.uniform(0.7, 1.3));
    h.push_back(gt.back().h * rng.uniform(0.7, 1.3));
  }
  ad::Tape t;
  const auto l = ciou_loss_var(t.constant(cx, ad::Shape{5}), t.constant(cy, ad::Shape{5}),
                               t.constant(w, ad::Shape{5}), t.constant(h, ad::Shape{5}), gt);
  for (int i = 0; i < 5; ++i) CHECK(l.value()[i] == doctest::Approx(ciou_loss({cx[i], cy[i], w[i], h[i]}, gt[i])));

  const std::vector<GradLeaf> leaves{{cx, ad::Shape{5}}, {cy, ad::Shape{5}}, {w, ad::Shape{5}}, {h, ad::Shape{5}}};
  const auto e = max_relative_error(
      [&gt](ad::Tape&, const std::vector<ad::Var>& v) { return ad::sum(ciou_loss_var(v[0], v[1], v[2], v[3], gt)); },
      leaves, 1e-5, kGradcheckStep, true);
  CHECK(e.max_rel_error <= 1e-5);
}

TEST_CASE("frozen trade-off replays recorded coefficients") {
  const std::vector<BBox> gt{{0.5, 0.5, 0.3, 0.1}};
  auto eval = [&gt](double w) {
    ad::Tape t;
    return ciou_loss_var(t.constant({0.5}, ad::Shape{1}), t.constant({0.5}, ad::Shape{1}),
                         t.constant({w}, ad::Shape{1}), t.constant({0.2}, ad::Shape{1}), gt)
        .item();
  };
  FrozenTradeOff freeze;
  const double base = eval(0.2);
  freeze.freeze();
  freeze.rewind();
  CHECK(eval(0.2) == base);
  freeze.rewind();
  CHECK(eval(0.25) != ciou_loss({0.5, 0.5, 0.25, 0.2}, gt[0]));
}

TEST_CASE("nms") {
  const BBox a{0.5, 0.5, 0.4, 0.4};
  const BBox b{0.52, 0.5, 0.4, 0.4};
  REQUIRE(iou(a, b) > 0.5);
  auto kept = nms({{a, 0, 0.9}, {b, 0, 0.8}}, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
  CHECK(nms({{a, 0, 0.9}, {b, 1, 0.8}}, 0.5).size() == 2);
  CHECK(nms({}, 0.5).empty());
}

TEST_CASE("nms is idempotent and returns a sorted subset") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredBox> d;
    for (int i = 0; i < 30; ++i)
      d.push_back({{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)},
                   static_cast<std::size_t>(rng.below(3)),
                   rng.uniform()});
    const auto once = nms(d, 0.5);
    const auto twice = nms(once, 0.5);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(once[i].box == twice[i].box);
      CHECK(once[i].score == twice[i].score);
      if (i > 0) CHECK(once[i - 1].score >= once[i].score);
      CHECK(std::any_of(d.begin(), d.end(), [&](const ScoredBox& s) {
        return s.box == once[i].box && s.score == once[i].score && s.cls == once[i].cls;
      }));
      for (std::size_t j = 0; j < i; ++j)
        if (once[j].cls == once[i].cls) CHECK(iou(once[j].box, once[i].box) < 0.5);
    }
  }
}
