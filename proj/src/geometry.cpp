#include "hdet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "hdet/error.hpp"

namespace hdet {

namespace {

constexpr double kAspectScale = 4.0 / (std::numbers::pi * std::numbers::pi);

double trade_off(double v, double iou_value) {
  const double denom = (1.0 - iou_value) + v;
  return denom > 0.0 ? v / denom : 0.0;
}

thread_local FrozenTradeOff* active_freeze = nullptr;

}  // namespace

FrozenTradeOff::FrozenTradeOff() : previous_(active_freeze) { active_freeze = this; }
FrozenTradeOff::~FrozenTradeOff() { active_freeze = previous_; }

void FrozenTradeOff::freeze() {
  frozen_ = true;
  cursor_ = 0;
}

void FrozenTradeOff::rewind() { cursor_ = 0; }

void FrozenTradeOff::apply(std::vector<double>& coefficients) {
  FrozenTradeOff* f = active_freeze;
  if (f == nullptr) return;
  if (!f->frozen_) {
    f->calls_.push_back(coefficients);
    return;
  }
  if (f->cursor_ >= f->calls_.size() || f->calls_[f->cursor_].size() != coefficients.size())
    throw ShapeError("FrozenTradeOff: replayed call does not match the recording");
  coefficients = f->calls_[f->cursor_++];
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double area_a = a.area(), area_b = b.area();
  const double uni = std::min(area_a, area_b) + std::max(area_a, area_b) - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double ciou_loss(const BBox& pred_in, const BBox& gt) {
  BBox pred = pred_in;
  pred.w = std::max(pred.w, kMinExtent);
  pred.h = std::max(pred.h, kMinExtent);
  const double i = iou(pred, gt);
  const double rho2 = (pred.cx - gt.cx) * (pred.cx - gt.cx) + (pred.cy - gt.cy) * (pred.cy - gt.cy);
  const double ew = std::max(pred.x2(), gt.x2()) - std::min(pred.x1(), gt.x1());
  const double eh = std::max(pred.y2(), gt.y2()) - std::min(pred.y1(), gt.y1());
  const double c2 = ew * ew + eh * eh;
  const double dv = std::atan(gt.w / gt.h) - std::atan(pred.w / pred.h);
  const double v = kAspectScale * dv * dv;
  return 1.0 - i + rho2 / c2 + trade_off(v, i) * v;
}

ad::Var ciou_loss_var(const ad::Var& cx, const ad::Var& cy, const ad::Var& w_raw,
                      const ad::Var& h_raw, const std::vector<BBox>& gt) {
  using namespace ad;
  const std::size_t n = gt.size();
  for (const Var* v : {&cx, &cy, &w_raw, &h_raw})
    if (v->numel() != n)
      throw ShapeError("ciou_loss_var: " + std::to_string(n) + " targets but prediction " +
                       v->shape().str());
  Tape& tape = cx.tape();
  auto column = [&](auto field) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = field(gt[i]);
    return tape.constant(std::move(out), Shape{n});
  };
  const Var gx1 = column([](const BBox& b) { return b.x1(); });
  const Var gy1 = column([](const BBox& b) { return b.y1(); });
  const Var gx2 = column([](const BBox& b) { return b.x2(); });
  const Var gy2 = column([](const BBox& b) { return b.y2(); });
  const Var gcx = column([](const BBox& b) { return b.cx; });
  const Var gcy = column([](const BBox& b) { return b.cy; });
  const Var garea = column([](const BBox& b) { return b.area(); });
  const Var gaspect = column([](const BBox& b) { return std::atan(b.w / b.h); });

  const double inf = std::numeric_limits<double>::infinity();
  const Var w = clamp(w_raw, kMinExtent, inf);
  const Var h = clamp(h_raw, kMinExtent, inf);
  const Var px1 = cx - 0.5 * w;
  const Var px2 = cx + 0.5 * w;
  const Var py1 = cy - 0.5 * h;
  const Var py2 = cy + 0.5 * h;

  const Var iw = relu(minimum(px2, gx2) - maximum(px1, gx1));
  const Var ih = relu(minimum(py2, gy2) - maximum(py1, gy1));
  const Var inter = iw * ih;
  const Var uni = w * h + garea - inter;
  const Var iou_v = inter / uni;

  const Var ew = maximum(px2, gx2) - minimum(px1, gx1);
  const Var eh = maximum(py2, gy2) - minimum(py1, gy1);
  const Var c2 = square(ew) + square(eh);
  const Var rho2 = square(cx - gcx) + square(cy - gcy);

  const Var v = kAspectScale * square(gaspect - atan(w / h));
  std::vector<double> alpha(n);
  for (std::size_t i = 0; i < n; ++i) alpha[i] = trade_off(v.value()[i], iou_v.value()[i]);
  FrozenTradeOff::apply(alpha);

  return (1.0 - iou_v) + rho2 / c2 + mul_const(v, alpha);
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<ScoredBox> kept;
  for (std::size_t idx : order) {
    const ScoredBox& cand = dets[idx];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const ScoredBox& k) {
      return k.cls == cand.cls && iou(k.box, cand.box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

}  // namespace hdet
