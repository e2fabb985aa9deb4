#pragma once

// Central finite-difference verification of every differentiable piece:
// autodiff ops, the CIoU loss, the loss terms and a tiny detector.
//
// error = |analytic - numeric| / max(|analytic|, |numeric|, kRelFloor),
// maximized over every input element.
//
// Piecewise-smooth graphs (relu, max pooling, min/max) have kinks a probe can
// straddle. When the central difference misses the tolerance and the left and
// right one-sided slopes also disagree beyond it, the element is counted as a
// kink and compared against the nearer second-order one-sided difference; a
// check fails if more than kMaxKinkFraction of its elements are kinks. One
// switching activation is upstream of many parameters, so kinks come in groups.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hdet/autodiff.hpp"

namespace hdet {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kRelFloor = 1e-3;
inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kCompositeTolerance = 1e-4;
inline constexpr double kMaxKinkFraction = 0.25;

struct GradLeaf {
  std::vector<double> data;
  ad::Shape shape;
};

/// Builds a scalar root from leaf vars (one per GradLeaf, same order).
using GraphFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct GradError {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
};

/// Compares the backward pass of `f` against finite differences with step h.
/// With `freeze_trade_off`, CIoU trade-off coefficients are held at their
/// unperturbed values.
GradError max_relative_error(const GraphFn& f, const std::vector<GradLeaf>& leaves,
                             double tolerance, double h = kGradcheckStep,
                             bool freeze_trade_off = false);

struct GradcheckEntry {
  std::string suite;  // autodiff, geometry, loss, model
  std::string op;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  bool passed() const {
    return max_rel_error <= tolerance &&
           static_cast<double>(kinks) <= kMaxKinkFraction * static_cast<double>(checked);
  }
};

/// Runs every suite with inputs drawn from `seed`.
std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed = 0);

}  // namespace hdet
