#include "hdet/model.hpp"

#include <algorithm>
#include <cmath>

#include "hdet/error.hpp"
#include "hdet/rng.hpp"

namespace hdet {

using ad::Shape;
using ad::Var;

void DetectorConfig::validate() const {
  if (image_size == 0 || image_size % 16 != 0)
    throw ValidationError("model.image_size must be a positive multiple of 16");
  for (std::size_t w : widths)
    if (w == 0) throw ValidationError("model.widths must be positive");
  grid.validate();
  if (grid.s != image_size / 16)
    throw ValidationError("grid.s must equal image_size / 16 = " + std::to_string(image_size / 16));
}

DetectorConfig DetectorConfig::make(std::size_t image_size, std::size_t n_fine,
                                    std::vector<Anchor> anchors) {
  DetectorConfig c;
  c.image_size = image_size;
  c.grid.s = image_size / 16;
  c.grid.b = anchors.size();
  c.grid.n_fine = n_fine;
  c.grid.anchors = std::move(anchors);
  c.validate();
  return c;
}

Detector Detector::init(const DetectorConfig& config, std::uint64_t seed) {
  config.validate();
  Detector det;
  det.config = config;
  Rng rng(seed);
  std::size_t in_c = 3;
  auto add_layer = [&](std::size_t index, std::size_t out_c, std::size_t k) {
    const std::size_t fan_in = in_c * k * k;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    NamedTensor w{"conv" + std::to_string(index) + ".weight", Shape{out_c, in_c, k, k}, {}};
    w.data.resize(w.shape.numel());
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    NamedTensor b{"conv" + std::to_string(index) + ".bias", Shape{out_c}, {}};
    b.data.resize(out_c);
    for (double& v : b.data) v = rng.uniform(-bound, bound);
    det.params.push_back(std::move(w));
    det.params.push_back(std::move(b));
    in_c = out_c;
  };
  for (std::size_t i = 0; i < 4; ++i) add_layer(i, config.widths[i], 3);
  const GridSpec& g = config.grid;
  add_layer(4, g.b * g.fields(), 1);
  auto& head_bias = det.params.back().data;
  for (std::size_t a = 0; a < g.b; ++a) head_bias[a * g.fields() + head::tobj] = kObjectnessBiasInit;
  return det;
}

std::size_t Detector::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.data.size();
  return n;
}

Var to_head(const Var& raw, const GridSpec& grid) {
  const std::size_t f = grid.fields(), cells = grid.cells();
  if (raw.shape() != Shape{grid.b * f, grid.s, grid.s})
    throw ShapeError("to_head: raw output " + raw.shape().str() + " does not match grid");
  std::vector<std::size_t> idx(cells * grid.b * f);
  for (std::size_t cell = 0; cell < cells; ++cell)
    for (std::size_t a = 0; a < grid.b; ++a)
      for (std::size_t k = 0; k < f; ++k) idx[(cell * grid.b + a) * f + k] = (a * f + k) * cells + cell;
  return ad::gather(raw, std::move(idx), Shape{cells, grid.b, f});
}

ForwardPass forward_with(ad::Tape& tape, const DetectorConfig& config, std::vector<ad::Var> params,
                         std::span<const double> planar) {
  const std::size_t n = config.image_size;
  if (planar.size() != 3 * n * n)
    throw ValidationError("forward: image has " + std::to_string(planar.size()) +
                          " values, expected 3x" + std::to_string(n) + "x" + std::to_string(n));
  if (params.size() != 10) throw ShapeError("forward: expected 10 parameter tensors");
  ForwardPass out;
  out.params = std::move(params);
  std::vector<double> input(planar.size());
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = (planar[i] - kInputShift) * kInputScale;
  Var x = tape.constant(std::move(input), Shape{3, n, n});
  for (std::size_t i = 0; i < 4; ++i) {
    x = ad::conv2d(x, out.params[2 * i], 1, 1);
    x = ad::add_channel_bias(x, out.params[2 * i + 1]);
    x = ad::maxpool2(ad::relu(x));
  }
  x = ad::conv2d(x, out.params[8], 1, 0);
  out.raw = ad::add_channel_bias(x, out.params[9]);
  out.head = to_head(out.raw, config.grid);
  return out;
}

ForwardPass forward(ad::Tape& tape, const Detector& det, std::span<const double> planar,
                    bool trainable) {
  std::vector<Var> params;
  for (const auto& p : det.params)
    params.push_back(trainable ? tape.parameter(p.data, p.shape) : tape.constant(p.data, p.shape));
  return forward_with(tape, det.config, std::move(params), planar);
}

namespace {
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
double logit(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

std::vector<DecodedPair> decode(std::span<const double> head_values, const GridSpec& grid) {
  const std::size_t f = grid.fields();
  if (head_values.size() != grid.pairs() * f) throw ShapeError("decode: head size mismatch");
  const auto s = static_cast<double>(grid.s);
  std::vector<DecodedPair> out(grid.pairs());
  for (std::size_t cell = 0; cell < grid.cells(); ++cell)
    for (std::size_t a = 0; a < grid.b; ++a) {
      const std::size_t p = cell * grid.b + a;
      const auto t = head_values.subspan(p * f, f);
      DecodedPair& d = out[p];
      const double col = static_cast<double>(cell % grid.s), row = static_cast<double>(cell / grid.s);
      d.box.cx = (2.0 * sigmoid(t[head::tx]) - 0.5 + col) / s;
      d.box.cy = (2.0 * sigmoid(t[head::ty]) - 0.5 + row) / s;
      const double sw = 2.0 * sigmoid(t[head::tw]), sh = 2.0 * sigmoid(t[head::th]);
      // floor keeps extents strictly positive once the sigmoid underflows
      d.box.w = std::max(grid.anchors[a].w * sw * sw, kMinExtent);
      d.box.h = std::max(grid.anchors[a].h * sh * sh, kMinExtent);
      d.objectness = sigmoid(t[head::tobj]);
      d.class_scores.resize(grid.n_fine);
      for (std::size_t c = 0; c < grid.n_fine; ++c) d.class_scores[c] = sigmoid(t[head::cls0 + c]);
    }
  return out;
}

std::array<double, 4> encode(const BBox& box, std::size_t cell, std::size_t anchor,
                             const GridSpec& grid) {
  const auto s = static_cast<double>(grid.s);
  const double col = static_cast<double>(cell % grid.s), row = static_cast<double>(cell / grid.s);
  const double px = (box.cx * s - col + 0.5) / 2.0;
  const double py = (box.cy * s - row + 0.5) / 2.0;
  const double pw = std::sqrt(box.w / grid.anchors[anchor].w) / 2.0;
  const double ph = std::sqrt(box.h / grid.anchors[anchor].h) / 2.0;
  for (double p : {px, py, pw, ph})
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("encode: box not reachable from this cell/anchor");
  return {logit(px), logit(py), logit(pw), logit(ph)};
}

std::vector<ScoredBox> predict_from_head(std::span<const double> head_values, const GridSpec& grid,
                                         double conf_threshold, double nms_iou) {
  std::vector<ScoredBox> cands;
  for (const auto& d : decode(head_values, grid)) {
    const std::size_t cls = argmax(d.class_scores);
    const double score = d.objectness * d.class_scores[cls];
    if (score > conf_threshold) cands.push_back({d.box, cls, score});
  }
  return nms(cands, nms_iou);
}

std::vector<ScoredBox> predict(const Detector& det, const Image& image, double conf_threshold,
                               double nms_iou) {
  if (image.width != det.config.image_size || image.height != det.config.image_size)
    throw ValidationError("predict: image is " + std::to_string(image.width) + "x" +
                          std::to_string(image.height) + ", model expects " +
                          std::to_string(det.config.image_size));
  ad::Tape tape;
  const auto pass = forward(tape, det, to_planar(image), false);
  return predict_from_head(pass.head.value(), det.config.grid, conf_threshold, nms_iou);
}

}  // namespace hdet
