#include <algorithm>
#include <cmath>

#include "hdet/data.hpp"
#include "hdet/error.hpp"
#include "hdet/rng.hpp"

namespace hdet {

namespace {

constexpr std::uint8_t kFill = 114;

struct Rect {
  double x1, y1, x2, y2;
  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
};

Rect intersect(const Rect& a, const Rect& b) {
  return {std::max(a.x1, b.x1), std::max(a.y1, b.y1), std::min(a.x2, b.x2), std::min(a.y2, b.y2)};
}

}  // namespace

MosaicLayout random_mosaic_layout(std::size_t out_size, std::uint64_t seed) {
  Rng rng(seed);
  MosaicLayout l;
  const auto half = out_size / 2;
  l.junction_x = half + rng.below(out_size + 1);
  l.junction_y = half + rng.below(out_size + 1);
  for (double& s : l.scales) s = rng.uniform(0.5, 1.5);
  l.crop_x = rng.below(out_size + 1);
  l.crop_y = rng.below(out_size + 1);
  return l;
}

LabeledImage mosaic(const std::vector<LabeledImage>& four, std::size_t out_size,
                    const MosaicLayout& layout) {
  if (four.size() != 4)
    throw ValidationError("mosaic needs exactly 4 images, got " + std::to_string(four.size()));
  const std::size_t canvas_size = 2 * out_size;
  if (layout.junction_x > canvas_size || layout.junction_y > canvas_size ||
      layout.crop_x > out_size || layout.crop_y > out_size)
    throw ValidationError("mosaic layout outside the canvas");
  Image canvas(canvas_size, canvas_size, kFill);
  const auto xc = static_cast<long>(layout.junction_x);
  const auto yc = static_cast<long>(layout.junction_y);
  const auto cs = static_cast<long>(canvas_size);
  const Rect crop{static_cast<double>(layout.crop_x), static_cast<double>(layout.crop_y),
                  static_cast<double>(layout.crop_x + out_size),
                  static_cast<double>(layout.crop_y + out_size)};

  std::vector<LabeledBox> labels;
  for (std::size_t q = 0; q < 4; ++q) {
    const LabeledImage& src = four[q];
    if (src.image.width == 0 || src.image.height == 0)
      throw ValidationError("mosaic source " + std::to_string(q) + " is empty");
    const double s = layout.scales[q];
    const auto sw = std::max<long>(1, std::lround(static_cast<double>(src.image.width) * s));
    const auto sh = std::max<long>(1, std::lround(static_cast<double>(src.image.height) * s));
    const Image scaled = (static_cast<std::size_t>(sw) == src.image.width &&
                          static_cast<std::size_t>(sh) == src.image.height)
                             ? src.image
                             : resize_bilinear(src.image, static_cast<std::size_t>(sw),
                                               static_cast<std::size_t>(sh));
    const bool right = q == 1 || q == 3, bottom = q == 2 || q == 3;
    const long px = right ? xc : xc - sw;
    const long py = bottom ? yc : yc - sh;
    const Rect quadrant{right ? static_cast<double>(xc) : 0.0, bottom ? static_cast<double>(yc) : 0.0,
                        right ? static_cast<double>(cs) : static_cast<double>(xc),
                        bottom ? static_cast<double>(cs) : static_cast<double>(yc)};
    const Rect placed{static_cast<double>(px), static_cast<double>(py),
                      static_cast<double>(px + sw), static_cast<double>(py + sh)};
    const Rect visible = intersect(placed, quadrant);
    if (visible.w() <= 0.0 || visible.h() <= 0.0) continue;

    for (auto y = static_cast<long>(visible.y1); y < static_cast<long>(visible.y2); ++y)
      for (auto x = static_cast<long>(visible.x1); x < static_cast<long>(visible.x2); ++x) {
        const std::uint8_t* from =
            scaled.at(static_cast<std::size_t>(x - px), static_cast<std::size_t>(y - py));
        std::copy_n(from, 3, canvas.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)));
      }

    for (const auto& l : src.labels) {
      const Rect box{placed.x1 + l.box.x1() * static_cast<double>(sw),
                     placed.y1 + l.box.y1() * static_cast<double>(sh),
                     placed.x1 + l.box.x2() * static_cast<double>(sw),
                     placed.y1 + l.box.y2() * static_cast<double>(sh)};
      const Rect on_canvas = intersect(box, visible);
      if (on_canvas.w() < kMosaicMinBoxPx || on_canvas.h() < kMosaicMinBoxPx) continue;
      const Rect cropped = intersect(on_canvas, crop);
      if (cropped.w() < kMosaicMinBoxPx || cropped.h() < kMosaicMinBoxPx) continue;
      const double n = static_cast<double>(out_size);
      labels.push_back({l.cls, BBox::from_corners((cropped.x1 - crop.x1) / n, (cropped.y1 - crop.y1) / n,
                                                  (cropped.x2 - crop.x1) / n, (cropped.y2 - crop.y1) / n)});
    }
  }

  LabeledImage out;
  out.image = Image(out_size, out_size);
  for (std::size_t y = 0; y < out_size; ++y)
    for (std::size_t x = 0; x < out_size; ++x)
      std::copy_n(canvas.at(x + layout.crop_x, y + layout.crop_y), 3, out.image.at(x, y));
  out.labels = std::move(labels);
  return out;
}

LabeledImage mosaic(const std::vector<LabeledImage>& four, std::size_t out_size,
                    std::uint64_t seed) {
  return mosaic(four, out_size, random_mosaic_layout(out_size, seed));
}

}  // namespace hdet
