#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace hdet {

/// Interleaved 8-bit RGB raster, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t* at(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const { return &pixels[(y * width + x) * 3]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary P6, maxval 255.
void write_ppm(const Image& img, const std::filesystem::path& path);
/// Throws ValidationError on a malformed or truncated file.
Image read_ppm(const std::filesystem::path& path);

/// Bilinear resize (pixel-center aligned).
Image resize_bilinear(const Image& src, std::size_t width, std::size_t height);

/// Planar [3, H, W] doubles in [0, 1].
std::vector<double> to_planar(const Image& img);

}  // namespace hdet
