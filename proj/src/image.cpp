#include "hdet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "hdet/error.hpp"

namespace hdet {

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image " + path.string());
  if (token(in) != "P6") throw ValidationError(path.string() + ": not a binary PPM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token(in));
    h = std::stoul(token(in));
    maxval = std::stoul(token(in));
  } catch (const std::exception&) {
    throw ValidationError(path.string() + ": malformed PPM header");
  }
  if (maxval != 255 || w == 0 || h == 0)
    throw ValidationError(path.string() + ": unsupported PPM geometry");
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
    throw ValidationError(path.string() + ": truncated pixel data");
  return img;
}

Image resize_bilinear(const Image& src, std::size_t width, std::size_t height) {
  Image dst(width, height);
  const double sx = static_cast<double>(src.width) / static_cast<double>(width);
  const double sy = static_cast<double>(src.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(src.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(src.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = src.at(x0, y0)[c] * (1.0 - tx) + src.at(x1, y0)[c] * tx;
        const double bot = src.at(x0, y1)[c] * (1.0 - tx) + src.at(x1, y1)[c] * tx;
        dst.at(x, y)[c] = static_cast<std::uint8_t>(std::lround(top * (1.0 - ty) + bot * ty));
      }
    }
  }
  return dst;
}

std::vector<double> to_planar(const Image& img) {
  const std::size_t plane = img.width * img.height;
  std::vector<double> out(3 * plane);
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + p] = img.pixels[p * 3 + c] / 255.0;
  return out;
}

}  // namespace hdet
