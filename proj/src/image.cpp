#include "vaf/image.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "vaf/error.hpp"

namespace vaf {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kVersion: return "version";
    case ErrorCode::kArgument: return "argument";
  }
  return "unknown";
}

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw ShapeError("negative image dimensions");
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image::Image(int width, int height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 0 || height < 0 ||
      pixels_.size() != static_cast<std::size_t>(width) * height) {
    throw ShapeError("pixel buffer does not match " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
}

Image& operator+=(Image& lhs, const Image& rhs) {
  if (!lhs.same_shape(rhs)) throw ShapeError("image shapes differ in addition");
  auto dst = lhs.pixels();
  auto src = rhs.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return lhs;
}

Image operator*(double scale, const Image& img) {
  Image out = img;
  for (double& v : out.pixels()) v *= scale;
  return out;
}

double mean(const Image& img) {
  if (img.empty()) return 0.0;
  auto px = img.pixels();
  return std::accumulate(px.begin(), px.end(), 0.0) / static_cast<double>(px.size());
}

Image clamp01(Image img) {
  for (double& v : img.pixels()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Image crop(const Image& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > img.width() || y0 + h > img.height()) {
    throw ShapeError("crop window exceeds image bounds");
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    std::copy_n(img.data() + static_cast<std::size_t>(y0 + y) * img.width() + x0, w,
                out.data() + static_cast<std::size_t>(y) * w);
  }
  return out;
}

Image rotate90(const Image& img, int quarter_turns) {
  int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return img;
  const int w = img.width();
  const int h = img.height();
  Image out = (q == 2) ? Image(w, h) : Image(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = img.at(x, y);
      switch (q) {
        case 1: out.at(y, w - 1 - x) = v; break;
        case 2: out.at(w - 1 - x, h - 1 - y) = v; break;
        case 3: out.at(h - 1 - y, x) = v; break;
      }
    }
  }
  return out;
}

int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

Image pad_reflect(const Image& img, int left, int top, int right, int bottom) {
  if (img.empty()) throw ShapeError("cannot pad an empty image");
  Image out(img.width() + left + right, img.height() + top + bottom);
  for (int y = 0; y < out.height(); ++y) {
    const int sy = reflect_index(y - top, img.height());
    for (int x = 0; x < out.width(); ++x) {
      out.at(x, y) = img.at(reflect_index(x - left, img.width()), sy);
    }
  }
  return out;
}

}  // namespace vaf
