#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vaf {

/// Single-channel image of doubles, row-major. Intensities are nominally in
/// [0, 1] but intermediate results are allowed to leave that range.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);
  Image(int width, int height, std::vector<double> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  double& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<double> pixels() noexcept { return pixels_; }
  std::span<const double> pixels() const noexcept { return pixels_; }
  double* data() noexcept { return pixels_.data(); }
  const double* data() const noexcept { return pixels_.data(); }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> pixels_;
};

Image& operator+=(Image& lhs, const Image& rhs);
Image operator*(double scale, const Image& img);

double mean(const Image& img);
Image clamp01(Image img);

/// Copy of the w x h window whose top-left corner is (x0, y0).
Image crop(const Image& img, int x0, int y0, int w, int h);

/// Counter-clockwise rotation by quarter_turns * 90 degrees.
Image rotate90(const Image& img, int quarter_turns);

/// Half-sample symmetric padding (edge pixel repeated), as used by the
/// reflect boundary of convolve2d and by inference padding.
Image pad_reflect(const Image& img, int left, int top, int right, int bottom);

/// Index into [0, n) under half-sample symmetric reflection.
int reflect_index(int i, int n) noexcept;

}  // namespace vaf
