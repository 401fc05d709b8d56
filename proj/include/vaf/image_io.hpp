#pragma once

#include <filesystem>

#include "vaf/image.hpp"

namespace vaf {

// Pixel values are mapped between [0, 1] and the integer range of the file
// (0..255 or 0..65535). Values outside [0, 1] are clamped on write.

void write_pgm(const std::filesystem::path& path, const Image& img, int bit_depth = 8);
Image read_pgm(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 8);
Image read_png(const std::filesystem::path& path);

/// Dispatches on extension: .pgm or .png.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img, int bit_depth = 8);

/// Whitespace-separated text matrix, one row per line, full precision.
void write_text_matrix(const std::filesystem::path& path, const Image& img);

}  // namespace vaf
