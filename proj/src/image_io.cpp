#include "vaf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>

#include "vaf/error.hpp"

namespace vaf {
namespace {

unsigned quantize(double v, unsigned maxval) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned>(std::lround(c * maxval));
}

void check_depth(int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw DomainError("bit depth must be 8 or 16, got " + std::to_string(bit_depth));
  }
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
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

int parse_int(const std::string& tok, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("malformed PGM header in " + path.string());
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_pgm(const std::filesystem::path& path, const Image& img, int bit_depth) {
  check_depth(bit_depth);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const unsigned maxval = bit_depth == 8 ? 255u : 65535u;
  out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
  std::string buf;
  buf.reserve(img.size() * (bit_depth / 8));
  for (double v : img.pixels()) {
    unsigned q = quantize(v, maxval);
    if (bit_depth == 16) buf.push_back(static_cast<char>(q >> 8));
    buf.push_back(static_cast<char>(q & 0xff));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P2") throw FormatError(path.string() + " is not a PGM file");
  const int w = parse_int(next_token(in), path);
  const int h = parse_int(next_token(in), path);
  const int maxval = parse_int(next_token(in), path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw FormatError("invalid PGM dimensions in " + path.string());
  }
  Image img(w, h);
  auto px = img.pixels();
  if (magic == "P2") {
    for (double& v : px) {
      std::string tok = next_token(in);
      if (tok.empty()) throw FormatError("truncated PGM " + path.string());
      v = parse_int(tok, path) / static_cast<double>(maxval);
    }
    return img;
  }
  const int bytes = maxval < 256 ? 1 : 2;
  std::string buf(px.size() * bytes, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw FormatError("truncated PGM " + path.string());
  }
  for (std::size_t i = 0; i < px.size(); ++i) {
    unsigned q = static_cast<unsigned char>(buf[i * bytes]);
    if (bytes == 2) q = (q << 8) | static_cast<unsigned char>(buf[i * 2 + 1]);
    px[i] = q / static_cast<double>(maxval);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img, int bit_depth) {
  check_depth(bit_depth);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  const unsigned maxval = bit_depth == 8 ? 255u : 65535u;
  const std::size_t stride = static_cast<std::size_t>(img.width()) * (bit_depth / 8);
  std::vector<unsigned char> rows(stride * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      unsigned q = quantize(img.at(x, y), maxval);
      if (bit_depth == 8) {
        rows[y * stride + x] = static_cast<unsigned char>(q);
      } else {
        rows[y * stride + 2 * x] = static_cast<unsigned char>(q >> 8);
        rows[y * stride + 2 * x + 1] = static_cast<unsigned char>(q & 0xff);
      }
    }
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) png_write_row(png, rows.data() + y * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<unsigned char> rows;
  png_uint_32 w = 0;
  png_uint_32 h = 0;
  int depth = 0;
  std::size_t stride = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  // Color inputs are scored on luma.
  if (color & PNG_COLOR_MASK_COLOR || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  depth = png_get_bit_depth(png, info);
  stride = png_get_rowbytes(png, info);
  rows.resize(stride * h);
  for (png_uint_32 y = 0; y < h; ++y) png_read_row(png, rows.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(w), static_cast<int>(h));
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  for (png_uint_32 y = 0; y < h; ++y) {
    for (png_uint_32 x = 0; x < w; ++x) {
      unsigned q = depth == 16 ? (rows[y * stride + 2 * x] << 8) | rows[y * stride + 2 * x + 1]
                               : rows[y * stride + x];
      img.at(static_cast<int>(x), static_cast<int>(y)) = q / maxval;
    }
  }
  return img;
}

Image read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png(path);
  return read_pgm(path);
}

void write_image(const std::filesystem::path& path, const Image& img, int bit_depth) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") {
    write_png(path, img, bit_depth);
  } else {
    write_pgm(path, img, bit_depth);
  }
}

void write_text_matrix(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (x) out << ' ';
      out << img.at(x, y);
    }
    out << '\n';
  }
}

}  // namespace vaf
