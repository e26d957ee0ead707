#ifndef SMARTPASTE_PNG_IO_HPP
#define SMARTPASTE_PNG_IO_HPP

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace smartpaste {

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Reads an 8-bit PNG into a (h, w, c) tensor with values v/255. Palette and
/// 16-bit inputs are expanded/stripped to 8-bit. Channel count is 1, 3, or 4
/// depending on the file (gray-alpha becomes gray).
inline Tensor read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageIoError("cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("libpng init failed");
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("failed to decode " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  size_t rowbytes = png_get_rowbytes(png, info);
  pixels.assign(rowbytes * h, 0);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({int(h), int(w), channels});
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        out.at(int(y), int(x), c) =
            double(rows[y][x * channels + c]) / 255.0;
  return out;
}

/// Writes a (h, w, c) tensor as an 8-bit PNG, c in {1, 3, 4}. Values are
/// clamped to [0,1] and rounded to v*255. Writes to a temp file then renames
/// so an error never leaves partial output.
inline void write_png(const std::string& path, const Tensor& img) {
  require(img.rank() == 3, "write_png expects a rank-3 image");
  int channels = img.c();
  require(channels == 1 || channels == 3 || channels == 4,
          "write_png supports 1, 3, or 4 channels");

  std::string tmp = path + ".tmp";
  {
    detail::FilePtr fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw ImageIoError("cannot open " + tmp + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    if (!png) throw ImageIoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw ImageIoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw ImageIoError("failed to encode " + path);
    }
    png_init_io(png, fp.get());
    int color = channels == 1   ? PNG_COLOR_TYPE_GRAY
                : channels == 3 ? PNG_COLOR_TYPE_RGB
                                : PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, img.w(), img.h(), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(size_t(img.w()) * channels);
    for (int y = 0; y < img.h(); ++y) {
      for (int x = 0; x < img.w(); ++x)
        for (int c = 0; c < channels; ++c) {
          double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
          row[size_t(x) * channels + c] =
              png_byte(std::lround(v * 255.0));
        }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

/// Grayscale mask load: any input is collapsed to one channel (first channel)
/// and thresholded at 128/255 into {0,1}.
inline Tensor read_mask_png(const std::string& path) {
  Tensor img = read_png(path);
  Tensor mask({img.h(), img.w(), 1});
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x)
      mask.at(y, x, 0) = img.at(y, x, 0) >= 128.0 / 255.0 ? 1.0 : 0.0;
  return mask;
}

}  // namespace smartpaste

#endif  // SMARTPASTE_PNG_IO_HPP
