#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <png.h>

#include "vio/errors.hpp"
#include "vio/tensor.hpp"

namespace vio {

// 8-bit PNG IO for (channels, height, width) tensors holding values in
// [-0.5, 0.5]. Quantization: byte = round((v + 0.5) * 255), so write followed
// by read is exact on byte-representable values. 1-channel and 3-channel
// images are supported.

namespace detail {

struct PngCloser {
  std::FILE* f = nullptr;
  ~PngCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace detail

inline std::uint8_t pixel_to_byte(double v) {
  double b = std::lround((v + 0.5) * 255.0);
  if (b < 0.0) b = 0.0;
  if (b > 255.0) b = 255.0;
  return static_cast<std::uint8_t>(b);
}

inline double byte_to_pixel(std::uint8_t b) { return b / 255.0 - 0.5; }

inline void write_png(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw DimensionError("write_png: expects (1,H,W) or (3,H,W), got " + shape_str(image.shape()));
  int channels = image.dim(0), h = image.dim(1), w = image.dim(2);

  detail::PngCloser file;
  file.f = std::fopen(path.c_str(), "wb");
  if (!file.f) throw IoError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png info allocation failed");
  }
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(h) * w * channels);
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    row_ptrs[static_cast<std::size_t>(y)] = rows.data() + static_cast<std::size_t>(y) * w * channels;
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        rows[(static_cast<std::size_t>(y) * w + x) * channels + c] =
            pixel_to_byte(image.data()[(static_cast<std::size_t>(c) * h + y) * w + x]);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Tensor read_png(const std::string& path) {
  detail::PngCloser file;
  file.f = std::fopen(path.c_str(), "rb");
  if (!file.f) throw IoError("cannot open: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, file.f) != 8 || png_sig_cmp(header, 0, 8))
    throw FormatError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png info allocation failed");
  }
  std::vector<std::uint8_t> rows;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png decode failed: " + path);
  }
  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  // Normalize every input to 8-bit gray or RGB.
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_GRAY_ALPHA ||
      png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG channel count in " + path);
  }
  rows.resize(static_cast<std::size_t>(h) * w * static_cast<std::size_t>(channels));
  row_ptrs.resize(static_cast<std::size_t>(h));
  for (png_uint_32 y = 0; y < h; ++y)
    row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * w * static_cast<std::size_t>(channels);
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out = Tensor::zeros({channels, static_cast<int>(h), static_cast<int>(w)});
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        out.data()[(static_cast<std::size_t>(c) * h + y) * w + x] =
            byte_to_pixel(rows[(static_cast<std::size_t>(y) * w + x) * static_cast<std::size_t>(channels) + c]);
  return out;
}

}  // namespace vio
