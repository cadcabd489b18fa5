#pragma once

/**
 * @file image_io.hpp
 * @brief 8-bit PNG (display) and 32-bit float PFM (metrics) image files.
 *
 * PNG support needs libpng; define ABERFORGE_NO_PNG to build without it.
 */

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#ifndef ABERFORGE_NO_PNG
#include <png.h>
#endif

#include "aberforge/binary_io.hpp"
#include "aberforge/error.hpp"
#include "aberforge/simulate.hpp"

namespace aberforge {

// Writes a colour PFM ("PF", little-endian, rows stored bottom to top).
inline void write_pfm(const std::string& path, const ImageBuffer& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) binary::write_f32(out, img.at(y, x, c));
    }
  }
}

inline ImageBuffer read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (!in || (magic != "PF" && magic != "Pf") || w <= 0 || h <= 0) throw FormatError("'" + path + "' is not a PFM");
  if (scale > 0.0) throw FormatError("'" + path + "': big-endian PFM is not supported");
  const int channels = magic == "PF" ? 3 : 1;
  ImageBuffer img(h, w);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) img.at(y, x, c) = binary::read_f32(in);
      if (channels == 1) img.at(y, x, 1) = img.at(y, x, 2) = img.at(y, x, 0);
    }
  }
  return img;
}

#ifndef ABERFORGE_NO_PNG

inline void write_png(const std::string& path, const ImageBuffer& img) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw FormatError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng initialisation failed");
  }
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("failed writing PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(img.at(y, x, c)), 0.0, 1.0);
        row[static_cast<std::size_t>(x * 3 + c)] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ImageBuffer read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw FormatError("cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng initialisation failed");
  }
  ImageBuffer img;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("failed reading PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  img = ImageBuffer(h, w);
  row.resize(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(row[static_cast<std::size_t>(x * 3 + c)] / 255.0);
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

#endif

inline bool has_extension(std::string_view path, std::string_view ext) {
  return path.size() >= ext.size() && path.substr(path.size() - ext.size()) == ext;
}

// Picks the format from the file extension (.png or .pfm).
inline void save_image(const std::string& path, const ImageBuffer& img) {
  if (has_extension(path, ".pfm")) return write_pfm(path, img);
#ifndef ABERFORGE_NO_PNG
  if (has_extension(path, ".png")) return write_png(path, img);
#endif
  throw FormatError("unsupported image extension: '" + path + "'");
}

inline ImageBuffer load_image(const std::string& path) {
  if (has_extension(path, ".pfm")) return read_pfm(path);
#ifndef ABERFORGE_NO_PNG
  if (has_extension(path, ".png")) return read_png(path);
#endif
  throw FormatError("unsupported image extension: '" + path + "'");
}

}  // namespace aberforge
