#pragma once

// Thin libpng wrappers: 8-bit RGB images and 8-bit grayscale masks.

#include <png.h>

#include <cstdio>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "plnet/tensor.hpp"

namespace plnet::pngio {

struct Image8 {
  int height = 0, width = 0, channels = 0;  // channels: 1 or 3
  std::vector<std::uint8_t> pixels;          // row-major, interleaved

  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

// Decodes any PNG color type to 8-bit; gray when want_gray, RGB otherwise.
inline Image8 read_png(const std::string& path, bool want_gray) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ConfigError("cannot open image: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ConfigError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ConfigError("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (want_gray) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  } else {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  Image8 img;
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.channels = want_gray ? 1 : 3;
  img.pixels.resize(static_cast<size_t>(img.height) * img.width * img.channels);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + static_cast<size_t>(y) * img.width * img.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const std::string& path, const Image8& img) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ConfigError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ConfigError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ConfigError("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data()) +
              static_cast<size_t>(y) * img.width * img.channels;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ----------------------------------------------------- tensor conversions ---

inline Tensor<float> to_tensor_rgb(const Image8& img) {
  Tensor<float> t(1, 3, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = img.at(y, x, c) / 255.0f;
    }
  }
  return t;
}

// Mask binarization: pixel value >= 128 counts as foreground.
inline Tensor<float> to_mask_tensor(const Image8& img) {
  Tensor<float> t(1, 1, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) t.at(0, 0, y, x) = img.at(y, x, 0) >= 128 ? 1.0f : 0.0f;
  }
  return t;
}

inline Image8 from_tensor_rgb(const Tensor<float>& t) {
  Image8 img;
  img.height = t.h;
  img.width = t.w;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(t.h) * t.w * 3);
  for (int y = 0; y < t.h; ++y) {
    for (int x = 0; x < t.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = t.at(0, c, y, x);
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        img.pixels[(static_cast<size_t>(y) * t.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

// value = round(255 * v), clamped
inline Image8 from_tensor_gray(const Tensor<float>& t) {
  Image8 img;
  img.height = t.h;
  img.width = t.w;
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(t.h) * t.w);
  for (int y = 0; y < t.h; ++y) {
    for (int x = 0; x < t.w; ++x) {
      float v = t.at(0, 0, y, x);
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      img.pixels[static_cast<size_t>(y) * t.w + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

}  // namespace plnet::pngio
