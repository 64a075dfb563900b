// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace cellseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(double v) {
  double scaled = std::lround(v * 255.0);
  if (scaled < 0.0) scaled = 0.0;
  if (scaled > 255.0) scaled = 255.0;
  return static_cast<std::uint8_t>(scaled);
}

void write_png_8bit(const std::string& path, int height, int width, int channels,
                    const std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failed for " + path);
  }
  png_init_io(png, fp.get());
  // Fixed compression settings keep regeneration byte-identical.
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, width, height, 8, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_png_8bit(const std::string& path, int& height, int& width, int& channels,
                   std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read failed (not a PNG?): " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  // Normalize everything to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  height = static_cast<int>(png_get_image_height(png, info));
  width = static_cast<int>(png_get_image_width(png, info));
  channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG channel count in " + path);
  }
  std::size_t stride = static_cast<std::size_t>(width) * channels;
  bytes.resize(static_cast<std::size_t>(height) * stride);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

void put_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("truncated raster file: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_mask_png(const std::string& path, const BinaryMask& mask) {
  mask.validate();
  std::vector<std::uint8_t> bytes(mask.data.size());
  for (std::size_t i = 0; i < mask.data.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  write_png_8bit(path, mask.height, mask.width, 1, bytes);
}

BinaryMask read_mask_png(const std::string& path) {
  int h, w, c;
  std::vector<std::uint8_t> bytes;
  read_png_8bit(path, h, w, c, bytes);
  if (c != 1) throw IoError("mask PNG must be grayscale: " + path);
  BinaryMask mask(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.data[i] = bytes[i] >= 128 ? 1 : 0;
  return mask;
}

void write_image_png(const std::string& path, const MultiChannelImage& image) {
  image.validate();
  require(image.channels == 1 || image.channels == 3, "PNG output supports 1 or 3 channels");
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < image.data.size(); ++i) bytes[i] = to_byte(image.data[i]);
  write_png_8bit(path, image.height, image.width, image.channels, bytes);
}

MultiChannelImage read_image_png(const std::string& path) {
  int h, w, c;
  std::vector<std::uint8_t> bytes;
  read_png_8bit(path, h, w, c, bytes);
  MultiChannelImage image(h, w, c);
  for (std::size_t i = 0; i < bytes.size(); ++i) image.data[i] = bytes[i] / 255.0;
  return image;
}

void write_raster_csk1(const std::string& path, const MultiChannelImage& image) {
  require(image.height > 0 && image.width > 0 && image.channels > 0, "raster dimensions must be positive");
  require(image.data.size() == static_cast<std::size_t>(image.height) * image.width * image.channels,
          "raster data length must equal H*W*C");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("CSK1", 4);
  put_u32le(os, static_cast<std::uint32_t>(image.height));
  put_u32le(os, static_cast<std::uint32_t>(image.width));
  put_u32le(os, static_cast<std::uint32_t>(image.channels));
  for (double v : image.data) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32le(os, bits);
  }
  if (!os) throw IoError("write failed: " + path);
}

MultiChannelImage read_raster_csk1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CSK1", 4) != 0) throw IoError("bad raster magic in " + path);
  std::uint32_t h = get_u32le(is, path);
  std::uint32_t w = get_u32le(is, path);
  std::uint32_t c = get_u32le(is, path);
  if (h == 0 || w == 0 || c == 0 || h > (1u << 20) || w > (1u << 20) || c > 64)
    throw IoError("implausible raster dimensions in " + path);
  MultiChannelImage image;
  image.height = static_cast<int>(h);
  image.width = static_cast<int>(w);
  image.channels = static_cast<int>(c);
  image.data.resize(static_cast<std::size_t>(h) * w * c);
  for (double& v : image.data) {
    std::uint32_t bits = get_u32le(is, path);
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<double>(f);
  }
  return image;
}

MultiChannelImage read_raster_any(const std::string& path) {
  if (ends_with(path, ".png") || ends_with(path, ".PNG")) return read_image_png(path);
  return read_raster_csk1(path);
}

}  // namespace cellseg
