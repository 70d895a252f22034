// Copyright 2026 The GDB Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Image containers and the pixel plumbing shared by every other module:
// file I/O (PNG, binary PGM/PPM), grayscale conversion, bilinear resizing,
// cropping, pasting and mirror padding.
//
// RasterImage keeps real values in [0,1] in planar order (all of channel 0,
// then channel 1, ...). Quantization to 8 bits happens only in load/save.
// BinaryMap holds 1 for text and 0 for background.

#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "gdb/error.hpp"

namespace gdb {

class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, float fill = 0.0f)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 0 || height < 0) throw ArgumentError("negative image size");
    if (channels != 1 && channels != 3) throw ArgumentError("channels must be 1 or 3");
  }
  RasterImage(int width, int height, int channels, std::vector<float> planar)
      : RasterImage(width, height, channels) {
    if (planar.size() != data_.size()) throw ArgumentError("pixel buffer length does not match dimensions");
    data_ = std::move(planar);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t area() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[(c * static_cast<std::size_t>(height_) + y) * width_ + x]; }
  float at(int c, int y, int x) const { return data_[(c * static_cast<std::size_t>(height_) + y) * width_ + x]; }
  float& at(int y, int x) { return at(0, y, x); }
  float at(int y, int x) const { return at(0, y, x); }

  std::span<float> plane(int c) { return {data_.data() + c * area(), area()}; }
  std::span<const float> plane(int c) const { return {data_.data() + c * area(), area()}; }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  RasterImage blank_like(int width, int height) const { return RasterImage(width, height, channels_); }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<float> data_;
};

class BinaryMap {
 public:
  BinaryMap() = default;
  BinaryMap(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {
    if (width < 0 || height < 0) throw ArgumentError("negative image size");
  }
  BinaryMap(int width, int height, std::vector<std::uint8_t> values) : BinaryMap(width, height) {
    if (values.size() != data_.size()) throw ArgumentError("pixel buffer length does not match dimensions");
    for (std::size_t i = 0; i < values.size(); ++i) data_[i] = values[i] ? 1 : 0;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return 1; }
  std::size_t area() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& at(int /*c*/, int y, int x) { return at(y, x); }
  std::uint8_t at(int /*c*/, int y, int x) const { return at(y, x); }

  std::vector<std::uint8_t>& data() { return data_; }
  const std::vector<std::uint8_t>& data() const { return data_; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), 1)); }

  BinaryMap blank_like(int width, int height) const { return BinaryMap(width, height); }

  friend bool operator==(const BinaryMap&, const BinaryMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

inline RasterImage to_raster(const BinaryMap& map) {
  RasterImage out(map.width(), map.height(), 1);
  std::transform(map.data().begin(), map.data().end(), out.data().begin(),
                 [](std::uint8_t v) { return static_cast<float>(v); });
  return out;
}

// Values strictly above `level` become text.
inline BinaryMap threshold(const RasterImage& img, float level = 0.5f) {
  BinaryMap out(img.width(), img.height());
  auto plane = img.plane(0);
  for (std::size_t i = 0; i < plane.size(); ++i) out.data()[i] = plane[i] > level ? 1 : 0;
  return out;
}

// Mirror index without repeating the edge sample; valid for any i and n >= 1.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

inline std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// ---------------------------------------------------------------------------
// geometry

template <class Image>
Image crop(const Image& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > img.width() || y + h > img.height())
    throw ArgumentError("crop rectangle outside image");
  Image out = img.blank_like(w, h);
  for (int c = 0; c < img.channels(); ++c)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) out.at(c, r, q) = img.at(c, y + r, x + q);
  return out;
}

template <class Image>
void paste(Image& dst, const Image& src, int x, int y) {
  if (src.channels() != dst.channels()) throw ArgumentError("paste channel mismatch");
  if (x < 0 || y < 0 || x + src.width() > dst.width() || y + src.height() > dst.height())
    throw ArgumentError("paste rectangle outside image");
  for (int c = 0; c < src.channels(); ++c)
    for (int r = 0; r < src.height(); ++r)
      for (int q = 0; q < src.width(); ++q) dst.at(c, y + r, x + q) = src.at(c, r, q);
}

// Reflect padding that tolerates pads larger than the image by mirroring
// repeatedly. Tiling needs this for documents smaller than one patch.
template <class Image>
Image pad_reflect_any(const Image& img, int left, int right, int top, int bottom) {
  if (left < 0 || right < 0 || top < 0 || bottom < 0) throw ArgumentError("negative padding");
  if (img.empty()) throw ArgumentError("cannot pad an empty image");
  const int w = img.width() + left + right;
  const int h = img.height() + top + bottom;
  Image out = img.blank_like(w, h);
  for (int c = 0; c < img.channels(); ++c)
    for (int r = 0; r < h; ++r) {
      const int sy = reflect_index(r - top, img.height());
      for (int q = 0; q < w; ++q) out.at(c, r, q) = img.at(c, sy, reflect_index(q - left, img.width()));
    }
  return out;
}

template <class Image>
Image pad_reflect(const Image& img, int left, int right, int top, int bottom) {
  if (left >= img.width() || right >= img.width() || top >= img.height() || bottom >= img.height())
    throw ArgumentError("reflect pad must be smaller than the image dimension");
  return pad_reflect_any(img, left, right, top, bottom);
}

// ---------------------------------------------------------------------------
// color and resampling

inline RasterImage to_grayscale(const RasterImage& img) {
  if (img.channels() == 1) return img;
  RasterImage out(img.width(), img.height(), 1);
  auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto y = out.plane(0);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = std::clamp(0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i], 0.0f, 1.0f);
  return out;
}

inline RasterImage to_rgb(const RasterImage& img) {
  if (img.channels() == 3) return img;
  RasterImage out(img.width(), img.height(), 3);
  for (int c = 0; c < 3; ++c) std::copy(img.plane(0).begin(), img.plane(0).end(), out.plane(c).begin());
  return out;
}

namespace detail {

struct LinearTap {
  int lo;
  int hi;
  float frac;
};

// Half-pixel-center mapping: src = (dst + 0.5) * in/out - 0.5, clamped.
inline std::vector<LinearTap> bilinear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    int lo = static_cast<int>(std::floor(s));
    int hi = std::min(lo + 1, in - 1);
    taps[d] = {lo, hi, static_cast<float>(s - lo)};
  }
  return taps;
}

}  // namespace detail

inline RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ArgumentError("resize target must be at least 1x1");
  if (img.empty()) throw ArgumentError("cannot resize an empty image");
  if (out_w == img.width() && out_h == img.height()) return img;
  const auto tx = detail::bilinear_taps(img.width(), out_w);
  const auto ty = detail::bilinear_taps(img.height(), out_h);
  RasterImage out(out_w, out_h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out_h; ++y) {
      const auto& vy = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const auto& vx = tx[x];
        const float top = img.at(c, vy.lo, vx.lo) * (1 - vx.frac) + img.at(c, vy.lo, vx.hi) * vx.frac;
        const float bot = img.at(c, vy.hi, vx.lo) * (1 - vx.frac) + img.at(c, vy.hi, vx.hi) * vx.frac;
        out.at(c, y, x) = std::clamp(top * (1 - vy.frac) + bot * vy.frac, 0.0f, 1.0f);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// file I/O

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline RasterImage decode_pnm(const std::vector<unsigned char>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("corrupt PNM header in " + name);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1L << 24)) throw FormatError("PNM header value out of range in " + name);
    }
    return v;
  };
  const int channels = bytes[1] == '5' ? 1 : 3;
  const long w = next_token(), h = next_token(), maxval = next_token();
  if (w <= 0 || h <= 0 || maxval <= 0) throw FormatError("corrupt PNM header in " + name);
  if (maxval > 255) throw FormatError("16-bit PNM is not supported: " + name);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("corrupt PNM header in " + name);
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - pos < need) throw FormatError("truncated PNM pixel data in " + name);
  RasterImage img(static_cast<int>(w), static_cast<int>(h), channels);
  const std::size_t area = img.area();
  for (std::size_t i = 0; i < area; ++i)
    for (int c = 0; c < channels; ++c)
      img.data()[c * area + i] = static_cast<float>(bytes[pos + i * channels + c]) / static_cast<float>(maxval);
  return img;
}

inline RasterImage decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw FormatError("corrupt PNG " + path.string() + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("corrupt PNG " + path.string() + ": " + msg);
  }
  const int channels = color ? 3 : 1;
  RasterImage img(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  const std::size_t area = img.area();
  for (std::size_t i = 0; i < area; ++i)
    for (int c = 0; c < channels; ++c) img.data()[c * area + i] = buffer[i * channels + c] / 255.0f;
  return img;
}

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext;
}

inline void write_bytes(const std::filesystem::path& path, int width, int height, int channels,
                        const std::vector<png_byte>& interleaved) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, interleaved.data(), 0, nullptr))
      throw IoError("cannot write " + path.string() + ": " + image.message);
    return;
  }
  if (ext != ".pgm" && ext != ".ppm" && ext != ".pnm") throw FormatError("unsupported output extension: " + path.string());
  if (ext == ".pgm" && channels != 1) throw FormatError("PGM output requires a single-channel image");
  if (ext == ".ppm" && channels != 3) throw FormatError("PPM output requires a 3-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (channels == 1 ? "P5" : "P6") << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(interleaved.data()), static_cast<std::streamsize>(interleaved.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline RasterImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  const auto bytes = detail::read_file(path);
  static constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) return detail::decode_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
    return detail::decode_pnm(bytes, path.string());
  throw FormatError("unsupported image format: " + path.string());
}

inline void save_image(const RasterImage& img, const std::filesystem::path& path) {
  std::vector<png_byte> bytes(img.area() * img.channels());
  for (std::size_t i = 0; i < img.area(); ++i)
    for (int c = 0; c < img.channels(); ++c) bytes[i * img.channels() + c] = quantize(img.data()[c * img.area() + i]);
  detail::write_bytes(path, img.width(), img.height(), img.channels(), bytes);
}

// Ground-truth convention: text is black (0), background white (255).
inline void save_image(const BinaryMap& map, const std::filesystem::path& path) {
  std::vector<png_byte> bytes(map.area());
  std::transform(map.data().begin(), map.data().end(), bytes.begin(),
                 [](std::uint8_t v) -> png_byte { return v ? 0 : 255; });
  detail::write_bytes(path, map.width(), map.height(), 1, bytes);
}

// Bytes below 128 (dark) are text.
inline BinaryMap load_binary(const std::filesystem::path& path) {
  const RasterImage img = to_grayscale(load_image(path));
  BinaryMap out(img.width(), img.height());
  for (std::size_t i = 0; i < img.area(); ++i) out.data()[i] = quantize(img.data()[i]) < 128 ? 1 : 0;
  return out;
}

}  // namespace gdb
