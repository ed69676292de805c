// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary PPM (P6) / PGM (P5) reader and writer, maxval 255, bit-exact.
// Images are 3 x H x W float tensors in [0,1]; save quantizes round(v*255),
// load de-quantizes v/255, so a round trip moves a channel by at most 1/510.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "genegan/errors.hpp"
#include "genegan/tensor.hpp"

namespace genegan {

namespace detail_pnm {

struct Reader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;
  const std::string& path;

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path + ": " + what + " at byte offset " + std::to_string(pos));
  }

  int peek() const { return pos < bytes.size() ? bytes[pos] : -1; }
  int get() { return pos < bytes.size() ? bytes[pos++] : -1; }

  void skip_space_and_comments() {
    while (true) {
      int c = peek();
      if (c == '#') {
        while (c != '\n' && c != -1) c = get();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        get();
      } else {
        return;
      }
    }
  }

  std::int64_t read_int(const char* field) {
    skip_space_and_comments();
    if (peek() < '0' || peek() > '9') fail(std::string("expected integer for ") + field);
    std::int64_t v = 0;
    while (peek() >= '0' && peek() <= '9') {
      v = v * 10 + (get() - '0');
      if (v > (1 << 24)) fail(std::string("unreasonable value for ") + field);
    }
    return v;
  }
};

}  // namespace detail_pnm

// Loads a P6 (color) or P5 (grayscale, replicated to 3 channels) file.
inline Tensor<float> load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(path + ": cannot open file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail_pnm::Reader r{bytes, 0, path};

  if (r.get() != 'P') r.fail("not a PNM file (bad magic)");
  const int kind = r.get();
  if (kind != '5' && kind != '6') r.fail("unsupported PNM type (want P5 or P6)");
  const std::int64_t w = r.read_int("width");
  const std::int64_t h = r.read_int("height");
  const std::int64_t maxval = r.read_int("maxval");
  if (w <= 0 || h <= 0) r.fail("non-positive dimensions");
  if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval) + " (want 255)");
  // exactly one whitespace byte separates the header from the payload
  const int sep = r.get();
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') r.fail("missing whitespace after maxval");

  const std::int64_t channels = kind == '6' ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(w * h * channels);
  if (bytes.size() - r.pos < need)
    throw DataError(path + ": truncated payload, need " + std::to_string(need) + " bytes, have " +
                    std::to_string(bytes.size() - r.pos) + " at byte offset " + std::to_string(r.pos));

  Tensor<float> img({3, h, w});
  const unsigned char* p = bytes.data() + r.pos;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c) {
        const unsigned char byte = kind == '6' ? p[(y * w + x) * 3 + c] : p[y * w + x];
        img.data[static_cast<std::size_t>((c * h + y) * w + x)] = static_cast<float>(byte) / 255.0f;
      }
  return img;
}

inline void save_ppm(const std::string& path, const Tensor<float>& img) {
  if (img.rank() != 3 || img.shape[0] != 3)
    throw std::invalid_argument("save_ppm: expected 3 x H x W image, got " + shape_str(img.shape));
  const std::int64_t h = img.shape[1], w = img.shape[2];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(path + ": cannot open file for writing");
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> payload(static_cast<std::size_t>(w * h * 3));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c) {
        float v = img.data[static_cast<std::size_t>((c * h + y) * w + x)];
        if (v < 0.0f) v = 0.0f;
        if (v > 1.0f) v = 1.0f;
        payload[static_cast<std::size_t>((y * w + x) * 3 + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!f) throw DataError(path + ": write failed");
}

// ---- montage helpers (pure concatenation of panels) ----

inline Tensor<float> hconcat_images(const std::vector<Tensor<float>>& panels) {
  if (panels.empty()) throw std::invalid_argument("hconcat_images: no panels");
  const std::int64_t h = panels[0].shape[1];
  std::int64_t total_w = 0;
  for (const auto& p : panels) {
    if (p.rank() != 3 || p.shape[0] != 3 || p.shape[1] != h)
      throw std::invalid_argument("hconcat_images: panel shape mismatch");
    total_w += p.shape[2];
  }
  Tensor<float> out({3, h, total_w});
  std::int64_t x0 = 0;
  for (const auto& p : panels) {
    const std::int64_t w = p.shape[2];
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          out.data[static_cast<std::size_t>((c * h + y) * total_w + x0 + x)] =
              p.data[static_cast<std::size_t>((c * h + y) * w + x)];
    x0 += w;
  }
  return out;
}

inline Tensor<float> vconcat_images(const std::vector<Tensor<float>>& rows) {
  if (rows.empty()) throw std::invalid_argument("vconcat_images: no rows");
  const std::int64_t w = rows[0].shape[2];
  std::int64_t total_h = 0;
  for (const auto& r : rows) {
    if (r.rank() != 3 || r.shape[0] != 3 || r.shape[2] != w)
      throw std::invalid_argument("vconcat_images: row shape mismatch");
    total_h += r.shape[1];
  }
  Tensor<float> out({3, total_h, w});
  std::int64_t y0 = 0;
  for (const auto& r : rows) {
    const std::int64_t h = r.shape[1];
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          out.data[static_cast<std::size_t>((c * total_h + y0 + y) * w + x)] =
              r.data[static_cast<std::size_t>((c * h + y) * w + x)];
    y0 += h;
  }
  return out;
}

// Center-crop to square, then bilinear-resize to size x size.
inline Tensor<float> center_crop_resize(const Tensor<float>& img, std::int64_t size) {
  const std::int64_t h = img.shape[1], w = img.shape[2];
  const std::int64_t side = h < w ? h : w;
  const std::int64_t y0 = (h - side) / 2, x0 = (w - side) / 2;
  Tensor<float> out({3, size, size});
  const double scale = static_cast<double>(side) / static_cast<double>(size);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        const double sy = (static_cast<double>(y) + 0.5) * scale - 0.5;
        const double sx = (static_cast<double>(x) + 0.5) * scale - 0.5;
        const std::int64_t iy = static_cast<std::int64_t>(std::floor(sy));
        const std::int64_t ix = static_cast<std::int64_t>(std::floor(sx));
        const double fy = sy - static_cast<double>(iy);
        const double fx = sx - static_cast<double>(ix);
        auto sample = [&](std::int64_t yy, std::int64_t xx) {
          yy = yy < 0 ? 0 : (yy >= side ? side - 1 : yy);
          xx = xx < 0 ? 0 : (xx >= side ? side - 1 : xx);
          return static_cast<double>(img.data[static_cast<std::size_t>((c * h + y0 + yy) * w + x0 + xx)]);
        };
        const double v = (1 - fy) * ((1 - fx) * sample(iy, ix) + fx * sample(iy, ix + 1)) +
                         fy * ((1 - fx) * sample(iy + 1, ix) + fx * sample(iy + 1, ix + 1));
        out.data[static_cast<std::size_t>((c * size + y) * size + x)] = static_cast<float>(v);
      }
  return out;
}

}  // namespace genegan
