// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic two-set dataset with known ground-truth factors.
//
// A scene is a gradient background plus an anti-aliased face disc; the object
// is a glasses-like sprite (two lenses and a bridge) composited at a fixed
// canonical eye line, so the two sets are aligned by construction. Rendering
// is a pure function of the specs; the label-0 counterfactual of any label-1
// sample is the same scene rendered without the sprite, and the two differ
// only inside the sprite mask.
//
// All sampling uses SplitMix64 (rng.hpp) with a documented draw order, so a
// dataset is a pure function of (seed, counts, size).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "genegan/errors.hpp"
#include "genegan/image_io.hpp"
#include "genegan/rng.hpp"
#include "genegan/tensor.hpp"

namespace genegan {

struct SceneSpec {
  double bg_hue = 0.5;         // [0,1]
  double gradient_angle = 0;   // radians
  double face_cx = 0;          // [-0.05, 0.05], fraction of image
  double face_cy = 0;          // [-0.05, 0.05]
  double face_radius = 0.35;   // [0.3, 0.4], fraction of image
  double skin_tone = 0.5;      // [0,1]
};

enum class ObjectStyle : int { kRound = 0, kSquare = 1, kShaded = 2 };

struct ObjectSpec {
  bool present = false;
  ObjectStyle style = ObjectStyle::kRound;
  double width = 0.08;     // lens rim thickness, [0.05, 0.12] fraction of image
  double darkness = 0.6;   // [0.2, 1.0]
  double tint = 0.5;       // [0,1]
};

struct Sample {
  Tensor<float> image;  // 3 x H x W in [0,1]
  int label = 0;        // 1 = has object
  std::optional<SceneSpec> scene;
  std::optional<ObjectSpec> object;
};

struct Dataset {
  std::vector<Sample> with_object;
  std::vector<Sample> without_object;
};

namespace sprite {

// canonical geometry, fractions of the image side
constexpr double kEyeLineY = 0.42;
constexpr double kEyeHalfSep = 0.17;    // lens centers at 0.5 +- this
constexpr double kLensRadius = 0.105;   // ring centerline radius
constexpr double kMaxWidth = 0.12;

inline double clamp01(double v) { return v < 0 ? 0 : (v > 1 ? 1 : v); }

// per-pixel sprite opacity in [0,1]; pure function of the object spec
inline double alpha_at(const ObjectSpec& s, std::int64_t size, std::int64_t px, std::int64_t py) {
  const double sz = static_cast<double>(size);
  const double x = (static_cast<double>(px) + 0.5) / sz;
  const double y = (static_cast<double>(py) + 0.5) / sz;
  const double half_w = s.width / 2.0;

  double cov = 0.0;
  for (int side = -1; side <= 1; side += 2) {
    const double cx = 0.5 + side * kEyeHalfSep;
    const double dx = x - cx, dy = y - kEyeLineY;
    double ring_d;  // distance from the ring centerline, style controls the metric
    if (s.style == ObjectStyle::kSquare) {
      ring_d = std::abs(std::max(std::abs(dx), std::abs(dy)) - kLensRadius);
    } else {
      ring_d = std::abs(std::hypot(dx, dy) - kLensRadius);
    }
    const double rim = clamp01((half_w - ring_d) * sz + 0.5);
    double fill = 0.0;
    const double fill_d = (s.style == ObjectStyle::kSquare)
                              ? std::max(std::abs(dx), std::abs(dy))
                              : std::hypot(dx, dy);
    const double fill_cov = clamp01((kLensRadius + half_w - fill_d) * sz + 0.5);
    fill = (s.style == ObjectStyle::kShaded ? 0.85 : 0.30) * fill_cov;
    cov = std::max(cov, std::max(rim, fill));
  }
  // bridge between the inner lens edges
  const double bx0 = 0.5 - (kEyeHalfSep - kLensRadius), bx1 = 0.5 + (kEyeHalfSep - kLensRadius);
  const double by = std::abs(y - kEyeLineY);
  if (x >= bx0 - 0.02 && x <= bx1 + 0.02) {
    const double bridge = clamp01((half_w * 0.7 - by) * sz + 0.5) *
                          clamp01((std::min(x - bx0, bx1 - x) + 0.02) * sz + 0.5);
    cov = std::max(cov, bridge);
  }
  return s.darkness * cov;
}

inline void lens_color(const ObjectSpec& s, double* rgb) {
  rgb[0] = 0.08 + 0.54 * s.tint;
  rgb[1] = 0.10;
  rgb[2] = 0.62 - 0.54 * s.tint;
}

// conservative pixel bounding box of every possible sprite: {y0, y1, x0, x1}, half-open
inline void bbox(std::int64_t size, std::int64_t out[4]) {
  const double reach = kLensRadius + kMaxWidth / 2.0 + 2.0 / static_cast<double>(size);
  const double y0 = kEyeLineY - reach, y1 = kEyeLineY + reach;
  const double x0 = 0.5 - kEyeHalfSep - reach, x1 = 0.5 + kEyeHalfSep + reach;
  out[0] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(y0 * size)));
  out[1] = std::min<std::int64_t>(size, static_cast<std::int64_t>(std::ceil(y1 * size)) + 1);
  out[2] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(x0 * size)));
  out[3] = std::min<std::int64_t>(size, static_cast<std::int64_t>(std::ceil(x1 * size)) + 1);
}

}  // namespace sprite

inline void check_render_size(std::int64_t size) {
  if (size != 16 && size != 32 && size != 64)
    throw std::invalid_argument("render size must be one of {16, 32, 64}, got " + std::to_string(size));
}

// Gradient background + anti-aliased face disc; deterministic pure function
// of the spec, all values in [0,1].
inline Tensor<float> render_scene(const SceneSpec& s, std::int64_t size) {
  check_render_size(size);
  const double sz = static_cast<double>(size);
  const double ca = std::cos(s.gradient_angle), sa = std::sin(s.gradient_angle);
  // simple hue ramp for the background color
  const double hue = s.bg_hue;
  const double base_r = 0.5 + 0.45 * std::cos(2.0 * M_PI * hue);
  const double base_g = 0.5 + 0.45 * std::cos(2.0 * M_PI * (hue - 1.0 / 3.0));
  const double base_b = 0.5 + 0.45 * std::cos(2.0 * M_PI * (hue - 2.0 / 3.0));
  const double skin_r = 0.42 + (0.98 - 0.42) * (1.0 - s.skin_tone);
  const double skin_g = 0.29 + (0.84 - 0.29) * (1.0 - s.skin_tone);
  const double skin_b = 0.21 + (0.70 - 0.21) * (1.0 - s.skin_tone);
  const double fcx = (0.5 + s.face_cx) * sz, fcy = (0.5 + s.face_cy) * sz;
  const double fr = s.face_radius * sz;

  Tensor<float> img({3, size, size});
  for (std::int64_t py = 0; py < size; ++py) {
    for (std::int64_t px = 0; px < size; ++px) {
      const double x = (static_cast<double>(px) + 0.5) / sz;
      const double y = (static_cast<double>(py) + 0.5) / sz;
      const double proj = (x - 0.5) * ca + (y - 0.5) * sa;  // in [-0.707, 0.707]
      const double t = sprite::clamp01(0.5 + proj / 1.5);
      const double v = 0.35 + 0.5 * t;  // gradient brightness
      double r = base_r * v, g = base_g * v, b = base_b * v;
      const double dist = std::hypot(static_cast<double>(px) + 0.5 - fcx, static_cast<double>(py) + 0.5 - fcy);
      const double cov = sprite::clamp01(fr - dist + 0.5);
      r = r + (skin_r - r) * cov;
      g = g + (skin_g - g) * cov;
      b = b + (skin_b - b) * cov;
      img.data[static_cast<std::size_t>((0 * size + py) * size + px)] = static_cast<float>(sprite::clamp01(r));
      img.data[static_cast<std::size_t>((1 * size + py) * size + px)] = static_cast<float>(sprite::clamp01(g));
      img.data[static_cast<std::size_t>((2 * size + py) * size + px)] = static_cast<float>(sprite::clamp01(b));
    }
  }
  return img;
}

// Alpha-composites the glasses sprite over a rendered scene. Pixels with zero
// sprite opacity are left bit-exactly untouched.
inline Tensor<float> composite_object(const Tensor<float>& base, const ObjectSpec& spec) {
  if (!spec.present) throw std::invalid_argument("composite_object: spec.present must be true");
  if (base.rank() != 3 || base.shape[0] != 3 || base.shape[1] != base.shape[2])
    throw std::invalid_argument("composite_object: expected 3 x S x S image, got " + shape_str(base.shape));
  const std::int64_t size = base.shape[1];
  double rgb[3];
  sprite::lens_color(spec, rgb);
  Tensor<float> out = base;
  std::int64_t bb[4];
  sprite::bbox(size, bb);
  for (std::int64_t py = bb[0]; py < bb[1]; ++py)
    for (std::int64_t px = bb[2]; px < bb[3]; ++px) {
      const double a = sprite::alpha_at(spec, size, px, py);
      if (a <= 0.0) continue;
      for (std::int64_t c = 0; c < 3; ++c) {
        auto& v = out.data[static_cast<std::size_t>((c * size + py) * size + px)];
        v = static_cast<float>((1.0 - a) * static_cast<double>(v) + a * rgb[c]);
      }
    }
  return out;
}

inline Tensor<float> render_sample(const SceneSpec& scene, const ObjectSpec& object, std::int64_t size) {
  Tensor<float> img = render_scene(scene, size);
  if (object.present) img = composite_object(img, object);
  return img;
}

// Draw order (documented for reproducibility): scenes come from
// SplitMix64(mix_seed(seed, 11)) in field order hue, angle, cx, cy, radius,
// tone; objects from SplitMix64(mix_seed(seed, 13)) in order style, width,
// darkness, tint. The with-object set is generated first, then the
// without-object set.
inline SceneSpec sample_scene(SplitMix64& g) {
  SceneSpec s;
  s.bg_hue = g.uniform();
  s.gradient_angle = g.uniform(0.0, 2.0 * M_PI);
  s.face_cx = g.uniform(-0.05, 0.05);
  s.face_cy = g.uniform(-0.05, 0.05);
  s.face_radius = g.uniform(0.3, 0.4);
  s.skin_tone = g.uniform();
  return s;
}

inline ObjectSpec sample_object(SplitMix64& g) {
  ObjectSpec o;
  o.present = true;
  o.style = static_cast<ObjectStyle>(g.below(3));
  o.width = g.uniform(0.05, 0.12);
  o.darkness = g.uniform(0.2, 1.0);
  o.tint = g.uniform();
  return o;
}

inline Dataset make_dataset(std::int64_t n_with, std::int64_t n_without, std::int64_t size, std::uint64_t seed) {
  if (n_with <= 0 || n_without <= 0) throw std::invalid_argument("make_dataset: counts must be positive");
  check_render_size(size);
  SplitMix64 scene_rng(mix_seed(seed, 11));
  SplitMix64 object_rng(mix_seed(seed, 13));
  Dataset ds;
  ds.with_object.reserve(static_cast<std::size_t>(n_with));
  ds.without_object.reserve(static_cast<std::size_t>(n_without));
  for (std::int64_t i = 0; i < n_with; ++i) {
    Sample s;
    s.scene = sample_scene(scene_rng);
    s.object = sample_object(object_rng);
    s.label = 1;
    s.image = render_sample(*s.scene, *s.object, size);
    ds.with_object.push_back(std::move(s));
  }
  for (std::int64_t i = 0; i < n_without; ++i) {
    Sample s;
    s.scene = sample_scene(scene_rng);
    s.object = ObjectSpec{};  // present=false
    s.label = 0;
    s.image = render_scene(*s.scene, size);
    ds.without_object.push_back(std::move(s));
  }
  return ds;
}

// Loads `<dir>/*.ppm|*.pgm` in lexicographic filename order, center-crops to
// square and resizes to `size`.
inline std::vector<Sample> ingest_dir(const std::string& dir, std::int64_t size, int label) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".pgm") files.push_back(e.path().string());
  }
  if (files.empty()) throw DataError("no .ppm/.pgm files in directory: " + dir);
  std::sort(files.begin(), files.end());
  std::vector<Sample> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    Sample s;
    s.image = center_crop_resize(load_image(f), size);
    s.label = label;
    out.push_back(std::move(s));
  }
  return out;
}

inline Dataset ingest_folder(const std::string& path_with, const std::string& path_without, std::int64_t size) {
  Dataset ds;
  ds.with_object = ingest_dir(path_with, size, 1);
  ds.without_object = ingest_dir(path_without, size, 0);
  return ds;
}

// Stacks samples[indices] into an N x 3 x H x W batch tensor.
template <typename T>
Tensor<T> stack_images(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("stack_images: empty batch");
  const auto& first = samples.at(indices[0]).image;
  const std::int64_t h = first.shape[1], w = first.shape[2];
  Tensor<T> batch({static_cast<std::int64_t>(indices.size()), 3, h, w});
  std::int64_t off = 0;
  for (std::size_t idx : indices) {
    const auto& img = samples.at(idx).image;
    if (img.shape != first.shape) throw DataError("stack_images: mixed image sizes in batch");
    for (std::int64_t i = 0; i < img.numel(); ++i) batch[off + i] = static_cast<T>(img[i]);
    off += img.numel();
  }
  return batch;
}

}  // namespace genegan
