// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "genegan/image_io.hpp"
#include "genegan/rng.hpp"

using namespace genegan;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "genegan_io_test";
  fs::create_directories(p);
  return p;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("ppm round trip stays within the quantization bound", "[image_io]") {
  SplitMix64 rng(41);
  Tensor<float> img({3, 7, 5});
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  const auto path = (temp_dir() / "rt.ppm").string();
  save_ppm(path, img);
  auto back = load_image(path);
  REQUIRE(back.shape == img.shape);
  float worst = 0;
  for (std::int64_t i = 0; i < img.numel(); ++i) worst = std::max(worst, std::abs(back[i] - img[i]));
  CHECK(worst <= 1.0f / 510.0f + 1e-7f);
}

TEST_CASE("all-white 2x2 image has the exact canonical bytes", "[image_io]") {
  const auto path = (temp_dir() / "white.ppm").string();
  save_ppm(path, Tensor<float>::full({3, 2, 2}, 1.0f));
  std::ifstream f(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::string want = "P6\n2 2\n255\n";
  want += std::string(12, static_cast<char>(0xFF));
  CHECK(bytes == want);
}

TEST_CASE("pgm loads replicated to three channels", "[image_io]") {
  const auto path = temp_dir() / "gray.pgm";
  std::string bytes = "P5\n2 2\n255\n";
  bytes += '\x00';
  bytes += '\x40';
  bytes += '\x80';
  bytes += '\xFF';
  write_bytes(path, bytes);
  auto img = load_image(path.string());
  REQUIRE(img.shape == Shape{3, 2, 2});
  for (std::int64_t c = 0; c < 3; ++c) {
    CHECK(img.data[static_cast<std::size_t>(c * 4 + 0)] == Approx(0.0f));
    CHECK(img.data[static_cast<std::size_t>(c * 4 + 1)] == Approx(64.0f / 255.0f));
    CHECK(img.data[static_cast<std::size_t>(c * 4 + 2)] == Approx(128.0f / 255.0f));
    CHECK(img.data[static_cast<std::size_t>(c * 4 + 3)] == Approx(1.0f));
  }
}

TEST_CASE("header comments are skipped", "[image_io]") {
  const auto path = temp_dir() / "comment.ppm";
  std::string bytes = "P6\n# a comment line\n1 1\n255\n";
  bytes += "\x10\x20\x30";
  write_bytes(path, bytes);
  auto img = load_image(path.string());
  REQUIRE(img.shape == Shape{3, 1, 1});
  CHECK(img[0] == Approx(16.0f / 255.0f));
}

TEST_CASE("malformed files fail with a byte offset", "[image_io]") {
  const auto dir = temp_dir();
  write_bytes(dir / "badmagic.ppm", "P3\n1 1\n255\n\x01\x02\x03");
  CHECK_THROWS_WITH(load_image((dir / "badmagic.ppm").string()),
                    Catch::Matchers::ContainsSubstring("byte offset"));

  write_bytes(dir / "badmax.ppm", "P6\n1 1\n65535\n\x01\x02\x03");
  CHECK_THROWS_WITH(load_image((dir / "badmax.ppm").string()),
                    Catch::Matchers::ContainsSubstring("maxval"));

  write_bytes(dir / "trunc.ppm", "P6\n2 2\n255\n\x01\x02");
  CHECK_THROWS_WITH(load_image((dir / "trunc.ppm").string()),
                    Catch::Matchers::ContainsSubstring("truncated payload") &&
                        Catch::Matchers::ContainsSubstring("byte offset"));

  CHECK_THROWS_AS(load_image((dir / "does_not_exist.ppm").string()), DataError);
}

TEST_CASE("center crop + bilinear resize crops the long side first", "[image_io]") {
  // 64x48 (w x h): crop to the center 48x48, then resize
  Tensor<float> img({3, 48, 64});
  for (std::int64_t y = 0; y < 48; ++y)
    for (std::int64_t x = 0; x < 64; ++x) {
      // mark the horizontal center band so the crop location is observable
      const float v = (x >= 8 && x < 56) ? 1.0f : 0.0f;
      for (std::int64_t c = 0; c < 3; ++c) img.data[static_cast<std::size_t>((c * 48 + y) * 64 + x)] = v;
    }
  auto out = center_crop_resize(img, 32);
  REQUIRE(out.shape == Shape{3, 32, 32});
  // the cropped region is entirely the marked band
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == Approx(1.0f));

  // determinism
  auto out2 = center_crop_resize(img, 32);
  for (std::int64_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == out2[i]);
}

TEST_CASE("montages are pure concatenations", "[image_io]") {
  Tensor<float> a = Tensor<float>::full({3, 2, 2}, 0.25f);
  Tensor<float> b = Tensor<float>::full({3, 2, 3}, 0.75f);
  auto row = hconcat_images({a, b});
  REQUIRE(row.shape == Shape{3, 2, 5});
  CHECK(row.data[0] == 0.25f);
  CHECK(row.data[4] == 0.75f);
  auto grid = vconcat_images({row, row});
  REQUIRE(grid.shape == Shape{3, 4, 5});
  CHECK_THROWS_AS(hconcat_images({a, Tensor<float>({3, 3, 2})}), std::invalid_argument);
}
