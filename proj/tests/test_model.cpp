// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "genegan/model.hpp"
#include "genegan/rng.hpp"

using namespace genegan;
using Catch::Approx;

namespace {

Tensor<double> rand_image(Shape s, SplitMix64& rng) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("encode produces the configured code shapes", "[model]") {
  ModelConfig cfg;  // defaults: 32x32, c_b=24, c_o=8
  auto store = init_params<double>(cfg, 1);
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kNone);
  SplitMix64 rng(2);
  auto x = t.constant(rand_image({2, 3, 32, 32}, rng));
  auto code = encode(t, bp, x, true, false);
  CHECK(t.value(code.background).shape == Shape{2, 24, 4, 4});
  CHECK(t.value(code.object).shape == Shape{2, 8, 4, 4});

  // identical inputs encode identically
  const auto& bg = t.value(code.background);
  Tape<double> t2;
  auto bp2 = bind_params(t2, store, cfg, GradScope::kNone);
  auto x2 = t2.constant(t.value(x));
  auto code2 = encode(t2, bp2, x2, true, false);
  for (std::int64_t i = 0; i < bg.numel(); ++i) REQUIRE(t2.value(code2.background)[i] == bg[i]);

  // wrong divisibility is rejected
  auto bad = t.constant(Tensor<double>({2, 3, 20, 20}));
  CHECK_THROWS_AS(encode(t, bp, bad, true, false), std::invalid_argument);
  auto bad_ch = t.constant(Tensor<double>({2, 4, 32, 32}));
  CHECK_THROWS_AS(encode(t, bp, bad_ch, true, false), std::invalid_argument);
}

TEST_CASE("decode inverts the encode shapes and stays in (0,1)", "[model]") {
  ModelConfig cfg;
  auto store = init_params<double>(cfg, 3);
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kNone);
  SplitMix64 rng(4);
  auto x = t.constant(rand_image({2, 3, 32, 32}, rng));
  auto code = encode(t, bp, x, true, false);
  auto img = decode(t, bp, code.background, code.object, true, false);
  REQUIRE(t.value(img).shape == Shape{2, 3, 32, 32});
  for (std::int64_t i = 0; i < t.value(img).numel(); ++i) {
    REQUIRE(t.value(img)[i] > 0.0);
    REQUIRE(t.value(img)[i] < 1.0);
  }

  auto bad_obj = t.constant(Tensor<double>({2, 5, 4, 4}));
  CHECK_THROWS_AS(decode(t, bp, code.background, bad_obj, true, false), std::invalid_argument);
}

TEST_CASE("discriminate yields one in-range score per sample", "[model]") {
  ModelConfig cfg = ModelConfig::tiny8();
  auto store = init_params<double>(cfg, 5);
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kNone);
  SplitMix64 rng(6);
  auto x = t.constant(rand_image({3, 3, 8, 8}, rng));
  auto d = discriminate(t, bp, DiscKind::kWith, x, true, false);
  REQUIRE(t.value(d.score).shape == Shape{3, 1});
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(t.value(d.score)[i] > 0.0);
    CHECK(t.value(d.score)[i] < 1.0);
  }
}

TEST_CASE("four_child_forward produces four finite children of the input shape", "[model]") {
  ModelConfig cfg = ModelConfig::tiny8();
  auto store = init_params<double>(cfg, 7);
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kNone);
  SplitMix64 rng(8);
  auto xa = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto xb = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto ch = four_child_forward(t, bp, xa, xb, true, false);
  for (auto v : {ch.x_Au_rec, ch.x_B0_rec, ch.x_A0, ch.x_Bu}) {
    REQUIRE(t.value(v).shape == Shape{2, 3, 8, 8});
    REQUIRE(t.value(v).all_finite());
  }
  CHECK(t.value(ch.code_Au.object).shape == Shape{2, 2, 1, 1});
  CHECK(t.value(ch.code_B0.object).shape == Shape{2, 2, 1, 1});
}

TEST_CASE("four_child_forward is deterministic in eval mode", "[model]") {
  ModelConfig cfg = ModelConfig::tiny8();
  auto store = init_params<double>(cfg, 9);
  SplitMix64 rng(10);
  auto xa = rand_image({2, 3, 8, 8}, rng);
  auto xb = rand_image({2, 3, 8, 8}, rng);
  auto run = [&] {
    Tape<double> t;
    auto bp = bind_params(t, store, cfg, GradScope::kNone);
    auto ch = four_child_forward(t, bp, t.constant(xa), t.constant(xb), false, false);
    return t.value(ch.x_Bu);
  };
  auto r1 = run(), r2 = run();
  for (std::int64_t i = 0; i < r1.numel(); ++i) REQUIRE(r1[i] == r2[i]);
}

TEST_CASE("generator loss terms are zero on their definitional zero cases", "[model]") {
  ModelConfig cfg = ModelConfig::tiny8();
  auto store = init_params<double>(cfg, 11);
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kNone);
  SplitMix64 rng(12);
  auto xa = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto xb = t.constant(rand_image({2, 3, 8, 8}, rng));
  // children that equal their parents with an all-zero eps
  FourChildren<double> ch;
  ch.x_Au_rec = xa;
  ch.x_B0_rec = xb;
  ch.x_A0 = xa;
  ch.x_Bu = xb;
  ch.code_Au = {t.constant(Tensor<double>({2, 3, 1, 1})), t.constant(Tensor<double>({2, 2, 1, 1}))};
  ch.code_B0 = {t.constant(Tensor<double>({2, 3, 1, 1})), t.constant(Tensor<double>({2, 2, 1, 1}))};
  auto gl = generator_loss(t, bp, ch, xa, xb, LossWeights{}, true);
  CHECK(t.value(gl.rec_Au)[0] == 0.0);
  CHECK(t.value(gl.rec_B0)[0] == 0.0);
  CHECK(t.value(gl.null_term)[0] == 0.0);
  CHECK(t.value(gl.par)[0] == 0.0);
  // losses are non-negative
  CHECK(t.value(gl.gan_0)[0] >= 0.0);
  CHECK(t.value(gl.gan_ne0)[0] >= 0.0);
  CHECK(t.value(gl.total)[0] >= 0.0);
}

TEST_CASE("discriminator at exactly 0.5 scores 2 log 2 per domain", "[model]") {
  ModelConfig cfg = ModelConfig::tiny8();
  auto store = init_params<double>(cfg, 13);
  // zeroing the affine heads forces logits (and hence scores) to exactly 0.5
  for (const char* d : {"disc_with", "disc_without"}) {
    auto& w = store.param(std::string(d) + ".fc.w");
    std::fill(w.data.begin(), w.data.end(), 0.0);
  }
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kNone);
  SplitMix64 rng(14);
  auto xa = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto xb = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto ch = four_child_forward(t, bp, xa, xb, true, false);
  auto dl = discriminator_loss(t, bp, ch, xa, xb, true);
  CHECK(t.value(dl.with_term)[0] == Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(t.value(dl.without_term)[0] == Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(t.value(dl.total)[0] == Approx(4 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("gradients respect the phase scope partition", "[model]") {
  ModelConfig cfg = ModelConfig::tiny8();
  auto store = init_params<double>(cfg, 15);
  SplitMix64 rng(16);
  auto xa = rand_image({2, 3, 8, 8}, rng);
  auto xb = rand_image({2, 3, 8, 8}, rng);

  // discriminator phase: children are detached because generator params carry no grad
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kDiscriminators);
  auto ch = four_child_forward(t, bp, t.constant(xa), t.constant(xb), true, false);
  auto dl = discriminator_loss(t, bp, ch, t.constant(xa), t.constant(xb), true);
  t.backward(dl.total);
  for (const auto& [name, tensor] : store.params) {
    CHECK(t.needs_grad(bp[name]) == is_discriminator_param(name));
    if (is_generator_param(name)) {
      const auto& g = t.grad(bp[name]);
      for (std::int64_t i = 0; i < g.numel(); ++i) REQUIRE(g[i] == 0.0);
    }
  }

  // generator phase: the mirror image
  Tape<double> t2;
  auto bp2 = bind_params(t2, store, cfg, GradScope::kGenerator);
  auto ch2 = four_child_forward(t2, bp2, t2.constant(xa), t2.constant(xb), true, false);
  auto gl = generator_loss(t2, bp2, ch2, t2.constant(xa), t2.constant(xb), LossWeights{}, true);
  t2.backward(gl.total);
  for (const auto& [name, tensor] : store.params)
    CHECK(t2.needs_grad(bp2[name]) == is_generator_param(name));
}

TEST_CASE("parameter table is shared across diagram instantiations", "[model]") {
  // one bound var per parameter regardless of how many encoder/decoder
  // invocations the stacked diagram makes
  ModelConfig cfg = ModelConfig::tiny8();
  auto store = init_params<double>(cfg, 17);
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kGenerator);
  REQUIRE(bp.vars.size() == store.params.size());
  SplitMix64 rng(18);
  auto xa = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto xb = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto sf = stacked_forward(t, bp, xa, xb, true, false);
  CHECK(bp.vars.size() == store.params.size());
  // the single encoder weight accumulates gradient from both encode passes
  auto gl = generator_loss(t, bp, sf.children, xa, xb, LossWeights{}, true, sf.eps_prime);
  t.backward(gl.total);
  const auto& g = t.grad(bp["encoder.conv1.w"]);
  double mag = 0;
  for (std::int64_t i = 0; i < g.numel(); ++i) mag += std::abs(g[i]);
  CHECK(mag > 0.0);
}

TEST_CASE("stacked grandchildren keep the parent shape", "[model]") {
  ModelConfig cfg = ModelConfig::tiny8();
  auto store = init_params<double>(cfg, 19);
  Tape<double> t;
  auto bp = bind_params(t, store, cfg, GradScope::kNone);
  SplitMix64 rng(20);
  auto xa = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto xb = t.constant(rand_image({2, 3, 8, 8}, rng));
  auto sf = stacked_forward(t, bp, xa, xb, true, false);
  CHECK(t.value(sf.children.x_Au_rec).shape == Shape{2, 3, 8, 8});
  CHECK(t.value(sf.children.x_B0_rec).shape == Shape{2, 3, 8, 8});
  CHECK(t.value(sf.eps_prime).shape == t.value(sf.children.code_B0.object).shape);
}

TEST_CASE("double-swap wiring with identity encode/decode reproduces the parents", "[model]") {
  // mirrors the stacked wiring with a lossless codec: encode = split channels,
  // decode = concat. Grandchildren must equal the grandparents exactly.
  SplitMix64 rng(21);
  Tensor<double> xa({1, 5, 2, 2}), xb({1, 5, 2, 2});
  for (auto& v : xa.data) v = rng.uniform();
  for (auto& v : xb.data) v = rng.uniform();
  const std::int64_t cb = 3;
  Tape<double> t;
  auto enc = [&](Tape<double>::Var x) { return t.split_channels(x, cb); };
  auto dec = [&](Tape<double>::Var bg, Tape<double>::Var obj) { return t.concat_channels(bg, obj); };

  auto [A, u] = enc(t.constant(xa));
  auto [B, eps] = enc(t.constant(xb));
  auto zero = t.constant(Tensor<double>(t.value(u).shape));
  auto x_A0 = dec(A, zero);
  auto x_Bu = dec(B, u);
  auto [A2, eps2] = enc(x_A0);
  auto [B2, u2] = enc(x_Bu);
  auto x_Au_gc = dec(A2, u2);
  auto x_B0_gc = dec(B2, zero);

  // with an identity codec the object code of xb is its last channels, which
  // the zero code replaces; compare against xa / xb-with-zeroed-object
  for (std::int64_t i = 0; i < xa.numel(); ++i) CHECK(t.value(x_Au_gc)[i] == xa[i]);
  Tensor<double> xb_zeroed = xb;
  for (std::int64_t c = cb; c < 5; ++c)
    for (std::int64_t p = 0; p < 4; ++p) xb_zeroed.at4(0, c, p / 2, p % 2) = 0.0;
  for (std::int64_t i = 0; i < xb.numel(); ++i) CHECK(t.value(x_B0_gc)[i] == xb_zeroed[i]);
}

TEST_CASE("object vector operations", "[model]") {
  ModelConfig cfg = ModelConfig::tiny8();
  SplitMix64 rng(22);
  Tensor<float> code({1, cfg.c_o, 1, 1});
  for (auto& v : code.data) v = static_cast<float>(rng.uniform(-1, 1));
  auto v1 = ObjectVector<float>::from_code(code, "a");
  auto v2 = scale_vector(v1, 3.0f);
  for (std::size_t i = 0; i < v1.values.size(); ++i) CHECK(v2.values[i] == Approx(3.0f * v1.values[i]));

  // t=0 interpolation returns v1 exactly
  auto v3 = interpolate_vectors(v1, v2, 0.0f);
  for (std::size_t i = 0; i < v1.values.size(); ++i) CHECK(v3.values[i] == v1.values[i]);

  // scale by 0 is the zero "no object" code
  auto v0 = scale_vector(v1, 0.0f);
  for (float x : v0.values) CHECK(x == 0.0f);

  auto code_rt = v1.to_code(cfg);
  CHECK(code_rt.shape == code.shape);
  for (std::int64_t i = 0; i < code.numel(); ++i) CHECK(code_rt[i] == code[i]);

  ObjectVector<float> short_vec{{1.0f, 2.0f}, "bad"};
  CHECK_THROWS_AS(interpolate_vectors(v1, short_vec, 0.5f), std::invalid_argument);
  CHECK_THROWS_AS(short_vec.to_code(cfg), std::invalid_argument);
}

TEST_CASE("encoder/decoder parameter count fits the gradient-check budget", "[model]") {
  auto store = init_params<double>(ModelConfig::tiny8(), 1);
  std::int64_t total = 0;
  for (const auto& [k, v] : store.params) total += v.numel();
  CHECK(total <= 5000);
}
