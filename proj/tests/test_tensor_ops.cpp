// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "genegan/rng.hpp"
#include "genegan/tape.hpp"

using namespace genegan;
using Catch::Approx;

namespace {

Tensor<double> rand_tensor(Shape s, SplitMix64& rng, double lo = -2, double hi = 2) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// direct 6-loop convolution reference, independent of the im2col path
Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w, std::int64_t stride,
                            std::int64_t pad) {
  const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::int64_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const std::int64_t OH = (H + 2 * pad - kh) / stride + 1;
  const std::int64_t OW = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> out({N, O, OH, OW});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          double acc = 0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t ki = 0; ki < kh; ++ki)
              for (std::int64_t kj = 0; kj < kw; ++kj) {
                const std::int64_t iy = oy * stride - pad + ki;
                const std::int64_t ix = ox * stride - pad + kj;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.at4(n, c, iy, ix) * w.data[static_cast<std::size_t>(((o * C + c) * kh + ki) * kw + kj)];
              }
          out.at4(n, o, oy, ox) = acc;
        }
  return out;
}

// reference gradients by direct accumulation over the same 6 loops
void naive_conv2d_backward(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& gout,
                           std::int64_t stride, std::int64_t pad, Tensor<double>& gx, Tensor<double>& gw) {
  const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::int64_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const std::int64_t OH = gout.shape[2], OW = gout.shape[3];
  gx = Tensor<double>(x.shape);
  gw = Tensor<double>(w.shape);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          const double g = gout.at4(n, o, oy, ox);
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t ki = 0; ki < kh; ++ki)
              for (std::int64_t kj = 0; kj < kw; ++kj) {
                const std::int64_t iy = oy * stride - pad + ki;
                const std::int64_t ix = ox * stride - pad + kj;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                const std::size_t wi = static_cast<std::size_t>(((o * C + c) * kh + ki) * kw + kj);
                gx.at4(n, c, iy, ix) += g * w.data[wi];
                gw.data[wi] += g * x.at4(n, c, iy, ix);
              }
        }
}

double max_rel_err(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape == b.shape);
  double worst = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-8}));
  return worst;
}

}  // namespace

TEST_CASE("elementwise add/sub/mul/scale semantics", "[tensor]") {
  Tape<double> t;
  auto a = t.leaf(Tensor<double>({2}, {1, 2}), true);
  auto b = t.constant(Tensor<double>({2}, {3, 4}));
  auto sum = t.add(a, b);
  CHECK(t.value(sum)[0] == 4.0);
  CHECK(t.value(sum)[1] == 6.0);

  auto diff = t.sub(a, a);
  CHECK(t.value(diff)[0] == 0.0);
  CHECK(t.value(diff)[1] == 0.0);

  auto two_x = t.scale(a, 2.0);
  auto loss = t.scale(t.mean(two_x), 2.0);  // sum of 2x over 2 elements
  t.backward(loss);
  CHECK(t.grad(a)[0] == Approx(2.0));
  CHECK(t.grad(a)[1] == Approx(2.0));
}

TEST_CASE("sub of a tensor with itself has zero gradient", "[tensor]") {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({3}, {1.5, -0.5, 2.0}), true);
  auto loss = t.l1(t.sub(x, x));
  CHECK(t.value(loss)[0] == 0.0);
  t.backward(loss);
  for (std::int64_t i = 0; i < 3; ++i) CHECK(t.grad(x)[i] == 0.0);
}

TEST_CASE("shape mismatch errors name both shapes", "[tensor]") {
  Tape<double> t;
  auto a = t.constant(Tensor<double>({2, 3}));
  auto b = t.constant(Tensor<double>({3, 2}));
  CHECK_THROWS_WITH(t.add(a, b), Catch::Matchers::ContainsSubstring("[2,3]") &&
                                     Catch::Matchers::ContainsSubstring("[3,2]"));
}

TEST_CASE("backward is sum-gradient and rejects reuse and non-scalars", "[tensor]") {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({3}, {5, 6, 7}), true);
  auto sum = t.scale(t.mean(x), 3.0);
  t.backward(sum);
  for (std::int64_t i = 0; i < 3; ++i) CHECK(t.grad(x)[i] == Approx(1.0));
  CHECK_THROWS_AS(t.backward(sum), std::runtime_error);

  Tape<double> t2;
  auto y = t2.leaf(Tensor<double>({3}, {1, 2, 3}), true);
  CHECK_THROWS_AS(t2.backward(y), std::invalid_argument);
}

TEST_CASE("conv2d box filter and identity kernel", "[tensor]") {
  Tape<double> t;
  Tensor<double> x({1, 1, 4, 4});
  for (std::int64_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i + 1);
  auto vx = t.constant(x);
  auto ones = t.constant(Tensor<double>::full({1, 1, 3, 3}, 1.0));
  auto box = t.conv2d(vx, ones, {}, 1, 0);
  REQUIRE(t.value(box).shape == Shape{1, 1, 2, 2});
  CHECK(t.value(box)[0] == Approx(1 + 2 + 3 + 5 + 6 + 7 + 9 + 10 + 11));
  CHECK(t.value(box)[3] == Approx(6 + 7 + 8 + 10 + 11 + 12 + 14 + 15 + 16));

  Tensor<double> id({1, 1, 3, 3});
  id[4] = 1.0;  // center
  auto out = t.conv2d(vx, t.constant(id), {}, 1, 1);
  REQUIRE(t.value(out).shape == x.shape);
  for (std::int64_t i = 0; i < 16; ++i) CHECK(t.value(out)[i] == Approx(x[i]));
}

TEST_CASE("conv2d matches the naive 6-loop reference forward and backward", "[tensor]") {
  SplitMix64 rng(11);
  auto x = rand_tensor({2, 3, 8, 8}, rng);
  auto w = rand_tensor({4, 3, 3, 3}, rng, -0.7, 0.7);

  Tape<double> t;
  auto vx = t.leaf(x, true);
  auto vw = t.leaf(w, true);
  auto out = t.conv2d(vx, vw, {}, 1, 0);
  auto ref = naive_conv2d(x, w, 1, 0);
  CHECK(max_rel_err(t.value(out), ref) < 1e-6);

  auto gout = rand_tensor(ref.shape, rng);
  auto loss = t.scale(t.mean(t.mul(out, t.constant(gout))), static_cast<double>(gout.numel()));
  t.backward(loss);
  Tensor<double> gx_ref, gw_ref;
  naive_conv2d_backward(x, w, gout, 1, 0, gx_ref, gw_ref);
  CHECK(max_rel_err(t.grad(vx), gx_ref) < 1e-6);
  CHECK(max_rel_err(t.grad(vw), gw_ref) < 1e-6);

  // strided + padded variant
  Tape<double> t2;
  auto vx2 = t2.leaf(x, true);
  auto w2 = rand_tensor({5, 3, 4, 4}, rng, -0.7, 0.7);
  auto out2 = t2.conv2d(vx2, t2.leaf(w2, true), {}, 2, 1);
  CHECK(max_rel_err(t2.value(out2), naive_conv2d(x, w2, 2, 1)) < 1e-6);
}

TEST_CASE("conv2d rejects non-positive output dims", "[tensor]") {
  Tape<double> t;
  auto x = t.constant(Tensor<double>({1, 1, 2, 2}));
  auto w = t.constant(Tensor<double>({1, 1, 5, 5}));
  CHECK_THROWS_AS(t.conv2d(x, w, {}, 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d_transpose shape formula and linearity", "[tensor]") {
  Tape<double> t;
  SplitMix64 rng(5);
  auto x = rand_tensor({1, 1, 2, 2}, rng);
  auto w = rand_tensor({1, 1, 2, 2}, rng);
  auto out = t.conv2d_transpose(t.constant(x), t.constant(w), {}, 2, 0);
  CHECK(t.value(out).shape == Shape{1, 1, 4, 4});

  auto zero = t.conv2d_transpose(t.constant(Tensor<double>({2, 3, 4, 4})),
                                 t.constant(rand_tensor({3, 2, 4, 4}, rng)), {}, 2, 1);
  for (std::int64_t i = 0; i < t.value(zero).numel(); ++i) CHECK(t.value(zero)[i] == 0.0);
}

TEST_CASE("conv2d_transpose is the exact adjoint of conv2d", "[tensor]") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    auto x = rand_tensor({2, 3, 8, 8}, rng, -1, 1);
    auto w = rand_tensor({5, 3, 4, 4}, rng, -1, 1);
    Tape<double> t;
    auto y = t.conv2d(t.constant(x), t.constant(w), {}, 2, 1);
    auto yr = rand_tensor(t.value(y).shape, rng, -1, 1);
    double ip1 = 0;
    for (std::int64_t i = 0; i < yr.numel(); ++i) ip1 += yr[i] * t.value(y)[i];
    auto xt = t.conv2d_transpose(t.constant(yr), t.constant(w), {}, 2, 1);
    REQUIRE(t.value(xt).shape == x.shape);
    double ip2 = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) ip2 += t.value(xt)[i] * x[i];
    CHECK(std::abs(ip1 - ip2) / std::abs(ip1) < 1e-6);
  }
}

TEST_CASE("leaky_relu values and subgradients", "[tensor]") {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({3}, {-3, 0, 3}), true);
  auto y = t.leaky_relu(x, 0.2);
  CHECK(t.value(y)[0] == Approx(-0.6));
  CHECK(t.value(y)[1] == 0.0);
  CHECK(t.value(y)[2] == Approx(3.0));
  auto loss = t.scale(t.mean(y), 3.0);  // sum
  t.backward(loss);
  CHECK(t.grad(x)[0] == Approx(0.2));  // negative branch
  CHECK(t.grad(x)[1] == Approx(0.2));  // subgradient at exactly 0 is alpha
  CHECK(t.grad(x)[2] == Approx(1.0));  // positive branch

  CHECK_THROWS_AS(t.leaky_relu(x, 1.5), std::invalid_argument);
}

TEST_CASE("leaky_relu example values", "[tensor]") {
  Tape<double> t;
  auto x = t.constant(Tensor<double>({3}, {-1, 0, 2}));
  auto y = t.leaky_relu(x, 0.2);
  CHECK(t.value(y)[0] == Approx(-0.2));
  CHECK(t.value(y)[1] == 0.0);
  CHECK(t.value(y)[2] == Approx(2.0));
}

TEST_CASE("batch_norm fixed point and scale collapse", "[tensor]") {
  // zero-mean unit-variance input with gamma=1 beta=0 is (almost) a fixed point
  Tensor<double> x({2, 1, 1, 2});
  x.data = {-1, 1, 1, -1};  // mean 0, biased variance 1
  Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
  Tape<double> t;
  auto vx = t.constant(x);
  auto gamma1 = t.constant(Tensor<double>::full({1}, 1.0));
  auto beta0 = t.constant(Tensor<double>({1}));
  auto y = t.batch_norm(vx, gamma1, beta0, &rm, &rv, true, false, 0.9, 1e-5);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(t.value(y)[i] == Approx(x[i]).margin(1e-4));

  // gamma = 0 collapses to beta
  auto y2 = t.batch_norm(vx, t.constant(Tensor<double>({1})), t.constant(Tensor<double>::full({1}, 0.7)), &rm,
                         &rv, true, false, 0.9, 1e-5);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(t.value(y2)[i] == Approx(0.7));

  // batch size 1 in train mode is an error
  auto x1 = t.constant(Tensor<double>({1, 1, 2, 2}));
  CHECK_THROWS_AS(t.batch_norm(x1, gamma1, beta0, &rm, &rv, true, false, 0.9, 1e-5), std::invalid_argument);
}

TEST_CASE("batch_norm updates running stats with momentum", "[tensor]") {
  Tensor<double> x({2, 1, 1, 1});
  x.data = {2.0, 4.0};  // mean 3, biased var 1
  Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
  Tape<double> t;
  auto y = t.batch_norm(t.constant(x), t.constant(Tensor<double>::full({1}, 1.0)),
                        t.constant(Tensor<double>({1})), &rm, &rv, true, true, 0.9, 1e-5);
  (void)y;
  CHECK(rm[0] == Approx(0.9 * 0.0 + 0.1 * 3.0));
  CHECK(rv[0] == Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("sigmoid, l1 and the stable fused log-sigmoid", "[tensor]") {
  Tape<double> t;
  auto zero = t.constant(Tensor<double>({1}));
  CHECK(t.value(t.sigmoid(zero))[0] == Approx(0.5));

  auto v = t.constant(Tensor<double>({3}, {1, -1, 2}));
  CHECK(t.value(t.l1(v))[0] == Approx(4.0 / 3.0));

  // -log(sigmoid(-50)) == softplus(50), roughly 50, no overflow
  auto big = t.constant(Tensor<double>({1}, {-50}));
  const double got = t.value(t.neg_log_sigmoid(big))[0];
  const double want = 50.0 + std::log1p(std::exp(-50.0));
  CHECK(got == Approx(want).epsilon(1e-12));
  CHECK(std::isfinite(got));

  // the unfused path rejects non-positive input
  CHECK_THROWS_AS(t.log(t.constant(Tensor<double>({1}, {0.0}))), std::invalid_argument);
  CHECK_THROWS_AS(t.log(t.constant(Tensor<double>({1}, {-2.0}))), std::invalid_argument);
}

TEST_CASE("concat/split channels round trip bit-exactly and route gradients", "[tensor]") {
  SplitMix64 rng(23);
  auto a = rand_tensor({2, 2, 4, 4}, rng);
  auto b = rand_tensor({2, 3, 4, 4}, rng);
  Tape<double> t;
  auto va = t.leaf(a, true);
  auto vb = t.leaf(b, true);
  auto cat = t.concat_channels(va, vb);
  REQUIRE(t.value(cat).shape == Shape{2, 5, 4, 4});
  auto [lhs, rhs] = t.split_channels(cat, 2);
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(t.value(lhs)[i] == a[i]);
  for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(t.value(rhs)[i] == b[i]);

  // gradient of concat routes slices back to the right inputs
  auto loss = t.add(t.scale(t.mean(lhs), 2.0), t.mean(rhs));
  t.backward(loss);
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(t.grad(va)[i] == Approx(2.0 / a.numel()));
  for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(t.grad(vb)[i] == Approx(1.0 / b.numel()));

  CHECK_THROWS_AS(t.split_channels(cat, 5), std::invalid_argument);
  CHECK_THROWS_AS(t.concat_channels(va, t.constant(Tensor<double>({2, 2, 3, 3}))), std::invalid_argument);
}

TEST_CASE("forward passes are deterministic", "[tensor]") {
  SplitMix64 rng(31);
  auto x = rand_tensor({2, 3, 8, 8}, rng);
  auto w = rand_tensor({4, 3, 4, 4}, rng);
  auto run = [&] {
    Tape<double> t;
    auto out = t.conv2d(t.constant(x), t.constant(w), {}, 2, 1);
    return t.value(out);
  };
  auto r1 = run(), r2 = run();
  for (std::int64_t i = 0; i < r1.numel(); ++i) REQUIRE(r1[i] == r2[i]);
}
