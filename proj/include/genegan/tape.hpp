// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Tape records operations in execution order; backward() replays them in
// reverse exactly once. Vars are indices into the tape, so the graph is
// topologically ordered by construction. A tape and its tensors are
// single-threaded; parallelism only happens inside individual kernels and
// is bit-deterministic for any thread count.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "genegan/conv_kernels.hpp"
#include "genegan/tensor.hpp"

namespace genegan {

template <typename T>
class Tape {
 public:
  struct Var {
    std::int32_t idx = -1;
    bool valid() const { return idx >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----

  Var leaf(Tensor<T> v, bool requires_grad) {
    return push(std::move(v), requires_grad, nullptr);
  }
  Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  // ---- elementwise arithmetic ----

  Var add(Var a, Var b) { return ewise_binary(a, b, "add", [](T x, T y) { return x + y; }, 1, 1); }
  Var sub(Var a, Var b) { return ewise_binary(a, b, "sub", [](T x, T y) { return x - y; }, 1, -1); }

  Var mul(Var a, Var b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    check_same_shape(va, vb, "mul");
    Tensor<T> out(va.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] * vb[i];
    debug_check_finite(out, "mul");
    Var o = push(std::move(out), needs_grad(a) || needs_grad(b), nullptr);
    node(o).backward = [a, b, o](Tape& t) {
      const Tensor<T>& g = t.node(o).grad;
      if (t.needs_grad(a)) {
        const Tensor<T>& vb2 = t.value(b);
        Tensor<T>& ga = t.grad_buf(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb2[i];
      }
      if (t.needs_grad(b)) {
        const Tensor<T>& va2 = t.value(a);
        Tensor<T>& gb = t.grad_buf(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va2[i];
      }
    };
    return o;
  }

  Var scale(Var a, T s) {
    const Tensor<T>& va = value(a);
    Tensor<T> out(va.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] * s;
    debug_check_finite(out, "scale");
    Var o = push(std::move(out), needs_grad(a), nullptr);
    node(o).backward = [a, o, s](Tape& t) {
      if (!t.needs_grad(a)) return;
      const Tensor<T>& g = t.node(o).grad;
      Tensor<T>& ga = t.grad_buf(a);
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
    };
    return o;
  }

  Var neg(Var a) { return scale(a, T(-1)); }

  // ---- nonlinearities ----

  Var leaky_relu(Var x, T alpha) {
    if (!(alpha > T(0) && alpha < T(1))) throw std::invalid_argument("leaky_relu: alpha must be in (0,1)");
    const Tensor<T>& vx = value(x);
    record_kinks(vx);
    Tensor<T> out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = vx[i] > T(0) ? vx[i] : alpha * vx[i];
    Var o = push(std::move(out), needs_grad(x), nullptr);
    node(o).backward = [x, o, alpha](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& g = t.node(o).grad;
      const Tensor<T>& vx2 = t.value(x);
      Tensor<T>& gx = t.grad_buf(x);
      // subgradient at exactly 0 is alpha
      for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (vx2[i] > T(0) ? T(1) : alpha);
    };
    return o;
  }

  Var sigmoid(Var x) {
    const Tensor<T>& vx = value(x);
    Tensor<T> out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = stable_sigmoid(vx[i]);
    Var o = push(std::move(out), needs_grad(x), nullptr);
    node(o).backward = [x, o](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& g = t.node(o).grad;
      const Tensor<T>& y = t.value(o);
      Tensor<T>& gx = t.grad_buf(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
    };
    return o;
  }

  // Unfused log; rejects non-positive input. Losses must go through
  // neg_log_sigmoid instead, which is the fused numerically stable form.
  Var log(Var x) {
    const Tensor<T>& vx = value(x);
    Tensor<T> out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      if (!(vx[i] > T(0)))
        throw std::invalid_argument("log: non-positive input " + std::to_string(static_cast<double>(vx[i])) +
                                    " at index " + std::to_string(i));
      out[i] = std::log(vx[i]);
    }
    Var o = push(std::move(out), needs_grad(x), nullptr);
    node(o).backward = [x, o](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& g = t.node(o).grad;
      const Tensor<T>& vx2 = t.value(x);
      Tensor<T>& gx = t.grad_buf(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] / vx2[i];
    };
    return o;
  }

  // -log(sigmoid(x)) == softplus(-x), computed without overflow.
  Var neg_log_sigmoid(Var x) {
    const Tensor<T>& vx = value(x);
    Tensor<T> out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = softplus(-vx[i]);
    Var o = push(std::move(out), needs_grad(x), nullptr);
    node(o).backward = [x, o](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& g = t.node(o).grad;
      const Tensor<T>& vx2 = t.value(x);
      Tensor<T>& gx = t.grad_buf(x);
      for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (stable_sigmoid(vx2[i]) - T(1));
    };
    return o;
  }

  // ---- reductions ----

  Var mean(Var x) {
    const Tensor<T>& vx = value(x);
    T acc = T(0);
    for (std::int64_t i = 0; i < vx.numel(); ++i) acc += vx[i];
    const T m = acc / static_cast<T>(vx.numel());
    Var o = push(Tensor<T>::scalar(m), needs_grad(x), nullptr);
    node(o).backward = [x, o](Tape& t) {
      if (!t.needs_grad(x)) return;
      const T g = t.node(o).grad[0];
      Tensor<T>& gx = t.grad_buf(x);
      const T s = g / static_cast<T>(gx.numel());
      for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += s;
    };
    return o;
  }

  // mean absolute value; subgradient of |.| at 0 is 0
  Var l1(Var x) {
    const Tensor<T>& vx = value(x);
    record_kinks(vx);
    T acc = T(0);
    for (std::int64_t i = 0; i < vx.numel(); ++i) acc += std::abs(vx[i]);
    const T m = acc / static_cast<T>(vx.numel());
    Var o = push(Tensor<T>::scalar(m), needs_grad(x), nullptr);
    node(o).backward = [x, o](Tape& t) {
      if (!t.needs_grad(x)) return;
      const T g = t.node(o).grad[0];
      const Tensor<T>& vx2 = t.value(x);
      Tensor<T>& gx = t.grad_buf(x);
      const T s = g / static_cast<T>(gx.numel());
      for (std::int64_t i = 0; i < gx.numel(); ++i)
        gx[i] += s * (vx2[i] > T(0) ? T(1) : (vx2[i] < T(0) ? T(-1) : T(0)));
    };
    return o;
  }

  // ---- convolution ----

  // x: N C H W, w: O C kh kw, bias {O} or invalid Var
  Var conv2d(Var x, Var w, Var bias, std::int64_t stride, std::int64_t pad) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vw = value(w);
    if (vx.rank() != 4 || vw.rank() != 4) throw std::invalid_argument("conv2d: expects rank-4 input and weight");
    if (vx.shape[1] != vw.shape[1])
      throw std::invalid_argument("conv2d: input channels " + shape_str(vx.shape) + " vs weight " + shape_str(vw.shape));
    const auto [N, C, H, W] = dims4(vx);
    const std::int64_t O = vw.shape[0], kh = vw.shape[2], kw = vw.shape[3];
    const std::int64_t OH = detail::conv_out_dim(H, kh, stride, pad);
    const std::int64_t OW = detail::conv_out_dim(W, kw, stride, pad);
    if (OH <= 0 || OW <= 0)
      throw std::invalid_argument("conv2d: non-positive output dim for input " + shape_str(vx.shape) +
                                  ", kernel " + shape_str(vw.shape) + ", stride " + std::to_string(stride) +
                                  ", pad " + std::to_string(pad));
    Tensor<T> out({N, O, OH, OW});
    const T* bptr = bias.valid() ? value(bias).data.data() : nullptr;
    detail::conv_forward(vx.data.data(), vw.data.data(), bptr, N, C, H, W, O, kh, kw, stride, pad, OH, OW,
                         out.data.data());
    debug_check_finite(out, "conv2d");
    bool rg = needs_grad(x) || needs_grad(w) || (bias.valid() && needs_grad(bias));
    Var o = push(std::move(out), rg, nullptr);
    node(o).backward = [x, w, bias, o, stride, pad](Tape& t) {
      const Tensor<T>& g = t.node(o).grad;
      const Tensor<T>& vx2 = t.value(x);
      const Tensor<T>& vw2 = t.value(w);
      const auto [N2, C2, H2, W2] = dims4(vx2);
      const std::int64_t O2 = vw2.shape[0], kh2 = vw2.shape[2], kw2 = vw2.shape[3];
      const std::int64_t OH2 = g.shape[2], OW2 = g.shape[3];
      if (t.needs_grad(x)) {
        detail::conv_input_grad(g.data.data(), vw2.data.data(), N2, C2, H2, W2, O2, kh2, kw2, stride, pad, OH2,
                                OW2, t.grad_buf(x).data.data());
      }
      const bool need_w = t.needs_grad(w);
      const bool need_b = bias.valid() && t.needs_grad(bias);
      if (need_w || need_b) {
        Tensor<T> scratch;
        T* gw = need_w ? t.grad_buf(w).data.data() : (scratch = Tensor<T>(vw2.shape), scratch.data.data());
        T* gb = need_b ? t.grad_buf(bias).data.data() : nullptr;
        detail::conv_weight_grad(vx2.data.data(), g.data.data(), N2, C2, H2, W2, O2, kh2, kw2, stride, pad, OH2,
                                 OW2, gw, gb);
      }
    };
    return o;
  }

  // x: N C' H' W', w: C' C kh kw (input channels first, as produced by the
  // matching conv2d). Forward equals the input-gradient of conv2d with the
  // same weight, which makes the adjoint identity exact.
  Var conv2d_transpose(Var x, Var w, Var bias, std::int64_t stride, std::int64_t pad) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vw = value(w);
    if (vx.rank() != 4 || vw.rank() != 4) throw std::invalid_argument("conv2d_transpose: expects rank-4 input and weight");
    if (vx.shape[1] != vw.shape[0])
      throw std::invalid_argument("conv2d_transpose: input channels " + shape_str(vx.shape) + " vs weight " +
                                  shape_str(vw.shape));
    const auto [N, Ci, Hi, Wi] = dims4(vx);
    const std::int64_t C = vw.shape[1], kh = vw.shape[2], kw = vw.shape[3];
    const std::int64_t OH = (Hi - 1) * stride - 2 * pad + kh;
    const std::int64_t OW = (Wi - 1) * stride - 2 * pad + kw;
    if (OH <= 0 || OW <= 0)
      throw std::invalid_argument("conv2d_transpose: non-positive output dim for input " + shape_str(vx.shape) +
                                  ", kernel " + shape_str(vw.shape));
    Tensor<T> out({N, C, OH, OW});
    detail::conv_input_grad(vx.data.data(), vw.data.data(), N, C, OH, OW, Ci, kh, kw, stride, pad, Hi, Wi,
                            out.data.data());
    if (bias.valid()) {
      const Tensor<T>& vb = value(bias);
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
          T* row = out.data.data() + (n * C + c) * OH * OW;
          for (std::int64_t p = 0; p < OH * OW; ++p) row[p] += vb[c];
        }
    }
    debug_check_finite(out, "conv2d_transpose");
    bool rg = needs_grad(x) || needs_grad(w) || (bias.valid() && needs_grad(bias));
    Var o = push(std::move(out), rg, nullptr);
    node(o).backward = [x, w, bias, o, stride, pad](Tape& t) {
      const Tensor<T>& g = t.node(o).grad;  // N C OH OW
      const Tensor<T>& vx2 = t.value(x);    // N Ci Hi Wi
      const Tensor<T>& vw2 = t.value(w);    // Ci C kh kw
      const auto [N2, C2, OH2, OW2] = dims4(g);
      const std::int64_t Ci2 = vx2.shape[1], Hi2 = vx2.shape[2], Wi2 = vx2.shape[3];
      const std::int64_t kh2 = vw2.shape[2], kw2 = vw2.shape[3];
      if (t.needs_grad(x)) {
        // d/dx of the adjoint is the forward conv
        detail::conv_forward(g.data.data(), vw2.data.data(), static_cast<const T*>(nullptr), N2, C2, OH2, OW2,
                             Ci2, kh2, kw2, stride, pad, Hi2, Wi2, t.grad_buf(x).data.data());
      }
      if (t.needs_grad(w)) {
        detail::conv_weight_grad(g.data.data(), vx2.data.data(), N2, C2, OH2, OW2, Ci2, kh2, kw2, stride, pad,
                                 Hi2, Wi2, t.grad_buf(w).data.data(), static_cast<T*>(nullptr));
      }
      if (bias.valid() && t.needs_grad(bias)) {
        Tensor<T>& gb = t.grad_buf(bias);
        for (std::int64_t n = 0; n < N2; ++n)
          for (std::int64_t c = 0; c < C2; ++c) {
            const T* row = g.data.data() + (n * C2 + c) * OH2 * OW2;
            T acc = T(0);
            for (std::int64_t p = 0; p < OH2 * OW2; ++p) acc += row[p];
            gb[c] += acc;
          }
      }
    };
    return o;
  }

  // ---- batch normalization ----

  // Per-channel batch norm over N,H,W of an NCHW tensor. In training mode the
  // batch statistics are used and (optionally) folded into the running stats
  // with `momentum`; in eval mode the running stats are used.
  Var batch_norm(Var x, Var gamma, Var beta, Tensor<T>* running_mean, Tensor<T>* running_var, bool training,
                 bool update_running, T momentum, T eps) {
    const Tensor<T>& vx = value(x);
    if (vx.rank() != 4) throw std::invalid_argument("batch_norm: expects NCHW input");
    const auto [N, C, H, W] = dims4(vx);
    if (training && N < 2) throw std::invalid_argument("batch_norm: train mode requires batch size >= 2, got " + std::to_string(N));
    const Tensor<T>& vg = value(gamma);
    const Tensor<T>& vb = value(beta);
    if (vg.numel() != C || vb.numel() != C)
      throw std::invalid_argument("batch_norm: gamma/beta must have " + std::to_string(C) + " channels");
    if (running_mean->numel() != C || running_var->numel() != C)
      throw std::invalid_argument("batch_norm: running stats must have " + std::to_string(C) + " channels");

    const std::int64_t M = N * H * W;
    Tensor<T> xhat(vx.shape);
    std::vector<T> inv_std(static_cast<std::size_t>(C));
    Tensor<T> out(vx.shape);
    for (std::int64_t c = 0; c < C; ++c) {
      T m, v;
      if (training) {
        T acc = T(0);
        for_channel(vx, c, [&](T val) { acc += val; });
        m = acc / static_cast<T>(M);
        T acc2 = T(0);
        for_channel(vx, c, [&](T val) { acc2 += (val - m) * (val - m); });
        v = acc2 / static_cast<T>(M);  // biased variance
        if (update_running) {
          (*running_mean)[c] = momentum * (*running_mean)[c] + (T(1) - momentum) * m;
          (*running_var)[c] = momentum * (*running_var)[c] + (T(1) - momentum) * v;
        }
      } else {
        m = (*running_mean)[c];
        v = (*running_var)[c];
      }
      const T istd = T(1) / std::sqrt(v + eps);
      inv_std[static_cast<std::size_t>(c)] = istd;
      const T g = vg[c], b = vb[c];
      transform_channel(vx, xhat, out, c, m, istd, g, b);
    }
    debug_check_finite(out, "batch_norm");
    bool rg = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
    Var o = push(std::move(out), rg, nullptr);
    auto saved_xhat = std::make_shared<Tensor<T>>(std::move(xhat));
    auto saved_istd = std::make_shared<std::vector<T>>(std::move(inv_std));
    node(o).backward = [x, gamma, beta, o, saved_xhat, saved_istd, training](Tape& t) {
      const Tensor<T>& g = t.node(o).grad;
      const Tensor<T>& xh = *saved_xhat;
      const auto [N2, C2, H2, W2] = dims4(g);
      const std::int64_t M2 = N2 * H2 * W2;
      const Tensor<T>& vg2 = t.value(gamma);
      for (std::int64_t c = 0; c < C2; ++c) {
        T sum_g = T(0), sum_gx = T(0);
        for_channel2(g, xh, c, [&](T gv, T xv) {
          sum_g += gv;
          sum_gx += gv * xv;
        });
        if (t.needs_grad(beta)) t.grad_buf(beta)[c] += sum_g;
        if (t.needs_grad(gamma)) t.grad_buf(gamma)[c] += sum_gx;
        if (t.needs_grad(x)) {
          Tensor<T>& gx = t.grad_buf(x);
          const T gam = vg2[c];
          const T istd = (*saved_istd)[static_cast<std::size_t>(c)];
          if (training) {
            const T inv_m = T(1) / static_cast<T>(M2);
            accum_channel(g, xh, gx, c, [&](T gv, T xv) {
              return gam * istd * (gv - inv_m * sum_g - xv * inv_m * sum_gx);
            });
          } else {
            accum_channel(g, xh, gx, c, [&](T gv, T) { return gam * istd * gv; });
          }
        }
      }
    };
    return o;
  }

  // ---- shape ops ----

  // axis 0 (batch) or 1 (channels); remaining dims must match
  Var concat(Var a, Var b, std::size_t axis) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    if (va.rank() != vb.rank() || axis >= va.rank())
      throw std::invalid_argument("concat: rank mismatch " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
    for (std::size_t i = 0; i < va.rank(); ++i)
      if (i != axis && va.shape[i] != vb.shape[i])
        throw std::invalid_argument("concat: dim " + std::to_string(i) + " mismatch " + shape_str(va.shape) +
                                    " vs " + shape_str(vb.shape));
    Shape os = va.shape;
    os[axis] += vb.shape[axis];
    const auto [outer, mida, inner] = omi(va.shape, axis);
    const std::int64_t midb = vb.shape[axis];
    Tensor<T> out(os);
    for (std::int64_t u = 0; u < outer; ++u) {
      std::copy_n(va.data.data() + u * mida * inner, mida * inner, out.data.data() + u * (mida + midb) * inner);
      std::copy_n(vb.data.data() + u * midb * inner, midb * inner,
                  out.data.data() + (u * (mida + midb) + mida) * inner);
    }
    Var o = push(std::move(out), needs_grad(a) || needs_grad(b), nullptr);
    node(o).backward = [a, b, o, axis](Tape& t) {
      const Tensor<T>& g = t.node(o).grad;
      const Tensor<T>& va2 = t.value(a);
      const auto [outer2, mida2, inner2] = omi(va2.shape, axis);
      const std::int64_t midb2 = t.value(b).shape[axis];
      if (t.needs_grad(a)) {
        Tensor<T>& ga = t.grad_buf(a);
        for (std::int64_t u = 0; u < outer2; ++u)
          for (std::int64_t i = 0; i < mida2 * inner2; ++i)
            ga[u * mida2 * inner2 + i] += g[u * (mida2 + midb2) * inner2 + i];
      }
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad_buf(b);
        for (std::int64_t u = 0; u < outer2; ++u)
          for (std::int64_t i = 0; i < midb2 * inner2; ++i)
            gb[u * midb2 * inner2 + i] += g[(u * (mida2 + midb2) + mida2) * inner2 + i];
      }
    };
    return o;
  }

  // first k slices along `axis` and the rest
  std::pair<Var, Var> split(Var x, std::int64_t k, std::size_t axis) {
    const Tensor<T>& vx = value(x);
    if (axis >= vx.rank()) throw std::invalid_argument("split: bad axis");
    const std::int64_t mid = vx.shape[axis];
    if (k <= 0 || k >= mid)
      throw std::invalid_argument("split: k=" + std::to_string(k) + " out of range for " + shape_str(vx.shape));
    Var first = slice_axis(x, axis, 0, k);
    Var second = slice_axis(x, axis, k, mid - k);
    return {first, second};
  }

  Var concat_channels(Var a, Var b) { return concat(a, b, 1); }
  std::pair<Var, Var> split_channels(Var x, std::int64_t k) { return split(x, k, 1); }
  Var concat_batch(Var a, Var b) { return concat(a, b, 0); }
  std::pair<Var, Var> split_batch(Var x, std::int64_t k) { return split(x, k, 0); }

  // ---- pooling and affine ----

  // NCHW -> {N, C} mean over spatial dims
  Var global_avg_pool(Var x) {
    const Tensor<T>& vx = value(x);
    if (vx.rank() != 4) throw std::invalid_argument("global_avg_pool: expects NCHW");
    const auto [N, C, H, W] = dims4(vx);
    Tensor<T> out({N, C});
    const std::int64_t P = H * W;
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        const T* row = vx.data.data() + (n * C + c) * P;
        T acc = T(0);
        for (std::int64_t p = 0; p < P; ++p) acc += row[p];
        out[n * C + c] = acc / static_cast<T>(P);
      }
    Var o = push(std::move(out), needs_grad(x), nullptr);
    node(o).backward = [x, o](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& g = t.node(o).grad;
      Tensor<T>& gx = t.grad_buf(x);
      const auto [N2, C2, H2, W2] = dims4(gx);
      const std::int64_t P2 = H2 * W2;
      for (std::int64_t n = 0; n < N2; ++n)
        for (std::int64_t c = 0; c < C2; ++c) {
          const T s = g[n * C2 + c] / static_cast<T>(P2);
          T* row = gx.data.data() + (n * C2 + c) * P2;
          for (std::int64_t p = 0; p < P2; ++p) row[p] += s;
        }
    };
    return o;
  }

  // x {N,F} * w {F,G} + b {G}
  Var linear(Var x, Var w, Var b) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vw = value(w);
    const Tensor<T>& vb = value(b);
    if (vx.rank() != 2 || vw.rank() != 2 || vx.shape[1] != vw.shape[0] || vb.numel() != vw.shape[1])
      throw std::invalid_argument("linear: bad shapes " + shape_str(vx.shape) + " x " + shape_str(vw.shape));
    const std::int64_t N = vx.shape[0], F = vx.shape[1], G = vw.shape[1];
    Tensor<T> out({N, G});
    detail::gemm_nn(N, G, F, vx.data.data(), vw.data.data(), out.data.data());
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t g = 0; g < G; ++g) out[n * G + g] += vb[g];
    Var o = push(std::move(out), needs_grad(x) || needs_grad(w) || needs_grad(b), nullptr);
    node(o).backward = [x, w, b, o](Tape& t) {
      const Tensor<T>& g = t.node(o).grad;
      const Tensor<T>& vx2 = t.value(x);
      const Tensor<T>& vw2 = t.value(w);
      const std::int64_t N2 = vx2.shape[0], F2 = vx2.shape[1], G2 = vw2.shape[1];
      if (t.needs_grad(x)) detail::gemm_nt(N2, F2, G2, g.data.data(), vw2.data.data(), t.grad_buf(x).data.data());
      if (t.needs_grad(w)) detail::gemm_tn(F2, G2, N2, vx2.data.data(), g.data.data(), t.grad_buf(w).data.data());
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad_buf(b);
        for (std::int64_t n = 0; n < N2; ++n)
          for (std::int64_t j = 0; j < G2; ++j) gb[j] += g[n * G2 + j];
      }
    };
    return o;
  }

  // ---- backward ----

  void backward(Var loss) {
    check_var(loss);
    if (backward_done_) throw std::runtime_error("backward: tape already consumed; build a fresh tape");
    if (value(loss).numel() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(value(loss).shape));
    backward_done_ = true;
    grad_buf(loss)[0] = T(1);
    for (std::int32_t i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && n.requires_grad && n.grad.numel() > 0) n.backward(*this);
    }
  }

  // ---- accessors ----

  const Tensor<T>& value(Var v) const {
    check_var(v);
    return nodes_[static_cast<std::size_t>(v.idx)].value;
  }

  // gradient of a var after backward(); zeros if it never received any
  const Tensor<T>& grad(Var v) {
    check_var(v);
    return grad_buf(v);
  }

  bool needs_grad(Var v) const {
    check_var(v);
    return nodes_[static_cast<std::size_t>(v.idx)].requires_grad;
  }

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  // kink recording: inputs of |.| and leaky_relu, used by the finite
  // difference harness to exclude parameters whose perturbation crosses a kink
  void set_record_kinks(bool on) { record_kinks_ = on; }
  const std::vector<T>& kink_values() const { return kink_values_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until touched
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  bool record_kinks_ = false;
  std::vector<T> kink_values_;

  void check_var(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
      throw std::runtime_error("stale or invalid tape var");
  }

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.idx)]; }

  Tensor<T>& grad_buf(Var v) {
    Node& n = node(v);
    if (n.grad.numel() == 0) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  Var push(Tensor<T> value, bool requires_grad, std::function<void(Tape&)> bw) {
    if (backward_done_) throw std::runtime_error("tape already consumed by backward; build a fresh tape");
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, requires_grad, std::move(bw)});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  void record_kinks(const Tensor<T>& v) {
    if (record_kinks_) kink_values_.insert(kink_values_.end(), v.data.begin(), v.data.end());
  }

  template <typename F>
  Var ewise_binary(Var a, Var b, const char* name, F f, T da, T db) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    check_same_shape(va, vb, name);
    Tensor<T> out(va.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = f(va[i], vb[i]);
    debug_check_finite(out, name);
    Var o = push(std::move(out), needs_grad(a) || needs_grad(b), nullptr);
    node(o).backward = [a, b, o, da, db](Tape& t) {
      const Tensor<T>& g = t.node(o).grad;
      if (t.needs_grad(a)) {
        Tensor<T>& ga = t.grad_buf(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * da;
      }
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad_buf(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * db;
      }
    };
    return o;
  }

  Var slice_axis(Var x, std::size_t axis, std::int64_t start, std::int64_t len) {
    const Tensor<T>& vx = value(x);
    const auto [outer, mid, inner] = omi(vx.shape, axis);
    Shape os = vx.shape;
    os[axis] = len;
    Tensor<T> out(os);
    for (std::int64_t u = 0; u < outer; ++u)
      std::copy_n(vx.data.data() + (u * mid + start) * inner, len * inner, out.data.data() + u * len * inner);
    Var o = push(std::move(out), needs_grad(x), nullptr);
    node(o).backward = [x, o, axis, start, len](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& g = t.node(o).grad;
      Tensor<T>& gx = t.grad_buf(x);
      const auto [outer2, mid2, inner2] = omi(gx.shape, axis);
      for (std::int64_t u = 0; u < outer2; ++u)
        for (std::int64_t i = 0; i < len * inner2; ++i)
          gx[(u * mid2 + start) * inner2 + i] += g[u * len * inner2 + i];
    };
    return o;
  }

  static std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t> dims4(const Tensor<T>& t) {
    return {t.shape[0], t.shape[1], t.shape[2], t.shape[3]};
  }

  static std::tuple<std::int64_t, std::int64_t, std::int64_t> omi(const Shape& s, std::size_t axis) {
    std::int64_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    return {outer, s[axis], inner};
  }

  static T stable_sigmoid(T x) {
    if (x >= T(0)) {
      const T e = std::exp(-x);
      return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  // softplus(t) = log(1 + exp(t)) without overflow
  static T softplus(T t) {
    const T m = t > T(0) ? t : T(0);
    return m + std::log1p(std::exp(-std::abs(t)));
  }

  template <typename F>
  static void for_channel(const Tensor<T>& x, std::int64_t c, F f) {
    const auto [N, C, H, W] = dims4(x);
    const std::int64_t P = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* row = x.data.data() + (n * C + c) * P;
      for (std::int64_t p = 0; p < P; ++p) f(row[p]);
    }
  }

  template <typename F>
  static void for_channel2(const Tensor<T>& a, const Tensor<T>& b, std::int64_t c, F f) {
    const auto [N, C, H, W] = dims4(a);
    const std::int64_t P = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* ra = a.data.data() + (n * C + c) * P;
      const T* rb = b.data.data() + (n * C + c) * P;
      for (std::int64_t p = 0; p < P; ++p) f(ra[p], rb[p]);
    }
  }

  static void transform_channel(const Tensor<T>& x, Tensor<T>& xhat, Tensor<T>& out, std::int64_t c, T m, T istd,
                                T g, T b) {
    const auto [N, C, H, W] = dims4(x);
    const std::int64_t P = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* rx = x.data.data() + (n * C + c) * P;
      T* rh = xhat.data.data() + (n * C + c) * P;
      T* ro = out.data.data() + (n * C + c) * P;
      for (std::int64_t p = 0; p < P; ++p) {
        const T h = (rx[p] - m) * istd;
        rh[p] = h;
        ro[p] = g * h + b;
      }
    }
  }

  template <typename F>
  static void accum_channel(const Tensor<T>& g, const Tensor<T>& xh, Tensor<T>& gx, std::int64_t c, F f) {
    const auto [N, C, H, W] = dims4(g);
    const std::int64_t P = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* rg = g.data.data() + (n * C + c) * P;
      const T* rh = xh.data.data() + (n * C + c) * P;
      T* rx = gx.data.data() + (n * C + c) * P;
      for (std::int64_t p = 0; p < P; ++p) rx[p] += f(rg[p], rh[p]);
    }
  }
};

}  // namespace genegan
