// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// im2col/GEMM convolution kernels shared by conv2d and its transpose.
// Every output element is produced by exactly one serial reduction, so
// results are bit-identical for any OpenMP thread count.

#pragma once

#include <cstdint>
#include <vector>

#include "genegan/tensor.hpp"

namespace genegan::detail {

using i64 = std::int64_t;

inline i64 conv_out_dim(i64 in, i64 kernel, i64 stride, i64 pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// col is (C*kh*kw) x (OH*OW), row-major; zero padding.
template <typename T>
void im2col(const T* x, i64 C, i64 H, i64 W, i64 kh, i64 kw, i64 stride, i64 pad,
            i64 OH, i64 OW, T* col) {
  const i64 P = OH * OW;
  for (i64 c = 0; c < C; ++c) {
    for (i64 ki = 0; ki < kh; ++ki) {
      for (i64 kj = 0; kj < kw; ++kj) {
        T* crow = col + ((c * kh + ki) * kw + kj) * P;
        for (i64 oy = 0; oy < OH; ++oy) {
          const i64 iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= H) {
            for (i64 ox = 0; ox < OW; ++ox) crow[oy * OW + ox] = T(0);
            continue;
          }
          const T* xrow = x + (c * H + iy) * W;
          for (i64 ox = 0; ox < OW; ++ox) {
            const i64 ix = ox * stride - pad + kj;
            crow[oy * OW + ox] = (ix >= 0 && ix < W) ? xrow[ix] : T(0);
          }
        }
      }
    }
  }
}

// scatter-add of a col buffer back into an image, inverse access pattern of im2col
template <typename T>
void col2im_accum(const T* col, i64 C, i64 H, i64 W, i64 kh, i64 kw, i64 stride,
                  i64 pad, i64 OH, i64 OW, T* x) {
  const i64 P = OH * OW;
  for (i64 c = 0; c < C; ++c) {
    for (i64 ki = 0; ki < kh; ++ki) {
      for (i64 kj = 0; kj < kw; ++kj) {
        const T* crow = col + ((c * kh + ki) * kw + kj) * P;
        for (i64 oy = 0; oy < OH; ++oy) {
          const i64 iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= H) continue;
          T* xrow = x + (c * H + iy) * W;
          for (i64 ox = 0; ox < OW; ++ox) {
            const i64 ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < W) xrow[ix] += crow[oy * OW + ox];
          }
        }
      }
    }
  }
}

// C(MxN) += A(MxK) * B(KxN)
template <typename T>
void gemm_nn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C) {
  for (i64 i = 0; i < M; ++i) {
    T* crow = C + i * N;
    const T* arow = A + i * K;
    for (i64 k = 0; k < K; ++k) {
      const T a = arow[k];
      const T* brow = B + k * N;
      for (i64 j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// C(MxN) += A(MxK) * B(NxK)^T   (rows of B are dotted with rows of A)
template <typename T>
void gemm_nt(i64 M, i64 N, i64 K, const T* A, const T* B, T* C) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < M; ++i) {
    T* crow = C + i * N;
    const T* arow = A + i * K;
    for (i64 j = 0; j < N; ++j) {
      const T* brow = B + j * K;
      T acc = T(0);
      for (i64 k = 0; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  }
}

// C(MxN) += A(KxM)^T * B(KxN)
template <typename T>
void gemm_tn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < M; ++i) {
    T* crow = C + i * N;
    for (i64 k = 0; k < K; ++k) {
      const T a = A[k * M + i];
      const T* brow = B + k * N;
      for (i64 j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// x: N C H W, w: O C kh kw, bias: O or null -> out: N O OH OW (pre-zeroed by caller)
template <typename T>
void conv_forward(const T* x, const T* w, const T* bias, i64 N, i64 C, i64 H, i64 W,
                  i64 O, i64 kh, i64 kw, i64 stride, i64 pad, i64 OH, i64 OW, T* out) {
  const i64 K = C * kh * kw;
  const i64 P = OH * OW;
#pragma omp parallel for schedule(static)
  for (i64 n = 0; n < N; ++n) {
    std::vector<T> col(static_cast<std::size_t>(K * P));
    im2col(x + n * C * H * W, C, H, W, kh, kw, stride, pad, OH, OW, col.data());
    T* on = out + n * O * P;
    gemm_nn(O, P, K, w, col.data(), on);
    if (bias) {
      for (i64 o = 0; o < O; ++o)
        for (i64 p = 0; p < P; ++p) on[o * P + p] += bias[o];
    }
  }
}

// gout: N O OH OW, w: O C kh kw -> gx: N C H W (pre-zeroed). This is the exact
// adjoint of conv_forward, also used as the forward pass of conv2d_transpose.
template <typename T>
void conv_input_grad(const T* gout, const T* w, i64 N, i64 C, i64 H, i64 W, i64 O,
                     i64 kh, i64 kw, i64 stride, i64 pad, i64 OH, i64 OW, T* gx) {
  const i64 K = C * kh * kw;
  const i64 P = OH * OW;
#pragma omp parallel for schedule(static)
  for (i64 n = 0; n < N; ++n) {
    std::vector<T> colg(static_cast<std::size_t>(K * P), T(0));
    // colg = w^T * gout_n
    for (i64 o = 0; o < O; ++o) {
      const T* grow = gout + (n * O + o) * P;
      const T* wrow = w + o * K;
      for (i64 k = 0; k < K; ++k) {
        const T a = wrow[k];
        T* crow = colg.data() + k * P;
        for (i64 p = 0; p < P; ++p) crow[p] += a * grow[p];
      }
    }
    col2im_accum(colg.data(), C, H, W, kh, kw, stride, pad, OH, OW, gx + n * C * H * W);
  }
}

// x: N C H W, gout: N O OH OW -> gw: O C kh kw, gbias: O (both pre-zeroed; gbias may be null)
template <typename T>
void conv_weight_grad(const T* x, const T* gout, i64 N, i64 C, i64 H, i64 W, i64 O,
                      i64 kh, i64 kw, i64 stride, i64 pad, i64 OH, i64 OW, T* gw, T* gbias) {
  const i64 K = C * kh * kw;
  const i64 P = OH * OW;
  std::vector<T> col(static_cast<std::size_t>(K * P));
  for (i64 n = 0; n < N; ++n) {
    im2col(x + n * C * H * W, C, H, W, kh, kw, stride, pad, OH, OW, col.data());
    gemm_nt(O, K, P, gout + n * O * P, col.data(), gw);
    if (gbias) {
      const T* gn = gout + n * O * P;
      for (i64 o = 0; o < O; ++o) {
        T acc = T(0);
        for (i64 p = 0; p < P; ++p) acc += gn[o * P + p];
        gbias[o] += acc;
      }
    }
  }
}

}  // namespace genegan::detail
