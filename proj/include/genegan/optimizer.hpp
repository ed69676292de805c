// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// RMSProp (Tieleman-Hinton rule), momentum-free:
//   acc <- decay*acc + (1-decay)*g^2
//   p   <- p - lr * g / (sqrt(acc) + eps)

#pragma once

#include <cmath>
#include <map>
#include <string>

#include "genegan/tensor.hpp"

namespace genegan {

template <typename T>
struct RmsPropState {
  std::map<std::string, Tensor<T>> acc;  // same shapes as the parameters

  Tensor<T>& accumulator(const std::string& name, const Shape& shape) {
    auto it = acc.find(name);
    if (it == acc.end()) it = acc.emplace(name, Tensor<T>(shape)).first;
    return it->second;
  }
};

template <typename T>
void rmsprop_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& acc, T lr, T decay, T eps) {
  check_same_shape(param, grad, "rmsprop_step");
  check_same_shape(param, acc, "rmsprop_step");
  for (std::int64_t i = 0; i < param.numel(); ++i) {
    const T g = grad[i];
    acc[i] = decay * acc[i] + (T(1) - decay) * g * g;
    param[i] -= lr * g / (std::sqrt(acc[i]) + eps);
  }
}

}  // namespace genegan
