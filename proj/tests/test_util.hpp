#pragma once

#include <random>
#include <vector>

#include "motioncode/tensor.hpp"

namespace motioncode::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape dims, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> values(shape_size(dims));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(dims), std::move(values), requires_grad);
}

template <typename T>
std::vector<T> copy_values(const Tensor<T>& t) {
  return std::vector<T>(t.values().begin(), t.values().end());
}

}  // namespace motioncode::testing
