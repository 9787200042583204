#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "gfrnet/tensor.hpp"

namespace gfrnet {

using Rng = std::mt19937_64;

// Kaiming-style fan-in normal initialization for conv weights.
template <class T>
void kaiming_init(Tensor<T>& weight, Rng& rng) {
  const Shape s = weight.shape();
  const double fan_in = static_cast<double>(s.c) * s.h * s.w;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : weight.data()) v = static_cast<T>(dist(rng));
}

template <class T>
void uniform_fill(Tensor<T>& t, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

template <class T>
void normal_fill(Tensor<T>& t, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

}  // namespace gfrnet
