#pragma once

// Central-difference verification of reverse-mode gradients. Intended to be
// instantiated at double precision so the finite differences have headroom
// over the 1e-3 relative tolerance used throughout the test suite.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gfrnet/errors.hpp"
#include "gfrnet/tensor.hpp"

namespace gfrnet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t probes = 0;
};

namespace detail {

inline double rel_err(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  if (denom < 1e-8) return std::abs(a - b);  // both effectively zero
  return std::abs(a - b) / denom;
}

}  // namespace detail

// Central differences of a scalar-valued function at selected elements of x.
// fn must be a pure function of the data of x (no parameter mutation).
template <class T>
std::vector<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& fn, Tensor<T> x,
                                      T step, const std::vector<std::size_t>& indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    const T orig = x.data()[idx];
    x.data()[idx] = orig + step;
    const T fp = fn(x);
    x.data()[idx] = orig - step;
    const T fm = fn(x);
    x.data()[idx] = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
      throw NumericError("finite_difference_grad: non-finite function value");
    out.push_back((fp - fm) / (T(2) * step));
  }
  return out;
}

// Compares a precomputed analytic gradient against central differences.
template <class T>
GradCheckReport grad_check_against(const std::function<T(const Tensor<T>&)>& fn,
                                   const Tensor<T>& x, const std::vector<T>& analytic, T step,
                                   const std::vector<std::size_t>& indices) {
  const std::vector<T> numeric = finite_difference_grad(fn, x, step, indices);
  GradCheckReport rep;
  rep.probes = indices.size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double a = static_cast<double>(analytic[indices[i]]);
    const double n = static_cast<double>(numeric[i]);
    const double e = detail::rel_err(a, n);
    if (e >= rep.max_rel_err) {
      rep.max_rel_err = e;
      rep.worst_index = indices[i];
      rep.analytic_at_worst = a;
      rep.numeric_at_worst = n;
    }
  }
  return rep;
}

// Full check: runs the analytic backward pass, then probes either every
// element (max_probes == 0) or a seeded random subset. fn builds the autograd
// graph and returns the scalar loss tensor.
template <class T>
GradCheckReport grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& fn,
                           const Tensor<T>& input, T step = T(1e-4), std::size_t max_probes = 0,
                           std::uint64_t probe_seed = 0) {
  Tensor<T> x = input.detach();
  x.set_requires_grad(true);
  Tensor<T> loss = fn(x);
  if (loss.size() != 1) throw UsageError("grad_check: fn must return a scalar tensor");
  if (!std::isfinite(static_cast<double>(loss.item())))
    throw NumericError("grad_check: non-finite loss");
  loss.backward();
  const std::vector<T> analytic = x.grad();

  std::vector<std::size_t> indices;
  if (max_probes == 0 || max_probes >= x.size()) {
    indices.resize(x.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  } else {
    std::mt19937_64 rng(probe_seed);
    std::uniform_int_distribution<std::size_t> dist(0, x.size() - 1);
    for (std::size_t i = 0; i < max_probes; ++i) indices.push_back(dist(rng));
  }

  std::function<T(const Tensor<T>&)> value_fn = [&fn](const Tensor<T>& xx) {
    return fn(xx).item();
  };
  return grad_check_against(value_fn, x, analytic, step, indices);
}

// Multi-step variant: each probe is accepted at its best step size. A single
// central-difference step can straddle a ReLU/max kink and report a spurious
// mismatch there; a genuinely wrong gradient disagrees at every step.
template <class T>
GradCheckReport grad_check_multi(const std::function<Tensor<T>(const Tensor<T>&)>& fn,
                                 const Tensor<T>& input, const std::vector<T>& steps,
                                 std::size_t max_probes = 0, std::uint64_t probe_seed = 0) {
  if (steps.empty()) throw UsageError("grad_check_multi: need at least one step size");
  Tensor<T> x = input.detach();
  x.set_requires_grad(true);
  Tensor<T> loss = fn(x);
  if (loss.size() != 1) throw UsageError("grad_check_multi: fn must return a scalar tensor");
  loss.backward();
  const std::vector<T> analytic = x.grad();

  std::vector<std::size_t> indices;
  if (max_probes == 0 || max_probes >= x.size()) {
    indices.resize(x.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  } else {
    std::mt19937_64 rng(probe_seed);
    std::uniform_int_distribution<std::size_t> dist(0, x.size() - 1);
    for (std::size_t i = 0; i < max_probes; ++i) indices.push_back(dist(rng));
  }

  std::function<T(const Tensor<T>&)> value_fn = [&fn](const Tensor<T>& xx) {
    return fn(xx).item();
  };
  GradCheckReport rep;
  rep.probes = indices.size();
  for (std::size_t idx : indices) {
    const double a = static_cast<double>(analytic[idx]);
    double best = std::numeric_limits<double>::infinity();
    double best_num = 0.0;
    for (T step : steps) {
      const double n = static_cast<double>(
          finite_difference_grad<T>(value_fn, x, step, {idx}).front());
      const double e = detail::rel_err(a, n);
      if (e < best) {
        best = e;
        best_num = n;
      }
    }
    if (best >= rep.max_rel_err) {
      rep.max_rel_err = best;
      rep.worst_index = idx;
      rep.analytic_at_worst = a;
      rep.numeric_at_worst = best_num;
    }
  }
  return rep;
}

}  // namespace gfrnet
