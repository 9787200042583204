#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gfrnet/gradcheck.hpp"
#include "gfrnet/rng.hpp"
#include "gfrnet/tensor.hpp"

using namespace gfrnet;

namespace {

TensorD random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(s);
  uniform_fill(t, rng, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("linear function gradient is near exact") {
  Rng rng(1);
  TensorD x = random_tensor({2, 3, 4, 4}, rng);
  auto rep = grad_check<double>([](const TensorD& t) { return sum_all(t); }, x);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("sum(sigmoid(conv2d)) gradient matches finite differences") {
  Rng rng(2);
  TensorD w({3, 2, 3, 3});
  TensorD b({1, 3, 1, 1});
  kaiming_init(w, rng);
  uniform_fill(b, rng, -0.1, 0.1);
  TensorD x = random_tensor({2, 2, 6, 6}, rng);
  auto fn = [&](const TensorD& t) { return sum_all(sigmoid(conv2d(t, w, b, 1, 1))); };
  auto rep = grad_check<double>(fn, x);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradient property over randomized ops and seeds") {
  // Every differentiable primitive, randomized small shapes, 100+ seeds
  // spread across the op set.
  int seed = 0;
  auto check = [&](auto make_fn, Shape in_shape, int trials, double lo = -1.0, double hi = 1.0) {
    for (int t = 0; t < trials; ++t) {
      Rng rng(1000 + seed++);
      TensorD x = random_tensor(in_shape, rng, lo, hi);
      auto fn = make_fn(rng);
      auto rep = grad_check<double>(fn, x, 1e-4, 64, 99 + seed);
      CAPTURE(seed);
      CHECK(rep.max_rel_err < 1e-3);
    }
  };

  // relu has a kink at 0; shift inputs away from it.
  check(
      [](Rng&) {
        return [](const TensorD& x) { return sum_all(relu(add_scalar(x, 0.05))); };
      },
      {2, 3, 4, 4}, 10);
  check(
      [](Rng&) {
        return [](const TensorD& x) { return sum_all(sigmoid(x)); };
      },
      {2, 3, 4, 4}, 10);
  check(
      [](Rng& rng) {
        TensorD w({2, 3, 3, 3}), b({1, 2, 1, 1});
        kaiming_init(w, rng);
        uniform_fill(b, rng, -0.5, 0.5);
        return [w, b](const TensorD& x) { return sum_all(mul(conv2d(x, w, b, 1, 1), conv2d(x, w, b, 1, 1))); };
      },
      {2, 3, 5, 5}, 10);
  check(
      [](Rng& rng) {
        TensorD other({1, 3, 4, 4});
        uniform_fill(other, rng, 0.5, 1.5);
        return [other](const TensorD& x) {
          return sum_all(div_eps(mul(x, other), add(x, other), 1e-6));
        };
      },
      {5, 3, 4, 4}, 10, 0.2, 1.0);
  check(
      [](Rng&) {
        return [](const TensorD& x) {
          TensorD parts = sum_all(mul(gap(x), gap(x))) + sum_all(mul(xpool(x), xpool(x)));
          return parts + sum_all(mul(ypool(x), ypool(x))) + sum_all(mul(slice_sum(x), slice_sum(x)));
        };
      },
      {3, 2, 4, 4}, 10);
  check(
      [](Rng&) {
        return [](const TensorD& x) { return sum_all(mul(slice_max(x), slice_max(x))); };
      },
      {4, 2, 3, 3}, 10);
  check(
      [](Rng&) {
        return [](const TensorD& x) {
          TensorD sm = softmax_slices(x);
          return sum_all(mul(sm, sm));
        };
      },
      {6, 1, 1, 1}, 10);
  check(
      [](Rng&) {
        return [](const TensorD& x) { return sum_all(resize_bilinear(x, 7, 9)); };
      },
      {2, 2, 4, 4}, 10);
  check(
      [](Rng&) {
        return [](const TensorD& x) {
          auto [a, b] = split_channels(concat_channels(x, x), 3);
          return sum_all(mul(a, b));
        };
      },
      {2, 3, 3, 3}, 10);
  check(
      [](Rng&) {
        return [](const TensorD& x) {
          TensorD j = concat_rows(xpool(x), transpose_hw(ypool(x)));
          auto [p, q] = split_rows(j, x.shape().h);
          return sum_all(mul(p, p)) + sum_all(mul(q, q));
        };
      },
      {2, 3, 4, 5}, 10);
  check(
      [](Rng& rng) {
        TensorD g({1, 3, 1, 1}), b({1, 3, 1, 1});
        uniform_fill(g, rng, 0.5, 1.5);
        uniform_fill(b, rng, -0.5, 0.5);
        return [g, b](const TensorD& x) {
          BatchNormStats<double> stats(3);
          TensorD y = batchnorm(x, g, b, stats, Phase::train);
          return sum_all(mul(y, y));
        };
      },
      {3, 3, 4, 4}, 10);
  check(
      [](Rng&) {
        return [](const TensorD& x) { return sum_all(mul(broadcast_slices(x, 4), broadcast_slices(x, 4))); };
      },
      {1, 2, 3, 3}, 5);
  check(
      [](Rng&) {
        return [](const TensorD& x) { return mean_all(log_t(add_scalar(sigmoid(x), 0.01))); };
      },
      {2, 2, 3, 3}, 5);
  CHECK(seed >= 100);
}

TEST_CASE("batchnorm parameter gradients") {
  Rng rng(55);
  TensorD x = random_tensor({3, 2, 4, 4}, rng);
  TensorD gamma({1, 2, 1, 1}), beta({1, 2, 1, 1});
  uniform_fill(gamma, rng, 0.5, 1.5);
  uniform_fill(beta, rng, -0.5, 0.5);
  auto fn = [&](const TensorD& g) {
    BatchNormStats<double> stats(2);
    TensorD y = batchnorm(x, g, beta, stats, Phase::train);
    return sum_all(mul(y, y));
  };
  auto rep = grad_check<double>(fn, gamma);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("conv2d weight gradients") {
  Rng rng(56);
  TensorD x = random_tensor({2, 3, 5, 5}, rng);
  TensorD w({4, 3, 3, 3}), b({1, 4, 1, 1});
  kaiming_init(w, rng);
  uniform_fill(b, rng, -0.5, 0.5);
  auto fn_w = [&](const TensorD& ww) { return sum_all(sigmoid(conv2d(x, ww, b, 1, 1))); };
  CHECK(grad_check<double>(fn_w, w).max_rel_err < 1e-3);
  auto fn_b = [&](const TensorD& bb) { return sum_all(sigmoid(conv2d(x, w, bb, 1, 1))); };
  CHECK(grad_check<double>(fn_b, b).max_rel_err < 1e-3);
}

TEST_CASE("corrupted analytic gradient is detected") {
  Rng rng(77);
  TensorD x = random_tensor({2, 2, 3, 3}, rng);
  auto fn = [](const TensorD& t) { return sum_all(sigmoid(t)); };

  TensorD probe = x.detach();
  probe.set_requires_grad(true);
  fn(probe).backward();
  std::vector<double> corrupted = probe.grad();
  corrupted[3] *= 1.5;  // deliberate backward-rule corruption

  std::vector<std::size_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::function<double(const TensorD&)> value_fn = [&fn](const TensorD& t) { return fn(t).item(); };
  auto rep = grad_check_against<double>(value_fn, x, corrupted, 1e-4, all);
  CHECK(rep.max_rel_err > 0.1);
  CHECK(rep.worst_index == 3);
}

TEST_CASE("non-finite function value raises numeric error") {
  TensorD x = TensorD::scalar(2.0);
  std::function<double(const TensorD&)> bad = [](const TensorD& t) {
    return std::log(-t.item());  // NaN
  };
  std::vector<std::size_t> idx{0};
  CHECK_THROWS_AS(finite_difference_grad<double>(bad, x, 1e-4, idx), NumericError);
}
