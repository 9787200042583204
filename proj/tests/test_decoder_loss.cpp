#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gfrnet/decoder.hpp"
#include "gfrnet/gradcheck.hpp"
#include "gfrnet/loss.hpp"

using namespace gfrnet;

namespace {

template <class T>
std::array<Tensor<T>, 4> random_feats(int channels, int top, Rng& rng) {
  std::array<Tensor<T>, 4> feats;
  int s = top;
  for (int k = 0; k < 4; ++k, s /= 2) {
    feats[k] = Tensor<T>({1, channels, s, s});
    normal_fill(feats[k], rng);
  }
  return feats;
}

TensorF binary_map(int h, int w, Rng& rng) {
  TensorF g({1, 1, h, w});
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& v : g.data()) v = float(coin(rng));
  return g;
}

template <class T>
Tensor<T> permute_pixels(const Tensor<T>& x, const std::vector<int>& perm) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) y.data()[i] = x.data()[perm[i]];
  return y;
}

}  // namespace

TEST_CASE("decoder output sizes track the input resolution") {
  for (int res : {64, 128, 256}) {
    Rng rng(1);
    Decoder<float> dec(8, rng);
    auto feats = random_feats<float>(8, res / 2, rng);
    auto preds = dec.forward(feats, res, res, Phase::eval);
    for (const auto& p : preds) {
      CHECK(p.shape() == Shape{1, 1, res, res});
      for (float v : p.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
      }
    }
  }
}

TEST_CASE("zero features and zero parameters give uniform 0.5 maps") {
  Rng rng(2);
  Decoder<float> dec(4, rng);
  ParamRegistry<float> reg;
  dec.collect("dec", reg);
  for (auto& p : reg.params) std::fill(p.tensor.data().begin(), p.tensor.data().end(), 0.0f);

  std::array<TensorF, 4> feats = {TensorF::zeros({1, 4, 32, 32}), TensorF::zeros({1, 4, 16, 16}),
                                  TensorF::zeros({1, 4, 8, 8}), TensorF::zeros({1, 4, 4, 4})};
  auto preds = dec.forward(feats, 64, 64, Phase::eval);
  for (const auto& p : preds)
    for (float v : p.data()) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("non-dyadic feature ladder is rejected") {
  Rng rng(3);
  Decoder<float> dec(4, rng);
  std::array<TensorF, 4> feats = {TensorF::zeros({1, 4, 32, 32}), TensorF::zeros({1, 4, 16, 16}),
                                  TensorF::zeros({1, 4, 12, 12}), TensorF::zeros({1, 4, 4, 4})};
  CHECK_THROWS_AS(dec.forward(feats, 64, 64, Phase::eval), ShapeError);
}

TEST_CASE("bce fixtures") {
  TensorF half = TensorF::full({1, 1, 4, 4}, 0.5f);
  CHECK(bce_loss(half, half).item() == doctest::Approx(std::log(2.0)).epsilon(1e-5));

  Rng rng(4);
  TensorF g = binary_map(8, 8, rng);
  CHECK(bce_loss(g, g).item() == doctest::Approx(0.0).epsilon(1e-5));

  TensorF p({1, 1, 1, 1}, {0.9f});
  TensorF one = TensorF::ones({1, 1, 1, 1});
  CHECK(bce_loss(p, one).item() == doctest::Approx(-std::log(0.9)).epsilon(1e-5));

  TensorF wrong({1, 1, 2, 2});
  CHECK_THROWS_AS(bce_loss(p, wrong), ShapeError);
}

TEST_CASE("iou fixtures") {
  Rng rng(5);
  TensorF g = binary_map(8, 8, rng);
  CHECK(iou_loss(g, g).item() == doctest::Approx(0.0).epsilon(1e-6));

  TensorF zero = TensorF::zeros({1, 1, 1, 1});
  TensorF one = TensorF::ones({1, 1, 1, 1});
  CHECK(iou_loss(zero, one).item() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(iou_loss(zero, zero).item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("soft alignment loss fixtures") {
  Rng rng(6);
  TensorF g = binary_map(8, 8, rng);
  CHECK(e_measure_loss(g, g).item() == doctest::Approx(0.0).epsilon(1e-6));

  TensorF comp = add_scalar(mul_scalar(g, -1.0f), 1.0f);
  CHECK(e_measure_loss(comp, g).item() == doctest::Approx(1.0).epsilon(1e-6));

  TensorF pred({1, 1, 4, 4});
  uniform_fill(pred, rng, 0.1, 0.9);
  TensorF flat = TensorF::zeros({1, 1, 4, 4});
  CHECK(std::isfinite(e_measure_loss(pred, flat).item()));
}

TEST_CASE("total loss sums six per-map terms and stays nonnegative") {
  Rng rng(7);
  TensorF g = binary_map(8, 8, rng);
  std::vector<TensorF> perfect(6, g);
  CHECK(total_loss(perfect, g).item() == doctest::Approx(0.0).epsilon(1e-4));

  std::vector<TensorF> preds;
  float manual = 0.0f;
  for (int i = 0; i < 6; ++i) {
    TensorF p({1, 1, 8, 8});
    uniform_fill(p, rng, 0.05, 0.95);
    manual += saliency_loss(p, g).item();
    preds.push_back(p);
  }
  TensorF total = total_loss(preds, g);
  CHECK(total.item() == doctest::Approx(manual).epsilon(1e-5));
  CHECK(total.item() >= 0.0f);

  preds.pop_back();
  CHECK_THROWS_AS(total_loss(preds, g), ConfigError);
}

TEST_CASE("each component is invariant to identical pixel permutations") {
  Rng rng(8);
  TensorF p({1, 1, 6, 6});
  uniform_fill(p, rng, 0.05, 0.95);
  TensorF g = binary_map(6, 6, rng);
  std::vector<int> perm(36);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  TensorF pp = permute_pixels(p, perm), gp = permute_pixels(g, perm);
  CHECK(bce_loss(pp, gp).item() == doctest::Approx(bce_loss(p, g).item()).epsilon(1e-6));
  CHECK(iou_loss(pp, gp).item() == doctest::Approx(iou_loss(p, g).item()).epsilon(1e-6));
  CHECK(e_measure_loss(pp, gp).item() ==
        doctest::Approx(e_measure_loss(p, g).item()).epsilon(1e-6));
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(9);
  TensorD gt({1, 1, 6, 6});
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& v : gt.data()) v = double(coin(rng));

  TensorD raw({1, 1, 6, 6});
  normal_fill(raw, rng);
  auto fn = [&](const TensorD& x) { return total_loss(std::vector<TensorD>(6, sigmoid(x)), gt); };
  CHECK(grad_check<double>(fn, raw, 1e-5, 36, 10).max_rel_err < 1e-3);
}

TEST_CASE("decoder-plus-loss gradients match finite differences") {
  Rng rng(11);
  Decoder<double> dec(4, rng);
  auto feats = random_feats<double>(4, 8, rng);
  TensorD gt({1, 1, 16, 16});
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& v : gt.data()) v = double(coin(rng));
  TensorD aux({1, 1, 16, 16});
  uniform_fill(aux, rng, 0.2, 0.8);

  auto fn = [&](const TensorD& x) {
    auto f = feats;
    f[3] = x;
    auto preds = dec.forward(f, 16, 16, Phase::eval);
    return total_loss<double>({preds[0], preds[1], preds[2], preds[3], aux, aux}, gt);
  };
  CHECK(grad_check<double>(fn, feats[3], 1e-5, 40, 12).max_rel_err < 1e-3);
}

TEST_CASE("weight gradients through a head and the loss match finite differences") {
  Rng rng(13);
  TensorD feat({1, 4, 8, 8});
  normal_fill(feat, rng);
  TensorD bias = TensorD::zeros({1, 1, 1, 1});
  TensorD gt({1, 1, 8, 8});
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& v : gt.data()) v = double(coin(rng));

  TensorD w({1, 4, 1, 1});
  normal_fill(w, rng);
  auto fn = [&](const TensorD& wt) {
    return saliency_loss(sigmoid(conv2d(feat, wt, bias, 1, 0)), gt);
  };
  CHECK(grad_check<double>(fn, w, 1e-5, 0, 14).max_rel_err < 1e-3);
}
