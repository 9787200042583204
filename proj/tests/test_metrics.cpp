#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <json.hpp>

#include "gfrnet/metrics.hpp"

using namespace gfrnet;

namespace {

// Brute-force F-measure sweep, written independently of the library code:
// every threshold on the t/(T-1) grid, precision/recall from explicit
// confusion counts.
double oracle_f_max(const TensorF& pred, const TensorF& gt, double beta2, int T) {
  int gt_pos = 0;
  for (float v : gt.data()) gt_pos += v > 0.5f;
  if (gt_pos == 0) return 0.0;
  double best = 0.0;
  for (int t = 0; t < T; ++t) {
    double thr = t / double(T - 1);
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      bool b = pred.data()[i] >= thr;
      bool g = gt.data()[i] > 0.5f;
      tp += b && g;
      fp += b && !g;
    }
    if (tp + fp == 0) continue;
    double prec = tp / double(tp + fp);
    double rec = tp / double(gt_pos);
    if (beta2 * prec + rec > 0)
      best = std::max(best, (1 + beta2) * prec * rec / (beta2 * prec + rec));
  }
  return best;
}

// Exhaustive E-measure sweep oracle: binarize, mean-centre both maps, apply
// the enhanced alignment formula pixel by pixel.
double oracle_e_max(const TensorF& pred, const TensorF& gt, int T) {
  const double n = double(pred.size());
  double gm = 0.0;
  for (float v : gt.data()) gm += v;
  gm /= n;
  double best = 0.0;
  for (int t = 0; t < T; ++t) {
    double thr = t / double(T - 1);
    double score = 0.0;
    if (gm == 0.0 || gm == 1.0) {
      for (float v : pred.data()) {
        double b = v >= thr ? 1.0 : 0.0;
        score += gm == 0.0 ? 1.0 - b : b;
      }
    } else {
      double bm = 0.0;
      for (float v : pred.data()) bm += v >= thr ? 1.0 : 0.0;
      bm /= n;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        double dp = (pred.data()[i] >= thr ? 1.0 : 0.0) - bm;
        double dg = gt.data()[i] - gm;
        double xi = 2.0 * dp * dg / (dp * dp + dg * dg + 1e-20);
        score += 0.25 * (xi + 1.0) * (xi + 1.0);
      }
    }
    best = std::max(best, score / n);
  }
  return best;
}

// Independent structure-measure transcription used as the fixture oracle.
double oracle_s(const std::vector<double>& p, const std::vector<double>& g, int h, int w) {
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  };
  double y = mean(g);
  if (y == 0.0) return 1.0 - mean(p);
  if (y == 1.0) return mean(p);

  auto obj = [&](bool fg) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < p.size(); ++i)
      if ((g[i] > 0.5) == fg) vals.push_back(fg ? p[i] : 1.0 - p[i]);
    if (vals.empty()) return 0.0;
    double x = mean(vals), sq = 0;
    for (double v : vals) sq += (v - x) * (v - x);
    double sd = vals.size() > 1 ? std::sqrt(sq / (vals.size() - 1.0)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + sd + 1e-20);
  };
  double so = y * obj(true) + (1 - y) * obj(false);

  double tot = 0, mx = 0, my = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      tot += g[r * w + c];
      mx += g[r * w + c] * (c + 0.5);
      my += g[r * w + c] * (r + 0.5);
    }
  int cx = int(std::nearbyint(mx / tot)), cy = int(std::nearbyint(my / tot));
  auto ssim = [&](int r0, int r1, int c0, int c1) {
    double n = double(r1 - r0) * (c1 - c0);
    if (n <= 0) return 0.0;
    double sx = 0, sy = 0;
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) {
        sx += p[r * w + c];
        sy += g[r * w + c];
      }
    double x = sx / n, yy = sy / n, vx = 0, vy = 0, vxy = 0;
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) {
        vx += (p[r * w + c] - x) * (p[r * w + c] - x);
        vy += (g[r * w + c] - yy) * (g[r * w + c] - yy);
        vxy += (p[r * w + c] - x) * (g[r * w + c] - yy);
      }
    double d = n > 1 ? n - 1 : 1;
    vx /= d;
    vy /= d;
    vxy /= d;
    double a = 4 * x * yy * vxy, b = (x * x + yy * yy) * (vx + vy);
    if (a != 0) return a / (b + 1e-20);
    return b == 0 ? 1.0 : 0.0;
  };
  double area = double(h) * w;
  double sr = (cx * cy / area) * ssim(0, cy, 0, cx) +
              ((w - cx) * cy / area) * ssim(0, cy, cx, w) +
              (cx * (h - cy) / area) * ssim(cy, h, 0, cx) +
              (1.0 - cx * cy / area - (w - cx) * cy / area - cx * (h - cy) / area) *
                  ssim(cy, h, cx, w);
  return std::max(0.5 * so + 0.5 * sr, 0.0);
}

TensorF random_pred(int h, int w, std::mt19937_64& rng) {
  TensorF t({1, 1, h, w});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

TensorF random_gt(int h, int w, std::mt19937_64& rng) {
  TensorF t({1, 1, h, w});
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& v : t.data()) v = float(coin(rng));
  return t;
}

TensorF flipped(const TensorF& t, bool horiz, bool vert) {
  const int h = t.shape().h, w = t.shape().w;
  TensorF out(t.shape());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      out.at(0, 0, vert ? h - 1 - r : r, horiz ? w - 1 - c : c) = t.at(0, 0, r, c);
  return out;
}

}  // namespace

TEST_CASE("mae fixtures and complement symmetry") {
  std::mt19937_64 rng(1);
  TensorF g = random_gt(8, 8, rng);
  CHECK(mae(g, g) == doctest::Approx(0.0));
  CHECK(mae(TensorF::zeros({1, 1, 4, 4}), TensorF::ones({1, 1, 4, 4})) == doctest::Approx(1.0));
  CHECK(mae(TensorF::full({1, 1, 4, 4}, 0.25f), TensorF::zeros({1, 1, 4, 4})) ==
        doctest::Approx(0.25));

  TensorF p = random_pred(8, 8, rng);
  TensorF pc = add_scalar(mul_scalar(p, -1.0f), 1.0f);
  TensorF gc = add_scalar(mul_scalar(g, -1.0f), 1.0f);
  CHECK(mae(p, g) == doctest::Approx(mae(pc, gc)).epsilon(1e-6));

  CHECK_THROWS_AS(mae(p, TensorF::zeros({1, 1, 4, 4})), ShapeError);
}

TEST_CASE("f-measure fixtures") {
  std::mt19937_64 rng(2);
  TensorF g = random_gt(8, 8, rng);
  CHECK(f_measure_max(g, g) == doctest::Approx(1.0));

  TensorF gc = add_scalar(mul_scalar(g, -1.0f), 1.0f);
  // The complement still scores above zero at the all-inclusive threshold
  // (precision = background fraction), so compare against the sweep oracle.
  CHECK(f_measure_max(gc, g) == doctest::Approx(oracle_f_max(gc, g, 0.3, 256)).epsilon(1e-9));

  // A soft second pixel on a true region is kept by the low thresholds, so
  // the sweep reaches a perfect score.
  TensorF soft({1, 1, 2, 2}, {1.0f, 0.4f, 0.0f, 0.0f});
  TensorF gt2({1, 1, 2, 2}, {1.0f, 1.0f, 0.0f, 0.0f});
  CHECK(f_measure_max(soft, gt2) == doctest::Approx(oracle_f_max(soft, gt2, 0.3, 256)).epsilon(1e-9));
  CHECK(f_measure_max(soft, gt2) == doctest::Approx(1.0));

  // Missing one of two positives entirely: P=1, R=0.5, F = 1.3*0.5/0.8.
  TensorF hard({1, 1, 2, 2}, {1.0f, 0.0f, 0.0f, 0.0f});
  CHECK(f_measure_max(hard, gt2) == doctest::Approx(0.8125));

  bool empty = false;
  CHECK(f_measure_max(random_pred(4, 4, rng), TensorF::zeros({1, 1, 4, 4}), 0.3, 256, &empty) ==
        doctest::Approx(0.0));
  CHECK(empty);
}

TEST_CASE("f-measure matches the sweep oracle on random maps") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    TensorF p = random_pred(8, 8, rng), g = random_gt(8, 8, rng);
    CHECK(f_measure_max(p, g) == doctest::Approx(oracle_f_max(p, g, 0.3, 256)).epsilon(1e-9));
  }
}

TEST_CASE("threshold-count monotonicity") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    TensorF p = random_pred(8, 8, rng), g = random_gt(8, 8, rng);
    // 3 | 51 | 255: each threshold grid is a superset of the previous one.
    CHECK(f_measure_max(p, g, 0.3, 4) <= f_measure_max(p, g, 0.3, 52) + 1e-12);
    CHECK(f_measure_max(p, g, 0.3, 52) <= f_measure_max(p, g, 0.3, 256) + 1e-12);
    CHECK(e_measure_max(p, g, 4) <= e_measure_max(p, g, 52) + 1e-12);
    CHECK(e_measure_max(p, g, 52) <= e_measure_max(p, g, 256) + 1e-12);
  }
}

TEST_CASE("s-measure fixtures") {
  std::mt19937_64 rng(5);
  TensorF g = random_gt(8, 8, rng);
  CHECK(s_measure(g, g) == doctest::Approx(1.0).epsilon(1e-6));

  TensorF z = TensorF::zeros({1, 1, 4, 4});
  CHECK(s_measure(z, z) == doctest::Approx(1.0));
  CHECK(s_measure(TensorF::full({1, 1, 4, 4}, 0.3f), z) == doctest::Approx(0.7));
  CHECK(s_measure(TensorF::full({1, 1, 4, 4}, 0.3f), TensorF::ones({1, 1, 4, 4})) ==
        doctest::Approx(0.3));

  TensorF pred({1, 1, 4, 4}, {0.9f, 0.8f, 0.1f, 0.0f, 0.7f, 0.9f, 0.2f, 0.1f, 0.1f, 0.2f, 0.1f,
                              0.0f, 0.0f, 0.1f, 0.3f, 0.2f});
  TensorF gt({1, 1, 4, 4},
             {1.0f, 1.0f, 0.0f, 0.0f, 1.0f, 1.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f,
              0.0f, 0.0f});
  std::vector<double> p(pred.data().begin(), pred.data().end());
  std::vector<double> gg(gt.data().begin(), gt.data().end());
  CHECK(s_measure(pred, gt) == doctest::Approx(oracle_s(p, gg, 4, 4)).epsilon(1e-6));
}

TEST_CASE("s-measure matches the oracle on random maps") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    TensorF pr = random_pred(8, 8, rng), g = random_gt(8, 8, rng);
    std::vector<double> p(pr.data().begin(), pr.data().end());
    std::vector<double> gg(g.data().begin(), g.data().end());
    CHECK(s_measure(pr, g) == doctest::Approx(oracle_s(p, gg, 8, 8)).epsilon(1e-6));
  }
}

TEST_CASE("e-measure fixtures and oracle equivalence") {
  std::mt19937_64 rng(7);
  TensorF g = random_gt(8, 8, rng);
  CHECK(e_measure_max(g, g) == doctest::Approx(1.0).epsilon(1e-6));

  TensorF gc = add_scalar(mul_scalar(g, -1.0f), 1.0f);
  double e = e_measure_max(gc, g);
  CHECK(e >= 0.0);
  CHECK(e <= 1.0);
  CHECK(e == doctest::Approx(oracle_e_max(gc, g, 256)).epsilon(1e-9));

  TensorF p2({1, 1, 2, 2}, {0.9f, 0.2f, 0.3f, 0.1f});
  TensorF g2({1, 1, 2, 2}, {1.0f, 0.0f, 1.0f, 0.0f});
  CHECK(e_measure_max(p2, g2) == doctest::Approx(oracle_e_max(p2, g2, 256)).epsilon(1e-9));

  for (int trial = 0; trial < 30; ++trial) {
    TensorF p = random_pred(8, 8, rng), gr = random_gt(8, 8, rng);
    CHECK(e_measure_max(p, gr) == doctest::Approx(oracle_e_max(p, gr, 256)).epsilon(1e-9));
  }
}

TEST_CASE("all metrics are invariant to simultaneous flips") {
  std::mt19937_64 rng(8);
  TensorF p = random_pred(8, 8, rng), g = random_gt(8, 8, rng);
  for (auto [hz, vt] : {std::pair{true, false}, {false, true}, {true, true}}) {
    TensorF pf = flipped(p, hz, vt), gf = flipped(g, hz, vt);
    CHECK(mae(pf, gf) == doctest::Approx(mae(p, g)).epsilon(1e-9));
    CHECK(f_measure_max(pf, gf) == doctest::Approx(f_measure_max(p, g)).epsilon(1e-9));
    CHECK(s_measure(pf, gf) == doctest::Approx(s_measure(p, g)).epsilon(1e-6));
    CHECK(e_measure_max(pf, gf) == doctest::Approx(e_measure_max(p, g)).epsilon(1e-9));
  }
}

TEST_CASE("aggregation and report emission") {
  std::mt19937_64 rng(9);
  std::vector<SampleMetrics> rows;
  for (int i = 0; i < 3; ++i)
    rows.push_back(evaluate_sample("s" + std::to_string(i), random_pred(8, 8, rng),
                                   random_gt(8, 8, rng)));
  EvalReport rep = aggregate(rows);
  double msum = 0;
  for (const auto& s : rep.samples) msum += s.mae;
  CHECK(rep.mae == doctest::Approx(msum / 3.0));
  CHECK(rep.s_alpha >= 0.0);
  CHECK(rep.s_alpha <= 1.0);

  auto j = nlohmann::json::parse(report_json(rep));
  CHECK(j["samples"].size() == 3);
  CHECK(j["aggregate"]["mae"].get<double>() == doctest::Approx(rep.mae));
  CHECK(report_text(rep).find("mean") != std::string::npos);
}
