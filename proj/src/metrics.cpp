#include "gfrnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace gfrnet {

namespace {

constexpr double kEps = 1e-20;

void require_same_size(const TensorF& pred, const TensorF& gt, const char* what) {
  if (!(pred.shape() == gt.shape()))
    throw ShapeError(std::string(what) + ": prediction " + pred.shape().str() +
                     " vs ground truth " + gt.shape().str());
}

std::vector<double> to_double(const TensorF& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

bool is_fg(double g) { return g > 0.5; }

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Similarity of a masked prediction region against its (binary) mask; the
// dissimilarity penalty uses the sample standard deviation of the in-mask
// values.
double object_score(const std::vector<double>& pred, const std::vector<double>& mask) {
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (is_fg(mask[i])) {
      sum += pred[i];
      count += 1.0;
    }
  if (count == 0.0) return 0.0;
  double x = sum / count;
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (is_fg(mask[i])) sq += (pred[i] - x) * (pred[i] - x);
  double sigma = count > 1.0 ? std::sqrt(sq / (count - 1.0)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const std::vector<double>& pred, const std::vector<double>& gt) {
  std::vector<double> fg(pred.size()), bg(pred.size()), gt_inv(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    fg[i] = is_fg(gt[i]) ? pred[i] : 0.0;
    bg[i] = is_fg(gt[i]) ? 0.0 : 1.0 - pred[i];
    gt_inv[i] = 1.0 - gt[i];
  }
  double u = mean_of(gt);
  return u * object_score(fg, gt) + (1.0 - u) * object_score(bg, gt_inv);
}

// Region-level structural similarity on one rectangle of the map.
double region_ssim(const std::vector<double>& pred, const std::vector<double>& gt, int h, int w,
                   int r0, int r1, int c0, int c1) {
  const double n = double(r1 - r0) * double(c1 - c0);
  if (n <= 0.0) return 0.0;
  double sx = 0.0, sy = 0.0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      sx += pred[r * w + c];
      sy += gt[r * w + c];
    }
  const double x = sx / n, y = sy / n;
  double vx = 0.0, vy = 0.0, vxy = 0.0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      const double dx = pred[r * w + c] - x, dy = gt[r * w + c] - y;
      vx += dx * dx;
      vy += dy * dy;
      vxy += dx * dy;
    }
  const double denom = n > 1.0 ? n - 1.0 : 1.0;
  vx /= denom;
  vy /= denom;
  vxy /= denom;
  const double a = 4.0 * x * y * vxy;
  const double b = (x * x + y * y) * (vx + vy);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

double s_region(const std::vector<double>& pred, const std::vector<double>& gt, int h, int w) {
  // Ground-truth centroid in pixel-centre coordinates, rounded half-to-even
  // so the four-way split commutes with horizontal/vertical flips; falls back
  // to the map centre for an empty mask.
  double total = std::accumulate(gt.begin(), gt.end(), 0.0);
  int cx = w / 2, cy = h / 2;
  if (total > 0.0) {
    double mx = 0.0, my = 0.0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        mx += gt[r * w + c] * (c + 0.5);
        my += gt[r * w + c] * (r + 0.5);
      }
    cx = int(std::nearbyint(mx / total));
    cy = int(std::nearbyint(my / total));
  }
  const double area = double(h) * double(w);
  const double w1 = (double(cx) * cy) / area;
  const double w2 = (double(w - cx) * cy) / area;
  const double w3 = (double(cx) * (h - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * region_ssim(pred, gt, h, w, 0, cy, 0, cx) +
         w2 * region_ssim(pred, gt, h, w, 0, cy, cx, w) +
         w3 * region_ssim(pred, gt, h, w, cy, h, 0, cx) +
         w4 * region_ssim(pred, gt, h, w, cy, h, cx, w);
}

}  // namespace

double mae(const TensorF& pred, const TensorF& gt) {
  require_same_size(pred, gt, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += std::abs(double(pred.data()[i]) - double(gt.data()[i]));
  return acc / double(pred.size());
}

double f_measure_max(const TensorF& pred, const TensorF& gt, double beta2, int thresholds,
                     bool* gt_empty) {
  require_same_size(pred, gt, "f_measure_max");
  const auto p = to_double(pred);
  const auto g = to_double(gt);
  double gt_pos = 0.0;
  for (double v : g) gt_pos += is_fg(v) ? 1.0 : 0.0;
  if (gt_empty) *gt_empty = gt_pos == 0.0;
  if (gt_pos == 0.0) return 0.0;

  double best = 0.0;
  for (int t = 0; t < thresholds; ++t) {
    const double thr = double(t) / double(thresholds - 1);
    double tp = 0.0, pp = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] >= thr) {
        pp += 1.0;
        if (is_fg(g[i])) tp += 1.0;
      }
    if (pp == 0.0) continue;  // empty prediction scores zero
    const double prec = tp / pp, rec = tp / gt_pos;
    const double denom = beta2 * prec + rec;
    if (denom > 0.0) best = std::max(best, (1.0 + beta2) * prec * rec / denom);
  }
  return best;
}

double s_measure(const TensorF& pred, const TensorF& gt, double alpha) {
  require_same_size(pred, gt, "s_measure");
  const auto p = to_double(pred);
  const auto g = to_double(gt);
  const int h = pred.shape().h, w = pred.shape().w;
  const double y = mean_of(g);
  if (y == 0.0) return 1.0 - mean_of(p);
  if (y == 1.0) return mean_of(p);
  const double s = alpha * s_object(p, g) + (1.0 - alpha) * s_region(p, g, h, w);
  return std::max(s, 0.0);
}

double e_measure_max(const TensorF& pred, const TensorF& gt, int thresholds) {
  require_same_size(pred, gt, "e_measure_max");
  const auto p = to_double(pred);
  const auto g = to_double(gt);
  const double n = double(p.size());
  const double g_mean = mean_of(g);
  const bool all_bg = g_mean == 0.0, all_fg = g_mean == 1.0;

  double best = 0.0;
  for (int t = 0; t < thresholds; ++t) {
    const double thr = double(t) / double(thresholds - 1);
    double score = 0.0;
    if (all_bg || all_fg) {
      for (double v : p) {
        const double b = v >= thr ? 1.0 : 0.0;
        score += all_bg ? 1.0 - b : b;
      }
      score /= n;
    } else {
      double b_mean = 0.0;
      for (double v : p) b_mean += v >= thr ? 1.0 : 0.0;
      b_mean /= n;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double phi_p = (p[i] >= thr ? 1.0 : 0.0) - b_mean;
        const double phi_g = g[i] - g_mean;
        const double xi = 2.0 * phi_p * phi_g / (phi_p * phi_p + phi_g * phi_g + kEps);
        score += (xi + 1.0) * (xi + 1.0) / 4.0;
      }
      score /= n;
    }
    best = std::max(best, score);
  }
  return best;
}

SampleMetrics evaluate_sample(const std::string& id, const TensorF& pred, const TensorF& gt) {
  SampleMetrics m;
  m.id = id;
  m.mae = mae(pred, gt);
  m.f_beta_max = f_measure_max(pred, gt, 0.3, 256, &m.gt_empty);
  m.s_alpha = s_measure(pred, gt);
  m.e_phi_max = e_measure_max(pred, gt);
  return m;
}

EvalReport aggregate(std::vector<SampleMetrics> samples) {
  EvalReport r;
  r.samples = std::move(samples);
  if (r.samples.empty()) return r;
  for (const auto& s : r.samples) {
    r.mae += s.mae;
    r.f_beta_max += s.f_beta_max;
    r.s_alpha += s.s_alpha;
    r.e_phi_max += s.e_phi_max;
  }
  const double n = double(r.samples.size());
  r.mae /= n;
  r.f_beta_max /= n;
  r.s_alpha /= n;
  r.e_phi_max /= n;
  return r;
}

std::string report_text(const EvalReport& report) {
  std::ostringstream os;
  os << "sample            S_a     F_max   E_max   MAE\n";
  auto row = [&os](const std::string& id, double s, double f, double e, double m) {
    os << id;
    for (std::size_t i = id.size(); i < 18; ++i) os << ' ';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f  %.4f  %.4f  %.4f\n", s, f, e, m);
    os << buf;
  };
  for (const auto& s : report.samples) row(s.id, s.s_alpha, s.f_beta_max, s.e_phi_max, s.mae);
  row("mean", report.s_alpha, report.f_beta_max, report.e_phi_max, report.mae);
  return os.str();
}

std::string report_json(const EvalReport& report) {
  nlohmann::json j;
  j["aggregate"] = {{"s_alpha", report.s_alpha},
                    {"f_beta_max", report.f_beta_max},
                    {"e_phi_max", report.e_phi_max},
                    {"mae", report.mae}};
  j["samples"] = nlohmann::json::array();
  for (const auto& s : report.samples)
    j["samples"].push_back({{"id", s.id},
                            {"s_alpha", s.s_alpha},
                            {"f_beta_max", s.f_beta_max},
                            {"e_phi_max", s.e_phi_max},
                            {"mae", s.mae},
                            {"gt_empty", s.gt_empty}});
  return j.dump(2);
}

}  // namespace gfrnet
