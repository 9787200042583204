#pragma once

// Saliency evaluation metrics: mean absolute error, threshold-swept maximum
// F-measure and E-measure, and the structure measure. Predictions are
// continuous maps in [0,1]; ground truths are binary maps.

#include <string>
#include <vector>

#include "gfrnet/tensor.hpp"

namespace gfrnet {

struct SampleMetrics {
  std::string id;
  double mae = 0.0;
  double f_beta_max = 0.0;
  double s_alpha = 0.0;
  double e_phi_max = 0.0;
  bool gt_empty = false;  // degenerate all-background ground truth
};

struct EvalReport {
  std::vector<SampleMetrics> samples;
  double mae = 0.0;
  double f_beta_max = 0.0;
  double s_alpha = 0.0;
  double e_phi_max = 0.0;
};

double mae(const TensorF& pred, const TensorF& gt);
double f_measure_max(const TensorF& pred, const TensorF& gt, double beta2 = 0.3,
                     int thresholds = 256, bool* gt_empty = nullptr);
double s_measure(const TensorF& pred, const TensorF& gt, double alpha = 0.5);
double e_measure_max(const TensorF& pred, const TensorF& gt, int thresholds = 256);

SampleMetrics evaluate_sample(const std::string& id, const TensorF& pred, const TensorF& gt);
EvalReport aggregate(std::vector<SampleMetrics> samples);

std::string report_text(const EvalReport& report);
std::string report_json(const EvalReport& report);

}  // namespace gfrnet
