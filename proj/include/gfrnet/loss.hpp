#pragma once

// Training losses: per-map loss = BCE + smoothed IoU + (1 - soft enhanced
// alignment), summed over the four decoder predictions plus the two
// auxiliary modality predictions.

#include <vector>

#include "gfrnet/tensor.hpp"

namespace gfrnet {

namespace detail {

template <class T>
void require_same_map(const Tensor<T>& pred, const Tensor<T>& gt, const char* what) {
  if (!(pred.shape() == gt.shape()))
    throw ShapeError(std::string(what) + ": prediction " + pred.shape().str() +
                     " vs ground truth " + gt.shape().str());
}

}  // namespace detail

template <class T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& gt, T delta = T(1e-7)) {
  detail::require_same_map(pred, gt, "bce_loss");
  Tensor<T> p = clamp(pred, delta, T(1) - delta);
  Tensor<T> one_minus_g = add_scalar(mul_scalar(gt, T(-1)), T(1));
  Tensor<T> one_minus_p = add_scalar(mul_scalar(p, T(-1)), T(1));
  Tensor<T> ll = add(mul(gt, log_t(p)), mul(one_minus_g, log_t(one_minus_p)));
  return mul_scalar(mean_all(ll), T(-1));
}

template <class T>
Tensor<T> iou_loss(const Tensor<T>& pred, const Tensor<T>& gt, T smooth = T(1)) {
  detail::require_same_map(pred, gt, "iou_loss");
  Tensor<T> inter = sum_all(mul(pred, gt));
  Tensor<T> uni = sub(add(sum_all(pred), sum_all(gt)), inter);
  Tensor<T> ratio = div(add_scalar(inter, smooth), add_scalar(uni, smooth));
  return add_scalar(mul_scalar(ratio, T(-1)), T(1));
}

// Soft enhanced-alignment loss on the continuous prediction: both maps are
// mean-centred, their alignment ratio is squashed through ((xi+1)/2)^2 and
// averaged; the loss is one minus that score.
template <class T>
Tensor<T> e_measure_loss(const Tensor<T>& pred, const Tensor<T>& gt, T eps = T(1e-8)) {
  detail::require_same_map(pred, gt, "e_measure_loss");
  Tensor<T> phi_p = sub(pred, mean_all(pred));
  Tensor<T> phi_g = sub(gt, mean_all(gt));
  Tensor<T> xi = div_eps(mul_scalar(mul(phi_p, phi_g), T(2)),
                         add(mul(phi_p, phi_p), mul(phi_g, phi_g)), eps);
  Tensor<T> aligned = add_scalar(xi, T(1));
  Tensor<T> score = mul_scalar(mean_all(mul(aligned, aligned)), T(0.25));
  return add_scalar(mul_scalar(score, T(-1)), T(1));
}

template <class T>
Tensor<T> saliency_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  return add(add(bce_loss(pred, gt), iou_loss(pred, gt)), e_measure_loss(pred, gt));
}

// Six supervised maps: the four decoder predictions and the AiF/depth
// auxiliary predictions, all against the same ground truth.
template <class T>
Tensor<T> total_loss(const std::vector<Tensor<T>>& preds, const Tensor<T>& gt) {
  if (preds.size() != 6)
    throw ConfigError("total_loss: expected 6 prediction maps, got " +
                      std::to_string(preds.size()));
  Tensor<T> total = saliency_loss(preds[0], gt);
  for (std::size_t i = 1; i < preds.size(); ++i) total = add(total, saliency_loss(preds[i], gt));
  return total;
}

}  // namespace gfrnet
