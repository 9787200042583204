#pragma once

// AiF-based refinement: Dice-inspired alignment weighting of focal slices
// (AWM), spatial-mask purification, and focal slice fusion.

#include "gfrnet/fusion.hpp"

namespace gfrnet {

template <class T>
class Arm {
 public:
  Arm() = default;
  Arm(int channels, int max_slices, FfMode ff_mode, Rng& rng, T div_epsilon = T(1e-6))
      : align_fs_(channels, channels, 3, rng),
        align_guide_(channels, channels, 3, rng),
        score_(channels, 1, 1, rng),
        mask_(channels, rng),
        ff_(channels, max_slices, ff_mode, rng),
        div_eps_(div_epsilon) {}

  // Per-slice alignment weights V: softmax over slices of the channel-scored
  // ratio GAP(W_a * W_fs) / (GAP(W_a + W_fs) + eps). The guide feature is
  // broadcast across the slice axis.
  Tensor<T> alignment_weights(const Tensor<T>& guide, const Tensor<T>& f_fs, Phase phase) {
    if (f_fs.shape().n < 1) throw ShapeError("alignment_weights: empty focal stack");
    Tensor<T> w_fs = align_fs_.forward(f_fs, phase);
    Tensor<T> w_a = align_guide_.forward(guide, phase);
    Tensor<T> ratio = div_eps(gap(mul(w_fs, w_a)), gap(add(w_fs, w_a)), div_eps_);
    return softmax_slices(score_.forward(ratio));
  }

  // Eq-style mask refinement: f + f * sigmoid(Conv3(f * guide_rep)).
  Tensor<T> mask_refine(const Tensor<T>& guide_rep, const Tensor<T>& f_fs1) const {
    Tensor<T> m = sigmoid(mask_.forward(mul(f_fs1, guide_rep)));
    return add(f_fs1, mul(f_fs1, m));
  }

  Tensor<T> focal_fusion(const Tensor<T>& f, Phase phase) { return ff_.forward(f, phase); }

  // guide: (1,C,H,W) AiF features; f_fs: (N,C,H,W) focal branch.
  Tensor<T> forward(const Tensor<T>& guide, const Tensor<T>& f_fs, Phase phase) {
    Tensor<T> v = alignment_weights(guide, f_fs, phase);
    Tensor<T> weighted = mul(f_fs, v);
    Tensor<T> refined = mask_refine(guide, weighted);
    return focal_fusion(refined, phase);
  }

  Conv2d<T>& score_conv() { return score_; }
  Conv3Block<T>& mask_conv() { return mask_; }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    align_fs_.collect(prefix + ".align_fs", reg);
    align_guide_.collect(prefix + ".align_guide", reg);
    score_.collect(prefix + ".score", reg);
    mask_.collect(prefix + ".mask", reg);
    ff_.collect(prefix + ".ff", reg);
  }

 private:
  BConv<T> align_fs_, align_guide_;
  Conv2d<T> score_;
  Conv3Block<T> mask_;
  FocalFusion<T> ff_;
  T div_eps_ = T(1e-6);
};

}  // namespace gfrnet
