#pragma once

// Depth-based refinement: a two-modality coordinate-attention variant. Depth
// and focal features are pooled along each spatial direction, fused per
// direction by 1x1 convolutions, jointly encoded by a 1x1 BConv over the
// spatially concatenated branches, and turned into directional sigmoid masks
// that modulate the focal slices before focal slice fusion.

#include "gfrnet/fusion.hpp"

namespace gfrnet {

template <class T>
class Drm {
 public:
  Drm() = default;
  Drm(int channels, int max_slices, FfMode ff_mode, Rng& rng)
      : fuse_x_(2 * channels, channels, 1, rng),
        fuse_y_(2 * channels, channels, 1, rng),
        joint_(channels, channels, 1, rng),
        score_x_(channels, channels, 1, rng),
        score_y_(channels, channels, 1, rng),
        ff_(channels, max_slices, ff_mode, rng) {}

  // guide: (1,C,H,W) depth features; f_fs: (N,C,H,W).
  // Returns masks X: (N,C,H,1) and Y: (N,C,1,W), both in (0,1).
  std::pair<Tensor<T>, Tensor<T>> directional_masks(const Tensor<T>& guide, const Tensor<T>& f_fs,
                                                    Phase phase) {
    const Shape fs = f_fs.shape();
    require_shape(guide.shape().c == fs.c && guide.shape().h == fs.h && guide.shape().w == fs.w,
                  "directional_masks: guide " + guide.shape().str() + " does not match focal " +
                      fs.str());
    Tensor<T> guide_rep = broadcast_slices(guide, fs.n);

    Tensor<T> x_fs = xpool(f_fs);                 // (N,C,H,1)
    Tensor<T> x_d = xpool(guide_rep);
    Tensor<T> y_fs = ypool(f_fs);                 // (N,C,1,W)
    Tensor<T> y_d = ypool(guide_rep);

    Tensor<T> x_joint = fuse_x_.forward(concat_channels(x_fs, x_d));   // (N,C,H,1)
    Tensor<T> y_joint = fuse_y_.forward(concat_channels(y_fs, y_d));   // (N,C,1,W)

    // The Y branch is transposed to (N,C,W,1) and joined along length H+W,
    // encoded jointly, then split and transposed back.
    Tensor<T> joined = concat_rows(x_joint, transpose_hw(y_joint));    // (N,C,H+W,1)
    Tensor<T> encoded = joint_.forward(joined, phase);
    auto [xe, ye] = split_rows(encoded, fs.h);

    Tensor<T> mask_x = sigmoid(score_x_.forward(xe));
    Tensor<T> mask_y = sigmoid(score_y_.forward(transpose_hw(ye)));
    return {mask_x, mask_y};
  }

  Tensor<T> forward(const Tensor<T>& guide, const Tensor<T>& f_fs, Phase phase) {
    auto [mask_x, mask_y] = directional_masks(guide, f_fs, phase);
    Tensor<T> refined = mul(mul(f_fs, mask_x), mask_y);
    return ff_.forward(refined, phase);
  }

  Tensor<T> focal_fusion(const Tensor<T>& f, Phase phase) { return ff_.forward(f, phase); }

  void zero_conv_weights() {
    for (Conv2d<T>* c : {&fuse_x_, &fuse_y_, &score_x_, &score_y_}) {
      std::fill(c->weight().data().begin(), c->weight().data().end(), T(0));
      std::fill(c->bias().data().begin(), c->bias().data().end(), T(0));
    }
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    fuse_x_.collect(prefix + ".fuse_x", reg);
    fuse_y_.collect(prefix + ".fuse_y", reg);
    joint_.collect(prefix + ".joint", reg);
    score_x_.collect(prefix + ".score_x", reg);
    score_y_.collect(prefix + ".score_y", reg);
    ff_.collect(prefix + ".ff", reg);
  }

 private:
  Conv2d<T> fuse_x_, fuse_y_;   // per-direction 2C -> C fusion
  BConv<T> joint_;              // BConv1 over the joined branches
  Conv2d<T> score_x_, score_y_; // per-direction mask convs
  FocalFusion<T> ff_;
};

}  // namespace gfrnet
