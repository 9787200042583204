#pragma once

// Top-down decoding of the four hierarchy features. The deepest feature seeds
// the cascade; each level fuses the skip feature with the upsampled deeper
// decoding through a BConv, and every level gets a sigmoid prediction head
// resized to the input resolution. The shallowest prediction is the one used
// at inference time.

#include <array>

#include "gfrnet/blocks.hpp"

namespace gfrnet {

template <class T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(int channels, Rng& rng)
      : fuse_{BConv<T>(2 * channels, channels, 3, rng), BConv<T>(2 * channels, channels, 3, rng),
              BConv<T>(2 * channels, channels, 3, rng)},
        heads_{PredictionHead<T>(channels, rng), PredictionHead<T>(channels, rng),
               PredictionHead<T>(channels, rng), PredictionHead<T>(channels, rng)} {}

  // feats[k] holds the hierarchy-(k+2) feature, shallow to deep; each level
  // must be exactly twice the spatial size of the next. Returns the
  // predictions for hierarchies 2..5, all resized to (out_h, out_w).
  std::array<Tensor<T>, 4> forward(const std::array<Tensor<T>, 4>& feats, int out_h, int out_w,
                                   Phase phase) {
    for (int k = 0; k < 3; ++k)
      if (feats[k].shape().h != 2 * feats[k + 1].shape().h ||
          feats[k].shape().w != 2 * feats[k + 1].shape().w)
        throw ShapeError("decoder: feature sizes " + feats[k].shape().str() + " and " +
                         feats[k + 1].shape().str() + " are not dyadic neighbours");

    std::array<Tensor<T>, 4> decoded;
    decoded[3] = feats[3];
    for (int k = 2; k >= 0; --k) {
      Tensor<T> up = resize_bilinear(decoded[k + 1], feats[k].shape().h, feats[k].shape().w);
      decoded[k] = fuse_[k].forward(concat_channels(feats[k], up), phase);
    }
    std::array<Tensor<T>, 4> preds;
    for (int k = 0; k < 4; ++k) preds[k] = heads_[k].forward(decoded[k], out_h, out_w);
    return preds;
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    for (int k = 0; k < 3; ++k) fuse_[k].collect(prefix + ".fuse" + std::to_string(k + 2), reg);
    for (int k = 0; k < 4; ++k) heads_[k].collect(prefix + ".head" + std::to_string(k + 2), reg);
  }

 private:
  std::array<BConv<T>, 3> fuse_;
  std::array<PredictionHead<T>, 4> heads_;
};

}  // namespace gfrnet
