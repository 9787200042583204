#pragma once

// Focal slice fusion (FF): collapses the slice axis. The default mode
// concatenates the slice-wise sum and max on channels and fuses with a BConv;
// the alternative mode stacks slices along channels and applies one BConv
// (the "P1" wiring).

#include "gfrnet/blocks.hpp"

namespace gfrnet {

enum class FfMode { sum_max, concat_conv };

template <class T>
class FocalFusion {
 public:
  FocalFusion() = default;
  FocalFusion(int channels, int max_slices, FfMode mode, Rng& rng) : mode_(mode) {
    if (mode == FfMode::sum_max)
      fuse_ = BConv<T>(2 * channels, channels, 3, rng);
    else
      fuse_ = BConv<T>(max_slices * channels, channels, 3, rng);
  }

  Tensor<T> forward(const Tensor<T>& f, Phase phase) {
    if (mode_ == FfMode::sum_max)
      return fuse_.forward(concat_channels(slice_sum(f), slice_max(f)), phase);
    return fuse_.forward(merge_slices_to_channels(f), phase);
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    fuse_.collect(prefix + ".fuse", reg);
  }

 private:
  FfMode mode_ = FfMode::sum_max;
  BConv<T> fuse_;
};

}  // namespace gfrnet
