#pragma once

// VGG-19-shaped encoder stream. Five stages of BConv blocks with 2x max
// pooling between stages; side outputs of hierarchies 2..5 are compressed to
// the unified channel width. Hierarchy-1 features are computed but not
// emitted.

#include <array>
#include <vector>

#include "gfrnet/blocks.hpp"

namespace gfrnet {

struct EncoderConfig {
  std::array<int, 5> stage_widths{64, 128, 256, 512, 512};
  std::array<int, 5> convs_per_stage{2, 2, 4, 4, 4};
  int input_resolution = 256;
  int unified_channels = 64;

  // Scales the VGG-19 stage widths; used by the toy preset (factor 0.25).
  static EncoderConfig scaled(double width_factor, int resolution, int unified = 64) {
    EncoderConfig cfg;
    cfg.input_resolution = resolution;
    cfg.unified_channels = unified;
    for (auto& w : cfg.stage_widths) w = std::max(4, static_cast<int>(w * width_factor));
    return cfg;
  }
};

// Compressed features at hierarchies i = 2..5; entry j holds hierarchy j+2.
template <class T>
using SideOutputs = std::array<Tensor<T>, 4>;

template <class T>
class EncoderStream {
 public:
  EncoderStream() = default;
  EncoderStream(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    int c_in = 3;
    for (int s = 0; s < 5; ++s) {
      std::vector<BConv<T>> stage;
      for (int i = 0; i < cfg.convs_per_stage[s]; ++i) {
        stage.emplace_back(c_in, cfg.stage_widths[s], 3, rng);
        c_in = cfg.stage_widths[s];
      }
      stages_.push_back(std::move(stage));
    }
    for (int i = 0; i < 4; ++i)
      compress_[i] = CompressionLayer<T>(cfg.stage_widths[i + 1], cfg.unified_channels, rng);
  }

  // x: (n, 3 or 1, H, W); a single-channel input is replicated to 3 channels.
  SideOutputs<T> forward(const Tensor<T>& x, Phase phase) {
    const Shape s = x.shape();
    if (s.h % 16 != 0 || s.w % 16 != 0)
      throw ConfigError("encoder input resolution must be divisible by 16, got " + s.str());
    require_shape(s.c == 3 || s.c == 1, "encoder expects 1 or 3 input channels, got " + s.str());

    Tensor<T> cur = x;
    if (s.c == 1) cur = concat_channels(concat_channels(x, x), x);

    SideOutputs<T> out;
    for (int stage = 0; stage < 5; ++stage) {
      if (stage > 0) cur = max_pool2(cur);
      for (auto& block : stages_[stage]) cur = block.forward(cur, phase);
      if (stage >= 1) out[stage - 1] = compress_[stage - 1].forward(cur, phase);
    }
    return out;
  }

  // Stacks focal slices along the slice axis and encodes them with shared
  // weights.
  SideOutputs<T> forward_stack(const std::vector<Tensor<T>>& slices, Phase phase) {
    if (slices.empty()) throw DataError("focal stack is empty");
    const Shape s0 = slices.front().shape();
    Tensor<T> stacked({static_cast<int>(slices.size()), s0.c, s0.h, s0.w});
    const std::size_t plane = s0.size();
    for (std::size_t j = 0; j < slices.size(); ++j) {
      require_shape(slices[j].shape() == s0, "focal slices must share one shape");
      std::copy_n(slices[j].data().begin(), plane, stacked.data().begin() + j * plane);
    }
    return forward(stacked, phase);
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    for (std::size_t s = 0; s < stages_.size(); ++s)
      for (std::size_t i = 0; i < stages_[s].size(); ++i)
        stages_[s][i].collect(prefix + ".stage" + std::to_string(s + 1) + ".conv" + std::to_string(i), reg);
    for (int i = 0; i < 4; ++i)
      compress_[i].collect(prefix + ".cp" + std::to_string(i + 2), reg);
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<std::vector<BConv<T>>> stages_;
  std::array<CompressionLayer<T>, 4> compress_;
};

}  // namespace gfrnet
