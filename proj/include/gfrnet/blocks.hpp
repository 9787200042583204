#pragma once

// Named building blocks: BConv (conv + BatchNorm + ReLU), channel attention,
// the 1x1 compression layer, the two-conv mask head, and prediction heads.

#include <string>
#include <vector>

#include "gfrnet/rng.hpp"
#include "gfrnet/tensor.hpp"

namespace gfrnet {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Non-learnable state (batchnorm running stats) that still needs to be
// serialized. Pointers refer into live module storage.
template <class T>
struct NamedBuffer {
  std::string name;
  std::vector<T>* values;
};

template <class T>
struct ParamRegistry {
  std::vector<NamedParam<T>> params;
  std::vector<NamedBuffer<T>> buffers;

  void add_param(const std::string& name, const Tensor<T>& t) { params.push_back({name, t}); }
  void add_buffer(const std::string& name, std::vector<T>* v) { buffers.push_back({name, v}); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.size();
    return n;
  }
};

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int c_in, int c_out, int k, Rng& rng, int stride = 1, int padding = -1)
      : weight_({c_out, c_in, k, k}, true),
        bias_({1, c_out, 1, 1}, true),
        stride_(stride),
        padding_(padding < 0 ? k / 2 : padding) {
    kaiming_init(weight_, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight_, bias_, stride_, padding_); }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    reg.add_param(prefix + ".weight", weight_);
    reg.add_param(prefix + ".bias", bias_);
  }

 private:
  Tensor<T> weight_, bias_;
  int stride_ = 1, padding_ = 0;
};

template <class T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(int channels, T eps = T(1e-5))
      : gamma_(Tensor<T>::ones({1, channels, 1, 1}, true)),
        beta_(Tensor<T>::zeros({1, channels, 1, 1}, true)),
        stats_(channels),
        eps_(eps) {}

  Tensor<T> forward(const Tensor<T>& x, Phase phase) {
    return batchnorm(x, gamma_, beta_, stats_, phase, eps_);
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    reg.add_param(prefix + ".gamma", gamma_);
    reg.add_param(prefix + ".beta", beta_);
    reg.add_buffer(prefix + ".running_mean", &stats_.running_mean);
    reg.add_buffer(prefix + ".running_var", &stats_.running_var);
  }

 private:
  Tensor<T> gamma_, beta_;
  BatchNormStats<T> stats_;
  T eps_ = T(1e-5);
};

// conv -> BatchNorm -> ReLU, exactly in that order. Default kernel 3x3 with
// padding k/2 (spatial size preserved at stride 1).
template <class T>
class BConv {
 public:
  BConv() = default;
  BConv(int c_in, int c_out, int k, Rng& rng) : conv_(c_in, c_out, k, rng), bn_(c_out) {}

  Tensor<T> forward(const Tensor<T>& x, Phase phase) {
    return relu(bn_.forward(conv_.forward(x), phase));
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    conv_.collect(prefix + ".conv", reg);
    bn_.collect(prefix + ".bn", reg);
  }

 private:
  Conv2d<T> conv_;
  BatchNorm<T> bn_;
};

// Squeeze-excitation style per-channel gating: GAP -> 1x1 reduce -> ReLU ->
// 1x1 expand -> sigmoid -> scale.
template <class T>
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(int channels, Rng& rng, int reduction = 16)
      : reduce_(channels, hidden_width(channels, reduction), 1, rng),
        expand_(hidden_width(channels, reduction), channels, 1, rng) {}

  static int hidden_width(int channels, int reduction) {
    return std::max(4, channels / std::max(1, reduction));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> gate = sigmoid(expand_.forward(relu(reduce_.forward(gap(x)))));
    return mul(x, gate);  // gate broadcasts over (h, w)
  }

  Tensor<T>& expand_bias() { return expand_.bias(); }
  Tensor<T>& reduce_weight() { return reduce_.weight(); }
  Tensor<T>& expand_weight() { return expand_.weight(); }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    reduce_.collect(prefix + ".reduce", reg);
    expand_.collect(prefix + ".expand", reg);
  }

 private:
  Conv2d<T> reduce_, expand_;
};

// 1x1 BConv unifying backbone channels to the configured width.
template <class T>
class CompressionLayer {
 public:
  CompressionLayer() = default;
  CompressionLayer(int c_in, int unified, Rng& rng) : block_(c_in, unified, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x, Phase phase) { return block_.forward(x, phase); }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) { block_.collect(prefix, reg); }

 private:
  BConv<T> block_;
};

// Two 3x3 convolutions with ReLU between; the sigmoid of the mask equation is
// applied by the caller.
template <class T>
class Conv3Block {
 public:
  Conv3Block() = default;
  Conv3Block(int channels, Rng& rng) : a_(channels, channels, 3, rng), b_(channels, channels, 3, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const { return b_.forward(relu(a_.forward(x))); }

  Conv2d<T>& first() { return a_; }
  Conv2d<T>& second() { return b_; }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    a_.collect(prefix + ".a", reg);
    b_.collect(prefix + ".b", reg);
  }

 private:
  Conv2d<T> a_, b_;
};

// 1x1 conv to one channel, sigmoid, bilinear resize to the target resolution.
template <class T>
class PredictionHead {
 public:
  PredictionHead() = default;
  PredictionHead(int c_in, Rng& rng) : conv_(c_in, 1, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x, int out_h, int out_w) const {
    return resize_bilinear(sigmoid(conv_.forward(x)), out_h, out_w);
  }

  Conv2d<T>& conv() { return conv_; }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    conv_.collect(prefix + ".conv", reg);
  }

 private:
  Conv2d<T> conv_;
};

}  // namespace gfrnet
