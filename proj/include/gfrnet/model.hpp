#pragma once

// The full network: three encoder streams (AiF, depth, focal stack), one
// guided refinement/fusion module per hierarchy, a top-down decoder, and
// auxiliary prediction heads on the channel-attended hierarchy-2 modality
// features. Ablation variants omit unused streams entirely so their
// parameters never exist.

#include <optional>

#include "gfrnet/backbone.hpp"
#include "gfrnet/decoder.hpp"
#include "gfrnet/grfm.hpp"
#include "gfrnet/loss.hpp"

namespace gfrnet {

template <class T>
class GfrNet {
 public:
  struct Outputs {
    std::array<Tensor<T>, 4> s;  // S_2..S_5, shallow to deep supervision
    std::optional<Tensor<T>> s_aif, s_dep;

    const Tensor<T>& final_map() const { return s[0]; }
  };

  GfrNet() = default;
  GfrNet(const EncoderConfig& enc, const VariantConfig& variant, int max_slices, Rng& rng)
      : variant_(variant), fs_enc_(enc, rng) {
    variant.validate();
    const int c = enc.unified_channels;
    if (variant.aif_branch) {
      aif_enc_.emplace(enc, rng);
      aux_aif_.emplace(c, rng);
    }
    if (variant.dep_branch) {
      dep_enc_.emplace(enc, rng);
      aux_dep_.emplace(c, rng);
    }
    for (auto& g : grfm_) g = Grfm<T>(c, max_slices, variant, rng);
    decoder_ = Decoder<T>(c, rng);
  }

  Outputs forward(const Tensor<T>& aif, const Tensor<T>& depth,
                  const std::vector<Tensor<T>>& slices, Phase phase) {
    const int h = aif.shape().h, w = aif.shape().w;
    SideOutputs<T> fs = fs_enc_.forward_stack(slices, phase);
    std::optional<SideOutputs<T>> fa, fd;
    if (aif_enc_) fa = aif_enc_->forward(aif, phase);
    if (dep_enc_) fd = dep_enc_->forward(depth, phase);

    Tensor<T> none;
    std::array<Tensor<T>, 4> feats;
    for (int k = 0; k < 4; ++k)
      feats[k] = grfm_[k].forward(fa ? (*fa)[k] : none, fd ? (*fd)[k] : none, fs[k], phase);

    Outputs out;
    out.s = decoder_.forward(feats, h, w, phase);
    if (aif_enc_) out.s_aif = aux_aif_->forward(grfm_[0].ca_aif((*fa)[0]), h, w);
    if (dep_enc_) out.s_dep = aux_dep_->forward(grfm_[0].ca_dep((*fd)[0]), h, w);
    return out;
  }

  // Deep-supervision loss over every available prediction; equals the six-term
  // sum for the full model.
  Tensor<T> loss(const Outputs& out, const Tensor<T>& gt) const {
    if (out.s_aif && out.s_dep)
      return total_loss<T>({out.s[0], out.s[1], out.s[2], out.s[3], *out.s_aif, *out.s_dep}, gt);
    Tensor<T> total = saliency_loss(out.s[0], gt);
    for (int k = 1; k < 4; ++k) total = add(total, saliency_loss(out.s[k], gt));
    if (out.s_aif) total = add(total, saliency_loss(*out.s_aif, gt));
    if (out.s_dep) total = add(total, saliency_loss(*out.s_dep, gt));
    return total;
  }

  const VariantConfig& variant() const { return variant_; }
  Grfm<T>& grfm(int k) { return grfm_[k]; }

  void collect(ParamRegistry<T>& reg) {
    fs_enc_.collect("enc_fs", reg);
    if (aif_enc_) aif_enc_->collect("enc_aif", reg);
    if (dep_enc_) dep_enc_->collect("enc_dep", reg);
    for (int k = 0; k < 4; ++k) grfm_[k].collect("grfm" + std::to_string(k + 2), reg);
    decoder_.collect("decoder", reg);
    if (aux_aif_) aux_aif_->collect("aux_aif", reg);
    if (aux_dep_) aux_dep_->collect("aux_dep", reg);
  }

 private:
  VariantConfig variant_;
  EncoderStream<T> fs_enc_;
  std::optional<EncoderStream<T>> aif_enc_, dep_enc_;
  std::array<Grfm<T>, 4> grfm_;
  Decoder<T> decoder_;
  std::optional<PredictionHead<T>> aux_aif_, aux_dep_;
};

}  // namespace gfrnet
