#pragma once

// Per-hierarchy guided refinement and fusion: the focal stack is split into
// two branches by 3x3 BConvs, each refined under the guidance of one modality
// (AiF or depth), cross-fused, and aggregated with the channel-attended
// modality features. Ablation variants rewire the paths through
// VariantConfig.

#include <optional>
#include <string>

#include "gfrnet/arm.hpp"
#include "gfrnet/drm.hpp"

namespace gfrnet {

enum class PathMode { arm, drm, ff_only };
enum class CfMode { cross_fusion, concat };
enum class AggMode { progressive, flat_concat, single_conv, none };

struct VariantConfig {
  PathMode aif_path = PathMode::arm;
  PathMode dep_path = PathMode::drm;
  bool fs_branch = true;
  bool aif_branch = true;
  bool dep_branch = true;
  CfMode cf_mode = CfMode::cross_fusion;
  FfMode ff_mode = FfMode::sum_max;
  AggMode agg_mode = AggMode::progressive;

  int guide_count() const { return int(aif_branch) + int(dep_branch); }

  void validate() const {
    if (!fs_branch) throw ConfigError("variant: the focal stack branch cannot be disabled");
    if (guide_count() < 2 && cf_mode == CfMode::cross_fusion)
      throw ConfigError("variant: cross fusion needs both the AiF and depth branches");
    switch (agg_mode) {
      case AggMode::progressive:
      case AggMode::flat_concat:
        if (guide_count() != 2)
          throw ConfigError("variant: tri-modal aggregation needs both guide branches");
        break;
      case AggMode::single_conv:
        if (guide_count() != 1)
          throw ConfigError("variant: single-conv aggregation needs exactly one guide branch");
        break;
      case AggMode::none:
        if (guide_count() != 0)
          throw ConfigError("variant: guide branches present but no aggregation configured");
        break;
    }
  }

  static VariantConfig named(const std::string& name) {
    VariantConfig v;  // defaults describe the full model
    if (name == "Full") return v;
    if (name == "M0") {
      v.aif_path = PathMode::ff_only;
      v.dep_path = PathMode::ff_only;
    } else if (name == "M1") {
      v.dep_path = PathMode::ff_only;
    } else if (name == "M2") {
      v.aif_path = PathMode::ff_only;
      v.dep_path = PathMode::drm;
    } else if (name == "M3") {
      v.dep_path = PathMode::arm;
    } else if (name == "M4") {
      v.aif_path = PathMode::drm;
    } else if (name == "M5") {
      v.aif_path = PathMode::drm;
      v.dep_path = PathMode::arm;
    } else if (name == "V0") {
      v.aif_branch = v.dep_branch = false;
      v.aif_path = v.dep_path = PathMode::ff_only;
      v.cf_mode = CfMode::concat;
      v.agg_mode = AggMode::none;
    } else if (name == "V1") {
      v.dep_branch = false;
      v.dep_path = PathMode::ff_only;
      v.cf_mode = CfMode::concat;
      v.agg_mode = AggMode::single_conv;
    } else if (name == "V2") {
      v.aif_branch = false;
      v.aif_path = PathMode::ff_only;
      v.cf_mode = CfMode::concat;
      v.agg_mode = AggMode::single_conv;
    } else if (name == "P0") {
      v.cf_mode = CfMode::concat;
    } else if (name == "P1") {
      v.ff_mode = FfMode::concat_conv;
    } else if (name == "P2") {
      v.agg_mode = AggMode::flat_concat;
    } else {
      throw ConfigError("unknown variant name: " + name);
    }
    return v;
  }
};

// One guided refinement path over a focal branch. The guide tensor is ignored
// in ff_only mode.
template <class T>
class RefinePath {
 public:
  RefinePath() = default;
  RefinePath(PathMode mode, int channels, int max_slices, FfMode ff_mode, Rng& rng) : mode_(mode) {
    switch (mode) {
      case PathMode::arm:
        arm_.emplace(channels, max_slices, ff_mode, rng);
        break;
      case PathMode::drm:
        drm_.emplace(channels, max_slices, ff_mode, rng);
        break;
      case PathMode::ff_only:
        ff_.emplace(channels, max_slices, ff_mode, rng);
        break;
    }
  }

  Tensor<T> forward(const Tensor<T>& guide, const Tensor<T>& f, Phase phase) {
    switch (mode_) {
      case PathMode::arm:
        return arm_->forward(guide, f, phase);
      case PathMode::drm:
        return drm_->forward(guide, f, phase);
      default:
        return ff_->forward(f, phase);
    }
  }

  PathMode mode() const { return mode_; }
  Arm<T>& arm() { return *arm_; }
  Drm<T>& drm() { return *drm_; }
  FocalFusion<T>& ff() { return *ff_; }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    if (arm_) arm_->collect(prefix + ".arm", reg);
    if (drm_) drm_->collect(prefix + ".drm", reg);
    if (ff_) ff_->collect(prefix + ".ff", reg);
  }

 private:
  PathMode mode_ = PathMode::ff_only;
  std::optional<Arm<T>> arm_;
  std::optional<Drm<T>> drm_;
  std::optional<FocalFusion<T>> ff_;
};

template <class T>
class Grfm {
 public:
  Grfm() = default;
  Grfm(int channels, int max_slices, const VariantConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const bool dual = cfg.guide_count() == 2;
    if (cfg.aif_branch) {
      ca_a_.emplace(channels, rng);
      branch_a_.emplace(channels, channels, 3, rng);
      path_a_.emplace(cfg.aif_path, channels, max_slices, cfg.ff_mode, rng);
    }
    if (cfg.dep_branch) {
      ca_d_.emplace(channels, rng);
      branch_d_.emplace(channels, channels, 3, rng);
      path_d_.emplace(cfg.dep_path, channels, max_slices, cfg.ff_mode, rng);
    }
    if (!cfg.aif_branch && !cfg.dep_branch) {
      branch_a_.emplace(channels, channels, 3, rng);
      path_a_.emplace(PathMode::ff_only, channels, max_slices, cfg.ff_mode, rng);
    }
    if (dual) cf_.emplace(2 * channels, channels, 3, rng);
    switch (cfg.agg_mode) {
      case AggMode::progressive:
        agg_inner_.emplace(2 * channels, channels, 3, rng);
        agg_outer_.emplace(2 * channels, channels, 3, rng);
        break;
      case AggMode::flat_concat:
        agg_outer_.emplace(3 * channels, channels, 3, rng);
        break;
      case AggMode::single_conv:
        agg_outer_.emplace(2 * channels, channels, 3, rng);
        break;
      case AggMode::none:
        break;
    }
  }

  Tensor<T> ca_aif(const Tensor<T>& fa) const { return ca_a_->forward(fa); }
  Tensor<T> ca_dep(const Tensor<T>& fd) const { return ca_d_->forward(fd); }

  // F_f = BConv[Fd + Fa, Fd * Fa] (cross fusion) or BConv[Fd, Fa] (concat).
  Tensor<T> cross_fuse(const Tensor<T>& fd_path, const Tensor<T>& fa_path, Phase phase) {
    if (cfg_.cf_mode == CfMode::cross_fusion)
      return cf_->forward(concat_channels(add(fd_path, fa_path), mul(fd_path, fa_path)), phase);
    return cf_->forward(concat_channels(fd_path, fa_path), phase);
  }

  // F(i) = BConv[F_f, BConv[F_a, F_d]] progressively, or one BConv over the
  // flat three-way concatenation.
  Tensor<T> aggregate(const Tensor<T>& ff, const Tensor<T>& fa_g, const Tensor<T>& fd_g,
                      Phase phase) {
    if (cfg_.agg_mode == AggMode::progressive)
      return agg_outer_->forward(
          concat_channels(ff, agg_inner_->forward(concat_channels(fa_g, fd_g), phase)), phase);
    return agg_outer_->forward(concat_channels(ff, concat_channels(fa_g, fd_g)), phase);
  }

  // fa, fd: (1,C,H,W) guide features; f_fs: (N,C,H,W) focal features.
  Tensor<T> forward(const Tensor<T>& fa, const Tensor<T>& fd, const Tensor<T>& f_fs, Phase phase) {
    std::optional<Tensor<T>> fa_g, fd_g, out_a, out_d;
    if (cfg_.aif_branch) {
      fa_g = ca_a_->forward(fa);
      out_a = path_a_->forward(*fa_g, branch_a_->forward(f_fs, phase), phase);
    }
    if (cfg_.dep_branch) {
      fd_g = ca_d_->forward(fd);
      out_d = path_d_->forward(*fd_g, branch_d_->forward(f_fs, phase), phase);
    }
    Tensor<T> ff;
    if (out_a && out_d)
      ff = cross_fuse(*out_d, *out_a, phase);
    else if (out_a)
      ff = *out_a;
    else if (out_d)
      ff = *out_d;
    else
      ff = path_a_->forward(fa, branch_a_->forward(f_fs, phase), phase);

    switch (cfg_.agg_mode) {
      case AggMode::progressive:
      case AggMode::flat_concat:
        return aggregate(ff, *fa_g, *fd_g, phase);
      case AggMode::single_conv:
        return agg_outer_->forward(concat_channels(ff, out_a ? *fa_g : *fd_g), phase);
      case AggMode::none:
        return ff;
    }
    throw ConfigError("variant: unreachable aggregation mode");
  }

  const VariantConfig& config() const { return cfg_; }
  RefinePath<T>& aif_path() { return *path_a_; }
  RefinePath<T>& dep_path() { return *path_d_; }
  BConv<T>& branch_aif() { return *branch_a_; }
  BConv<T>& branch_dep() { return *branch_d_; }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) {
    if (ca_a_) ca_a_->collect(prefix + ".ca_a", reg);
    if (ca_d_) ca_d_->collect(prefix + ".ca_d", reg);
    if (branch_a_) branch_a_->collect(prefix + ".branch_a", reg);
    if (branch_d_) branch_d_->collect(prefix + ".branch_d", reg);
    if (path_a_) path_a_->collect(prefix + ".path_a", reg);
    if (path_d_) path_d_->collect(prefix + ".path_d", reg);
    if (cf_) cf_->collect(prefix + ".cf", reg);
    if (agg_inner_) agg_inner_->collect(prefix + ".agg_inner", reg);
    if (agg_outer_) agg_outer_->collect(prefix + ".agg_outer", reg);
  }

 private:
  VariantConfig cfg_;
  std::optional<ChannelAttention<T>> ca_a_, ca_d_;
  std::optional<BConv<T>> branch_a_, branch_d_;
  std::optional<RefinePath<T>> path_a_, path_d_;
  std::optional<BConv<T>> cf_;
  std::optional<BConv<T>> agg_inner_, agg_outer_;
};

}  // namespace gfrnet
