#pragma once

// Data layer: synthetic light-field samples (AiF image, depth map, focal
// stack rendered by depth-dependent blur, saliency ground truth),
// geometry-consistent augmentation, and dataset iteration over either a
// generator spec or an on-disk directory tree.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gfrnet/rng.hpp"
#include "gfrnet/tensor.hpp"

namespace gfrnet {

struct Sample {
  std::string id;
  TensorF aif;                  // (1,3,H,W)
  TensorF depth;                // (1,1,H,W), 0 = far, 1 = near
  TensorF gt;                   // (1,1,H,W), binary
  std::vector<TensorF> slices;  // N x (1,3,H,W)
};

struct SynthSpec {
  int resolution = 64;
  int slices = 12;
  std::vector<float> focal_depths;  // empty -> evenly spaced over [0,1]
  int r_max = 4;                    // blur radius at maximal defocus
  int shape_count = 3;
  float min_size = 0.15f;  // object size range, fraction of resolution
  float max_size = 0.35f;
  std::uint64_t seed = 0;
  int count = 8;

  std::vector<float> depths() const;
  void validate() const;
};

// Deterministic in (spec.seed, index).
Sample synthesize_sample(const SynthSpec& spec, int index);

// One draw of the augmentation transform; applied identically to every
// component of a sample.
struct AugmentDraw {
  bool flip = false;
  float scale = 1.0f;  // crop scale in [0.8, 1]
  float off_r = 0.0f;  // crop offsets as fractions of the slack
  float off_c = 0.0f;
  int rot_quarters = 0;  // 0..3 quarter turns
};

AugmentDraw draw_augment(Rng& rng);
Sample augment_with(const Sample& sample, const AugmentDraw& draw);
Sample augment(const Sample& sample, Rng& rng);

void save_sample(const Sample& sample, const std::string& root);
Sample load_sample(const std::string& root, const std::string& id, int slices);

class Dataset {
 public:
  static Dataset synthetic(const SynthSpec& spec);
  static Dataset from_dir(const std::string& root, int slices);

  std::size_t size() const { return spec_ ? std::size_t(spec_->count) : ids_.size(); }
  Sample get(std::size_t index) const;
  std::vector<std::size_t> epoch_order(std::uint64_t seed) const;

 private:
  std::optional<SynthSpec> spec_;
  std::string root_;
  std::vector<std::string> ids_;
  int slices_ = 12;
};

}  // namespace gfrnet
