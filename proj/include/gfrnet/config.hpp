#pragma once

// Run configuration: model/train/data/io sections with JSON round-tripping,
// strict unknown-key rejection, and the two bundled presets.

#include <string>

#include "gfrnet/backbone.hpp"
#include "gfrnet/data.hpp"
#include "gfrnet/grfm.hpp"
#include "gfrnet/train.hpp"

namespace gfrnet {

struct RunConfig {
  // model
  int input_resolution = 256;
  double width_factor = 1.0;
  int unified_channels = 64;
  int slices = 12;
  std::string variant = "Full";
  // train
  TrainConfig train;
  // data: a directory of samples, or the synthesizer when path is empty
  std::string data_path;
  SynthSpec synth;
  // io
  std::string checkpoint_path = "checkpoint.bin";
  std::string report_path;

  EncoderConfig encoder() const {
    return EncoderConfig::scaled(width_factor, input_resolution, unified_channels);
  }
  VariantConfig variant_config() const { return VariantConfig::named(variant); }
  Dataset dataset() const {
    return data_path.empty() ? Dataset::synthetic(synth) : Dataset::from_dir(data_path, slices);
  }

  void validate() const;
  std::string to_json() const;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_json_file(const std::string& path);
  // "toy" (64x64, quarter width, 4 synthetic samples, 300 iterations) or
  // "paper" (full-scale recipe).
  static RunConfig preset(const std::string& name);
};

}  // namespace gfrnet
