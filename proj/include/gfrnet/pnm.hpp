#pragma once

// Binary PNM image I/O: 8-bit P5 (grayscale) and P6 (RGB) only. Loaded
// values are scaled to [0,1]; saving rounds to the nearest 8-bit level, so a
// load/save cycle of 8-bit data is bit-exact.

#include <string>

#include "gfrnet/tensor.hpp"

namespace gfrnet {

// Returns (1,1,H,W) for P5 and (1,3,H,W) for P6.
TensorF load_pnm(const std::string& path);

// Accepts (1,1,H,W) or (1,3,H,W) tensors; the extension does not matter, the
// channel count picks the format.
void save_pnm(const TensorF& image, const std::string& path);

}  // namespace gfrnet
