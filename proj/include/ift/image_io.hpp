#pragma once

#include <string>

#include "ift/tensor.hpp"

namespace ift {

// PFM: 3-channel float, little-endian (scale -1.0), rows stored bottom-up.
// Tensors are [3,H,W] with values in linear radiance.
void save_pfm(const std::string& path, const Tensor<float>& img);
Tensor<float> load_pfm(const std::string& path);

// Binary PPM (P6), 8-bit. Input [3,H,W] in [0,1]; values are clipped.
void save_ppm(const std::string& path, const Tensor<float>& img);
Tensor<float> load_ppm(const std::string& path);

}  // namespace ift
