#pragma once

#include <string>

#include "capnet/tensor.hpp"

namespace capnet {

// Binary netpbm IO. Color images are P6 (3,H,W) tensors in [0,1], grayscale
// maps are P5 (H,W) tensors. Writes clamp to [0,1] and round half up to a
// byte; reads divide by 255.
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& map);

// Corner-aligned bilinear resampling; works for rank-2 maps and rank-3
// (c,h,w) images. Also used to upsample attention maps.
Tensor bilinear_resize(const Tensor& t, std::size_t out_h, std::size_t out_w);

}  // namespace capnet
