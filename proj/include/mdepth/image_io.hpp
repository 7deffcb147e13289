#pragma once

#include <filesystem>

#include "mdepth/tensor.hpp"

namespace mdepth {

// Binary PPM (P6, maxval 255). Values quantized from [0,1] to 0..255.
void write_ppm(const std::filesystem::path& path, const Tensor4<float>& rgb);
Tensor4<float> read_ppm(const std::filesystem::path& path);

// PFM (Pf), 32-bit little-endian floats, scale -1.0, rows bottom-to-top.
void write_pfm(const std::filesystem::path& path, const Tensor4<float>& map);
Tensor4<float> read_pfm(const std::filesystem::path& path);

// Binary PGM (P5) validity mask: 255 = valid, 0 = invalid.
void write_pgm_mask(const std::filesystem::path& path, const MaskMap& mask);
MaskMap read_pgm_mask(const std::filesystem::path& path);

}  // namespace mdepth
