#pragma once

#include <utility>

#include "mdepth/bins.hpp"
#include "mdepth/loss.hpp"
#include "mdepth/synth.hpp"
#include "mdepth/tensor.hpp"

namespace mdepth {

// [0,1] RGB to the [-1,1] network input convention.
template <typename S>
Tensor4<S> to_network_input(const Tensor4<float>& rgb) {
  Tensor4<S> x(rgb.n(), rgb.c(), rgb.h(), rgb.w());
  x.array() = rgb.array().template cast<S>() * S(2) - S(1);
  return x;
}

struct HalfResDepth {
  Tensor4<double> depth;
  MaskMap valid;
};

// Nearest-downsampled ground truth at the network's output resolution:
// sample (2y, 2x). Depth and mask stay aligned.
inline HalfResDepth half_res_ground_truth(const Tensor4<float>& depth, const MaskMap& valid) {
  if (depth.h() % 2 != 0 || depth.w() % 2 != 0)
    throw std::invalid_argument("half_res_ground_truth: odd spatial extent");
  HalfResDepth out;
  out.depth = Tensor4<double>(depth.n(), 1, depth.h() / 2, depth.w() / 2);
  out.valid = MaskMap(depth.n(), 1, depth.h() / 2, depth.w() / 2);
  for (int n = 0; n < depth.n(); ++n)
    for (int y = 0; y < out.depth.h(); ++y)
      for (int x = 0; x < out.depth.w(); ++x) {
        out.depth(n, 0, y, x) = depth(n, 0, 2 * y, 2 * x);
        out.valid(n, 0, y, x) = valid(n, 0, 2 * y, 2 * x);
      }
  return out;
}

// Quantized labels; invalid pixels map to the ignore sentinel.
inline LabelMap labels_from_depth(const Tensor4<double>& depth, const MaskMap& valid,
                                  const Binning& binning) {
  LabelMap labels(depth.n(), depth.h(), depth.w());
  for (int n = 0; n < depth.n(); ++n)
    for (int y = 0; y < depth.h(); ++y)
      for (int x = 0; x < depth.w(); ++x)
        if (valid(n, 0, y, x))
          labels.at(n, y, x) = quantize_depth(depth(n, 0, y, x), binning);
  return labels;
}

}  // namespace mdepth
