#pragma once

// Test-only reference implementations, kept independent of the library
// kernels they check.

#include <stdexcept>

#include "mdepth/layers.hpp"
#include "mdepth/rng.hpp"
#include "mdepth/tensor.hpp"

namespace mdepth::testsupport {

// Per-output-element triple loop, accumulating bias first and then taps in
// (ic, kh, kw) order. Double precision throughout.
inline Tensor4d naive_conv2d(const Tensor4d& input, const Tensor4d& weights,
                             const VecX<double>& bias, const ConvSpec& sp) {
  const int oh = conv_out_extent(input.h(), sp.kernel_h, sp.stride, sp.pad, sp.dilation);
  const int ow = conv_out_extent(input.w(), sp.kernel_w, sp.stride, sp.pad, sp.dilation);
  Tensor4d out(input.n(), sp.out_channels, oh, ow);
  for (int n = 0; n < input.n(); ++n)
    for (int oc = 0; oc < sp.out_channels; ++oc)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = bias[oc];
          for (int ic = 0; ic < sp.in_channels; ++ic)
            for (int kh = 0; kh < sp.kernel_h; ++kh)
              for (int kw = 0; kw < sp.kernel_w; ++kw) {
                const int iy = y * sp.stride + kh * sp.dilation - sp.pad;
                const int ix = x * sp.stride + kw * sp.dilation - sp.pad;
                if (iy < 0 || iy >= input.h() || ix < 0 || ix >= input.w()) continue;
                acc += weights(oc, ic, kh, kw) * input(n, ic, iy, ix);
              }
          out(n, oc, y, x) = acc;
        }
  return out;
}

// Kernel with zeros inserted between taps: extent l*(k-1)+1.
inline Tensor4d zero_inserted_kernel(const Tensor4d& weights, int dilation) {
  const int kh = dilation * (weights.h() - 1) + 1;
  const int kw = dilation * (weights.w() - 1) + 1;
  Tensor4d out(weights.n(), weights.c(), kh, kw);
  for (int oc = 0; oc < weights.n(); ++oc)
    for (int ic = 0; ic < weights.c(); ++ic)
      for (int y = 0; y < weights.h(); ++y)
        for (int x = 0; x < weights.w(); ++x)
          out(oc, ic, y * dilation, x * dilation) = weights(oc, ic, y, x);
  return out;
}

inline Tensor4d random_tensor(Rng& rng, int n, int c, int h, int w, double lo = -1.0,
                              double hi = 1.0) {
  Tensor4d t(n, c, h, w);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

inline double dot(const Tensor4d& a, const Tensor4d& b) {
  if (!a.same_dims(b)) throw std::invalid_argument("dot: dims mismatch");
  return (a.array() * b.array()).sum();
}

}  // namespace mdepth::testsupport
