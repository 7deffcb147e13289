#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mdepth/tensor.hpp"

namespace mdepth {

// Cross-correlation convolution (no kernel flip), zero padding, single
// stride/pad/dilation for both axes.
struct ConvSpec {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  int in_channels = 1;
  int out_channels = 1;
};

inline int effective_extent(int kernel, int dilation) {
  return dilation * (kernel - 1) + 1;
}

inline int conv_out_extent(int in, int kernel, int stride, int pad, int dilation) {
  return (in + 2 * pad - effective_extent(kernel, dilation)) / stride + 1;
}

inline int deconv_out_extent(int in, int kernel, int stride, int pad, int dilation) {
  return (in - 1) * stride - 2 * pad + effective_extent(kernel, dilation);
}

inline void validate_spec(const ConvSpec& s) {
  if (s.kernel_h < 1 || s.kernel_w < 1 || s.stride < 1 || s.dilation < 1 ||
      s.pad < 0 || s.in_channels < 1 || s.out_channels < 1)
    throw std::invalid_argument("ConvSpec: invalid field");
}

namespace detail {

// Output range [lo, hi] along one axis for which the tap at kernel offset k
// reads inside the unpadded input. Empty range when lo > hi.
struct TapRange {
  int lo = 0;
  int hi = -1;
};

inline TapRange tap_range(int in, int out, int k, int stride, int pad, int dilation) {
  const int off = k * dilation - pad;  // input index = o*stride + off
  TapRange r;
  r.lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const int top = in - 1 - off;
  if (top < 0) return r;  // empty
  r.hi = std::min(out - 1, top / stride);
  return r;
}

// out[o*stride + off] layout helpers shared by conv forward, conv
// grad-input and deconv. `Gather` reads input, `Scatter` writes it.
template <typename S>
void gather_plane(const S* in, int ih_dim, int iw_dim, S* out, int oh_dim, int ow_dim,
                  S wv, int kh, int kw, const ConvSpec& sp) {
  const TapRange rh = tap_range(ih_dim, oh_dim, kh, sp.stride, sp.pad, sp.dilation);
  const TapRange rw = tap_range(iw_dim, ow_dim, kw, sp.stride, sp.pad, sp.dilation);
  if (rh.lo > rh.hi || rw.lo > rw.hi) return;
  const int woff = kw * sp.dilation - sp.pad;
  for (int oh = rh.lo; oh <= rh.hi; ++oh) {
    const S* in_row = in + static_cast<std::ptrdiff_t>(oh * sp.stride + kh * sp.dilation - sp.pad) * iw_dim;
    S* out_row = out + static_cast<std::ptrdiff_t>(oh) * ow_dim;
    if (sp.stride == 1) {
      const S* src = in_row + rw.lo + woff;
      for (int ow = rw.lo; ow <= rw.hi; ++ow) out_row[ow] += wv * src[ow - rw.lo];
    } else {
      for (int ow = rw.lo; ow <= rw.hi; ++ow)
        out_row[ow] += wv * in_row[ow * sp.stride + woff];
    }
  }
}

template <typename S>
void scatter_plane(S* in, int ih_dim, int iw_dim, const S* out, int oh_dim, int ow_dim,
                   S wv, int kh, int kw, const ConvSpec& sp) {
  const TapRange rh = tap_range(ih_dim, oh_dim, kh, sp.stride, sp.pad, sp.dilation);
  const TapRange rw = tap_range(iw_dim, ow_dim, kw, sp.stride, sp.pad, sp.dilation);
  if (rh.lo > rh.hi || rw.lo > rw.hi) return;
  const int woff = kw * sp.dilation - sp.pad;
  for (int oh = rh.lo; oh <= rh.hi; ++oh) {
    S* in_row = in + static_cast<std::ptrdiff_t>(oh * sp.stride + kh * sp.dilation - sp.pad) * iw_dim;
    const S* out_row = out + static_cast<std::ptrdiff_t>(oh) * ow_dim;
    if (sp.stride == 1) {
      S* dst = in_row + rw.lo + woff;
      for (int ow = rw.lo; ow <= rw.hi; ++ow) dst[ow - rw.lo] += wv * out_row[ow];
    } else {
      for (int ow = rw.lo; ow <= rw.hi; ++ow)
        in_row[ow * sp.stride + woff] += wv * out_row[ow];
    }
  }
}

template <typename S>
S dot_plane(const S* in, int ih_dim, int iw_dim, const S* out, int oh_dim, int ow_dim,
            int kh, int kw, const ConvSpec& sp) {
  const TapRange rh = tap_range(ih_dim, oh_dim, kh, sp.stride, sp.pad, sp.dilation);
  const TapRange rw = tap_range(iw_dim, ow_dim, kw, sp.stride, sp.pad, sp.dilation);
  S acc = S(0);
  if (rh.lo > rh.hi || rw.lo > rw.hi) return acc;
  const int woff = kw * sp.dilation - sp.pad;
  for (int oh = rh.lo; oh <= rh.hi; ++oh) {
    const S* in_row = in + static_cast<std::ptrdiff_t>(oh * sp.stride + kh * sp.dilation - sp.pad) * iw_dim;
    const S* out_row = out + static_cast<std::ptrdiff_t>(oh) * ow_dim;
    if (sp.stride == 1) {
      const S* src = in_row + rw.lo + woff;
      for (int ow = rw.lo; ow <= rw.hi; ++ow) acc += out_row[ow] * src[ow - rw.lo];
    } else {
      for (int ow = rw.lo; ow <= rw.hi; ++ow)
        acc += out_row[ow] * in_row[ow * sp.stride + woff];
    }
  }
  return acc;
}

template <typename S>
void validate_conv_args(const Tensor4<S>& input, const Tensor4<S>& weights, const ConvSpec& sp) {
  validate_spec(sp);
  if (weights.n() != sp.out_channels || weights.c() != sp.in_channels ||
      weights.h() != sp.kernel_h || weights.w() != sp.kernel_w)
    throw std::invalid_argument("conv: weight dims " + weights.dims_str() + " do not match spec");
  if (input.c() != sp.in_channels)
    throw std::invalid_argument("conv: input has " + std::to_string(input.c()) +
                                " channels, spec expects " + std::to_string(sp.in_channels));
  if (effective_extent(sp.kernel_h, sp.dilation) > input.h() + 2 * sp.pad ||
      effective_extent(sp.kernel_w, sp.dilation) > input.w() + 2 * sp.pad)
    throw std::invalid_argument("conv: effective kernel exceeds padded input extent");
}

}  // namespace detail

// Dilated 2-D convolution, cross-correlation orientation.
template <typename S>
Tensor4<S> conv2d(const Tensor4<S>& input, const Tensor4<S>& weights,
                  const VecX<S>& bias, const ConvSpec& sp) {
  detail::validate_conv_args(input, weights, sp);
  if (bias.size() != sp.out_channels)
    throw std::invalid_argument("conv2d: bias length mismatch");
  const int oh = conv_out_extent(input.h(), sp.kernel_h, sp.stride, sp.pad, sp.dilation);
  const int ow = conv_out_extent(input.w(), sp.kernel_w, sp.stride, sp.pad, sp.dilation);
  Tensor4<S> out(input.n(), sp.out_channels, oh, ow);
  for (int n = 0; n < input.n(); ++n) {
    for (int oc = 0; oc < sp.out_channels; ++oc) {
      S* out_plane = out.plane(n, oc);
      std::fill(out_plane, out_plane + static_cast<std::ptrdiff_t>(oh) * ow, bias[oc]);
      for (int ic = 0; ic < sp.in_channels; ++ic) {
        const S* in_plane = input.plane(n, ic);
        const S* w_plane = weights.plane(oc, ic);
        for (int kh = 0; kh < sp.kernel_h; ++kh)
          for (int kw = 0; kw < sp.kernel_w; ++kw)
            detail::gather_plane(in_plane, input.h(), input.w(), out_plane, oh, ow,
                                 w_plane[kh * sp.kernel_w + kw], kh, kw, sp);
      }
    }
  }
  check_finite(out, "conv2d");
  return out;
}

template <typename S>
struct ConvGrads {
  Tensor4<S> input;
  Tensor4<S> weights;
  VecX<S> bias;
};

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor4<S>& input, const Tensor4<S>& weights,
                             const ConvSpec& sp, const Tensor4<S>& grad_output) {
  detail::validate_conv_args(input, weights, sp);
  const int oh = conv_out_extent(input.h(), sp.kernel_h, sp.stride, sp.pad, sp.dilation);
  const int ow = conv_out_extent(input.w(), sp.kernel_w, sp.stride, sp.pad, sp.dilation);
  if (grad_output.n() != input.n() || grad_output.c() != sp.out_channels ||
      grad_output.h() != oh || grad_output.w() != ow)
    throw std::invalid_argument("conv2d_backward: grad_output dims " + grad_output.dims_str() +
                                " do not match forward output");

  ConvGrads<S> g;
  g.input = Tensor4<S>(input.n(), input.c(), input.h(), input.w());
  g.weights = Tensor4<S>(sp.out_channels, sp.in_channels, sp.kernel_h, sp.kernel_w);
  g.bias = VecX<S>::Zero(sp.out_channels);

  for (int n = 0; n < input.n(); ++n) {
    for (int oc = 0; oc < sp.out_channels; ++oc) {
      const S* go_plane = grad_output.plane(n, oc);
      double bsum = 0.0;
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(oh) * ow; ++i)
        bsum += static_cast<double>(go_plane[i]);
      g.bias[oc] += static_cast<S>(bsum);
      for (int ic = 0; ic < sp.in_channels; ++ic) {
        const S* in_plane = input.plane(n, ic);
        S* gin_plane = g.input.plane(n, ic);
        const S* w_plane = weights.plane(oc, ic);
        S* gw_plane = g.weights.plane(oc, ic);
        for (int kh = 0; kh < sp.kernel_h; ++kh)
          for (int kw = 0; kw < sp.kernel_w; ++kw) {
            gw_plane[kh * sp.kernel_w + kw] +=
                detail::dot_plane(in_plane, input.h(), input.w(), go_plane, oh, ow, kh, kw, sp);
            detail::scatter_plane(gin_plane, input.h(), input.w(), go_plane, oh, ow,
                                  w_plane[kh * sp.kernel_w + kw], kh, kw, sp);
          }
      }
    }
  }
  check_finite(g.input, "conv2d_backward.grad_input");
  check_finite(g.weights, "conv2d_backward.grad_weights");
  check_finite(g.bias, "conv2d_backward.grad_bias");
  return g;
}

// Transposed convolution: the exact linear adjoint of conv2d under the same
// spec. Input carries spec.out_channels channels, output spec.in_channels.
// Bias-free; layers that need an output bias add it separately.
template <typename S>
Tensor4<S> deconv2d(const Tensor4<S>& input, const Tensor4<S>& weights, const ConvSpec& sp) {
  validate_spec(sp);
  if (weights.n() != sp.out_channels || weights.c() != sp.in_channels ||
      weights.h() != sp.kernel_h || weights.w() != sp.kernel_w)
    throw std::invalid_argument("deconv2d: weight dims mismatch");
  if (input.c() != sp.out_channels)
    throw std::invalid_argument("deconv2d: input channels must equal spec.out_channels");
  const int oh = deconv_out_extent(input.h(), sp.kernel_h, sp.stride, sp.pad, sp.dilation);
  const int ow = deconv_out_extent(input.w(), sp.kernel_w, sp.stride, sp.pad, sp.dilation);
  if (oh < 1 || ow < 1) throw std::invalid_argument("deconv2d: empty output");

  Tensor4<S> out(input.n(), sp.in_channels, oh, ow);
  for (int n = 0; n < input.n(); ++n)
    for (int oc = 0; oc < sp.out_channels; ++oc) {
      const S* src_plane = input.plane(n, oc);
      for (int ic = 0; ic < sp.in_channels; ++ic) {
        S* dst_plane = out.plane(n, ic);
        const S* w_plane = weights.plane(oc, ic);
        for (int kh = 0; kh < sp.kernel_h; ++kh)
          for (int kw = 0; kw < sp.kernel_w; ++kw)
            detail::scatter_plane(dst_plane, oh, ow, src_plane, input.h(), input.w(),
                                  w_plane[kh * sp.kernel_w + kw], kh, kw, sp);
      }
    }
  check_finite(out, "deconv2d");
  return out;
}

template <typename S>
struct DeconvGrads {
  Tensor4<S> input;
  Tensor4<S> weights;
};

template <typename S>
DeconvGrads<S> deconv2d_backward(const Tensor4<S>& input, const Tensor4<S>& weights,
                                 const ConvSpec& sp, const Tensor4<S>& grad_output) {
  validate_spec(sp);
  const int oh = deconv_out_extent(input.h(), sp.kernel_h, sp.stride, sp.pad, sp.dilation);
  const int ow = deconv_out_extent(input.w(), sp.kernel_w, sp.stride, sp.pad, sp.dilation);
  if (grad_output.n() != input.n() || grad_output.c() != sp.in_channels ||
      grad_output.h() != oh || grad_output.w() != ow)
    throw std::invalid_argument("deconv2d_backward: grad_output dims mismatch");

  DeconvGrads<S> g;
  g.input = Tensor4<S>(input.n(), input.c(), input.h(), input.w());
  g.weights = Tensor4<S>(sp.out_channels, sp.in_channels, sp.kernel_h, sp.kernel_w);

  // Adjoint of a scatter is the gather with the same index map.
  for (int n = 0; n < input.n(); ++n)
    for (int oc = 0; oc < sp.out_channels; ++oc) {
      S* gin_plane = g.input.plane(n, oc);
      const S* in_plane = input.plane(n, oc);
      for (int ic = 0; ic < sp.in_channels; ++ic) {
        const S* go_plane = grad_output.plane(n, ic);
        const S* w_plane = weights.plane(oc, ic);
        S* gw_plane = g.weights.plane(oc, ic);
        for (int kh = 0; kh < sp.kernel_h; ++kh)
          for (int kw = 0; kw < sp.kernel_w; ++kw) {
            detail::gather_plane(go_plane, oh, ow, gin_plane, input.h(), input.w(),
                                 w_plane[kh * sp.kernel_w + kw], kh, kw, sp);
            gw_plane[kh * sp.kernel_w + kw] +=
                detail::dot_plane(go_plane, oh, ow, in_plane, input.h(), input.w(), kh, kw, sp);
          }
      }
    }
  check_finite(g.input, "deconv2d_backward.grad_input");
  check_finite(g.weights, "deconv2d_backward.grad_weights");
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization

enum class Mode { kTrain, kEval };

template <typename S>
struct BNState {
  VecX<S> gamma;
  VecX<S> beta;
  VecX<S> running_mean;
  VecX<S> running_var;
  S momentum = S(0.1);
  S eps = S(1e-5);

  static BNState make(int channels) {
    BNState st;
    st.gamma = VecX<S>::Ones(channels);
    st.beta = VecX<S>::Zero(channels);
    st.running_mean = VecX<S>::Zero(channels);
    st.running_var = VecX<S>::Ones(channels);
    return st;
  }
  int channels() const { return static_cast<int>(gamma.size()); }
};

template <typename S>
struct BNCache {
  Tensor4<S> xhat;
  VecX<S> inv_std;
  bool valid = false;
};

template <typename S>
Tensor4<S> batchnorm_train(const Tensor4<S>& input, BNState<S>& state, BNCache<S>& cache) {
  if (input.c() != state.channels())
    throw std::invalid_argument("batchnorm: channel count mismatch");
  const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(input.n()) * input.h() * input.w();
  if (m == 0) throw std::invalid_argument("batchnorm: zero batch*spatial extent, variance undefined");
  if (state.eps <= S(0)) throw std::invalid_argument("batchnorm: epsilon must be positive");

  const int C = state.channels();
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(input.h()) * input.w();
  cache.xhat = Tensor4<S>(input.n(), C, input.h(), input.w());
  cache.inv_std = VecX<S>(C);
  Tensor4<S> out(input.n(), C, input.h(), input.w());

  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < input.n(); ++n) {
      const S* p = input.plane(n, c);
      for (std::ptrdiff_t i = 0; i < plane; ++i) {
        const double v = static_cast<double>(p[i]);
        sum += v;
        sq += v * v;
      }
    }
    const double mean = sum / static_cast<double>(m);
    double var = sq / static_cast<double>(m) - mean * mean;
    var = std::max(var, 0.0);
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(state.eps));
    cache.inv_std[c] = static_cast<S>(istd);

    for (int n = 0; n < input.n(); ++n) {
      const S* p = input.plane(n, c);
      S* xh = cache.xhat.plane(n, c);
      S* o = out.plane(n, c);
      const S mu = static_cast<S>(mean);
      const S is = static_cast<S>(istd);
      for (std::ptrdiff_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mu) * is;
        o[i] = state.gamma[c] * xh[i] + state.beta[c];
      }
    }
    state.running_mean[c] = (S(1) - state.momentum) * state.running_mean[c] +
                            state.momentum * static_cast<S>(mean);
    state.running_var[c] = (S(1) - state.momentum) * state.running_var[c] +
                           state.momentum * static_cast<S>(var);
  }
  cache.valid = true;
  check_finite(out, "batchnorm");
  return out;
}

template <typename S>
Tensor4<S> batchnorm_eval(const Tensor4<S>& input, const BNState<S>& state) {
  if (input.c() != state.channels())
    throw std::invalid_argument("batchnorm: channel count mismatch");
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(input.h()) * input.w();
  Tensor4<S> out(input.n(), input.c(), input.h(), input.w());
  for (int c = 0; c < input.c(); ++c) {
    const S istd = S(1) / std::sqrt(state.running_var[c] + state.eps);
    const S scale = state.gamma[c] * istd;
    const S shift = state.beta[c] - state.running_mean[c] * scale;
    for (int n = 0; n < input.n(); ++n) {
      const S* p = input.plane(n, c);
      S* o = out.plane(n, c);
      for (std::ptrdiff_t i = 0; i < plane; ++i) o[i] = scale * p[i] + shift;
    }
  }
  check_finite(out, "batchnorm");
  return out;
}

// Train-mode backward: differentiates through the batch statistics.
template <typename S>
Tensor4<S> batchnorm_backward(const BNCache<S>& cache, const BNState<S>& state,
                              const Tensor4<S>& grad_output,
                              VecX<S>& grad_gamma, VecX<S>& grad_beta) {
  if (!cache.valid) throw std::invalid_argument("batchnorm_backward: stale or absent cache");
  if (!grad_output.same_dims(cache.xhat))
    throw std::invalid_argument("batchnorm_backward: grad_output dims mismatch");

  const int C = grad_output.c();
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(grad_output.h()) * grad_output.w();
  const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(grad_output.n()) * plane;
  grad_gamma = VecX<S>(C);
  grad_beta = VecX<S>(C);
  Tensor4<S> gin(grad_output.n(), C, grad_output.h(), grad_output.w());

  for (int c = 0; c < C; ++c) {
    double s0 = 0.0, s1 = 0.0;
    for (int n = 0; n < grad_output.n(); ++n) {
      const S* go = grad_output.plane(n, c);
      const S* xh = cache.xhat.plane(n, c);
      for (std::ptrdiff_t i = 0; i < plane; ++i) {
        s0 += static_cast<double>(go[i]);
        s1 += static_cast<double>(go[i]) * static_cast<double>(xh[i]);
      }
    }
    grad_beta[c] = static_cast<S>(s0);
    grad_gamma[c] = static_cast<S>(s1);
    const S mean_g = static_cast<S>(s0 / static_cast<double>(m));
    const S mean_gx = static_cast<S>(s1 / static_cast<double>(m));
    const S scale = state.gamma[c] * cache.inv_std[c];
    for (int n = 0; n < grad_output.n(); ++n) {
      const S* go = grad_output.plane(n, c);
      const S* xh = cache.xhat.plane(n, c);
      S* gi = gin.plane(n, c);
      for (std::ptrdiff_t i = 0; i < plane; ++i)
        gi[i] = scale * (go[i] - mean_g - xh[i] * mean_gx);
    }
  }
  check_finite(gin, "batchnorm_backward");
  return gin;
}

// ---------------------------------------------------------------------------
// ReLU, 2x2 max pooling, channel concat

template <typename S>
Tensor4<S> relu(const Tensor4<S>& input) {
  check_finite(input, "relu input");  // max() would silently swallow a NaN
  Tensor4<S> out(input.n(), input.c(), input.h(), input.w());
  out.array() = input.array().max(S(0));
  return out;
}

template <typename S>
Tensor4<S> relu_backward(const Tensor4<S>& input, const Tensor4<S>& grad_output) {
  if (!input.same_dims(grad_output))
    throw std::invalid_argument("relu_backward: dims mismatch");
  Tensor4<S> gin(input.n(), input.c(), input.h(), input.w());
  gin.array() = (input.array() > S(0)).select(grad_output.array(), S(0));
  return gin;
}

template <typename S>
struct PoolResult {
  Tensor4<S> out;
  std::vector<std::int64_t> argmax;  // flat input index per output element
};

// 2x2 stride-2 max pooling; ties go to the first element in row-major
// window order so the gradient route is deterministic.
template <typename S>
PoolResult<S> maxpool2(const Tensor4<S>& input) {
  if (input.h() % 2 != 0 || input.w() % 2 != 0)
    throw std::invalid_argument("maxpool2: spatial extent must be even, got " + input.dims_str());
  check_finite(input, "maxpool2 input");  // NaN would lose comparisons silently
  PoolResult<S> r;
  r.out = Tensor4<S>(input.n(), input.c(), input.h() / 2, input.w() / 2);
  r.argmax.resize(static_cast<std::size_t>(r.out.size()));
  std::size_t oi = 0;
  for (int n = 0; n < input.n(); ++n)
    for (int c = 0; c < input.c(); ++c) {
      const S* p = input.plane(n, c);
      const std::int64_t base = (static_cast<std::int64_t>(n) * input.c() + c) *
                                input.h() * input.w();
      S* o = r.out.plane(n, c);
      for (int oh = 0; oh < r.out.h(); ++oh)
        for (int ow = 0; ow < r.out.w(); ++ow) {
          const int i0 = 2 * oh * input.w() + 2 * ow;
          const int cand[4] = {i0, i0 + 1, i0 + input.w(), i0 + input.w() + 1};
          int best = cand[0];
          for (int k = 1; k < 4; ++k)
            if (p[cand[k]] > p[best]) best = cand[k];
          o[oh * r.out.w() + ow] = p[best];
          r.argmax[oi++] = base + best;
        }
    }
  return r;
}

template <typename S>
Tensor4<S> maxpool2_backward(const PoolResult<S>& pooled, const Tensor4<S>& input_like,
                             const Tensor4<S>& grad_output) {
  if (!grad_output.same_dims(pooled.out))
    throw std::invalid_argument("maxpool2_backward: grad_output dims mismatch");
  Tensor4<S> gin(input_like.n(), input_like.c(), input_like.h(), input_like.w());
  const S* go = grad_output.data();
  S* gi = gin.data();
  for (std::size_t i = 0; i < pooled.argmax.size(); ++i) gi[pooled.argmax[i]] += go[i];
  return gin;
}

template <typename S>
Tensor4<S> concat_channels(const std::vector<const Tensor4<S>*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: empty input list");
  int channels = 0;
  for (const auto* t : parts) {
    if (t->n() != parts[0]->n() || t->h() != parts[0]->h() || t->w() != parts[0]->w())
      throw std::invalid_argument("concat_channels: batch/spatial dims mismatch");
    channels += t->c();
  }
  Tensor4<S> out(parts[0]->n(), channels, parts[0]->h(), parts[0]->w());
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(out.h()) * out.w();
  for (int n = 0; n < out.n(); ++n) {
    int co = 0;
    for (const auto* t : parts)
      for (int c = 0; c < t->c(); ++c, ++co)
        std::copy(t->plane(n, c), t->plane(n, c) + plane, out.plane(n, co));
  }
  check_finite(out, "concat_channels");
  return out;
}

template <typename S>
std::vector<Tensor4<S>> concat_channels_backward(const Tensor4<S>& grad_output,
                                                 const std::vector<int>& channel_counts) {
  int total = 0;
  for (int c : channel_counts) total += c;
  if (total != grad_output.c())
    throw std::invalid_argument("concat_channels_backward: channel split mismatch");
  std::vector<Tensor4<S>> grads;
  grads.reserve(channel_counts.size());
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(grad_output.h()) * grad_output.w();
  int co = 0;
  for (int cc : channel_counts) {
    Tensor4<S> g(grad_output.n(), cc, grad_output.h(), grad_output.w());
    for (int n = 0; n < grad_output.n(); ++n)
      for (int c = 0; c < cc; ++c)
        std::copy(grad_output.plane(n, co + c), grad_output.plane(n, co + c) + plane,
                  g.plane(n, c));
    co += cc;
    grads.push_back(std::move(g));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Receptive field of the final layer's single output element.

struct LayerGeom {
  int kernel;
  int stride;
  int dilation;
};

inline std::pair<int, int> receptive_field(std::span<const LayerGeom> layers) {
  if (layers.empty()) throw std::invalid_argument("receptive_field: empty layer list");
  long rf = 1, jump = 1;
  for (const auto& l : layers) {
    if (l.kernel < 1 || l.stride < 1 || l.dilation < 1)
      throw std::invalid_argument("receptive_field: invalid layer geometry");
    rf += static_cast<long>(l.dilation) * (l.kernel - 1) * jump;
    jump *= l.stride;
  }
  return {static_cast<int>(rf), static_cast<int>(rf)};
}

}  // namespace mdepth
