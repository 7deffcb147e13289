#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "mdepth/bins.hpp"
#include "mdepth/layers.hpp"
#include "mdepth/loss.hpp"
#include "mdepth/rng.hpp"
#include "mdepth/tensor.hpp"

namespace mdepth {

// Miniature hierarchical-fusion dilated network: strided stem + pool to 1/4
// resolution, four residual stages (the last two dilated), channel-concat of
// the stage taps, 1x1 score conv, stride-2 deconv head to 1/2 resolution.
//
// Variants used by the ablation experiments:
//   no_dilation - stages 3-4 run undilated, a max-pool is reinstated after
//                 stage 2 and the head deconv upsamples by 4 instead of 2.
//   no_concat   - the score conv consumes the last tap only.
struct NetArch {
  int k = 40;              // score channels == depth bins
  int stem_channels = 16;  // stage widths are {s, 2s, 2s, 2s}
  int blocks_per_stage = 2;
  bool no_dilation = false;
  bool no_concat = false;

  std::array<int, 4> stage_channels() const {
    return {stem_channels, 2 * stem_channels, 2 * stem_channels, 2 * stem_channels};
  }
  std::array<int, 4> stage_dilations() const {
    return no_dilation ? std::array<int, 4>{1, 1, 1, 1} : std::array<int, 4>{1, 1, 2, 4};
  }
  int input_multiple() const { return no_dilation ? 8 : 4; }
  int head_stride() const { return no_dilation ? 4 : 2; }

  // Main-path geometry for receptive-field analysis.
  std::vector<LayerGeom> rf_layers() const {
    std::vector<LayerGeom> ls;
    ls.push_back({3, 2, 1});  // stem conv
    ls.push_back({2, 2, 1});  // stem pool
    const auto dil = stage_dilations();
    for (int s = 0; s < 4; ++s) {
      if (no_dilation && s == 2) ls.push_back({2, 2, 1});  // reinstated pool
      for (int b = 0; b < blocks_per_stage; ++b) {
        ls.push_back({3, 1, dil[s]});
        ls.push_back({3, 1, dil[s]});
      }
    }
    ls.push_back({1, 1, 1});  // fusion conv
    return ls;
  }

  void validate() const {
    if (k < 2 || stem_channels < 1 || blocks_per_stage < 1)
      throw std::invalid_argument("NetArch: invalid field");
  }
  bool operator==(const NetArch&) const = default;
};

template <typename S>
struct ConvLayer {
  Tensor4<S> w;
  VecX<S> b;
  ConvSpec spec;
};

template <typename S>
struct BlockParams {
  ConvLayer<S> conv1, conv2;
  BNState<S> bn1, bn2;
  bool has_proj = false;
  ConvLayer<S> proj;
  BNState<S> proj_bn;
  int stage = 0, index = 0;
};

template <typename S>
struct NetParams {
  NetArch arch;
  ConvLayer<S> stem;
  BNState<S> stem_bn;
  std::vector<BlockParams<S>> blocks;  // stage-major order
  ConvLayer<S> fuse;                   // 1x1 score conv, no BN/ReLU
  Tensor4<S> head_w;                   // deconv weights, conv orientation
  VecX<S> head_b;                      // per-channel bias applied after deconv
  ConvSpec head_spec;
};

namespace detail {

inline ConvSpec conv3x3(int in_c, int out_c, int stride, int dilation) {
  ConvSpec s;
  s.kernel_h = s.kernel_w = 3;
  s.stride = stride;
  s.pad = dilation;  // preserves spatial size at stride 1, odd kernels
  s.dilation = dilation;
  s.in_channels = in_c;
  s.out_channels = out_c;
  return s;
}

inline ConvSpec conv1x1(int in_c, int out_c) {
  ConvSpec s;
  s.in_channels = in_c;
  s.out_channels = out_c;
  return s;
}

}  // namespace detail

// Zero-valued parameter set with the shapes the architecture dictates; also
// serves as the gradient/velocity container.
template <typename S>
NetParams<S> make_params(const NetArch& arch) {
  arch.validate();
  NetParams<S> p;
  p.arch = arch;
  const auto ch = arch.stage_channels();
  const auto dil = arch.stage_dilations();

  p.stem.spec = detail::conv3x3(3, arch.stem_channels, 2, 1);
  p.stem.spec.pad = 1;
  p.stem.w = Tensor4<S>(arch.stem_channels, 3, 3, 3);
  p.stem.b = VecX<S>::Zero(arch.stem_channels);
  p.stem_bn = BNState<S>::make(arch.stem_channels);

  int in_c = arch.stem_channels;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < arch.blocks_per_stage; ++b) {
      BlockParams<S> blk;
      blk.stage = s;
      blk.index = b;
      const int out_c = ch[s];
      blk.conv1.spec = detail::conv3x3(in_c, out_c, 1, dil[s]);
      blk.conv1.w = Tensor4<S>(out_c, in_c, 3, 3);
      blk.conv1.b = VecX<S>::Zero(out_c);
      blk.bn1 = BNState<S>::make(out_c);
      blk.conv2.spec = detail::conv3x3(out_c, out_c, 1, dil[s]);
      blk.conv2.w = Tensor4<S>(out_c, out_c, 3, 3);
      blk.conv2.b = VecX<S>::Zero(out_c);
      blk.bn2 = BNState<S>::make(out_c);
      blk.has_proj = in_c != out_c;
      if (blk.has_proj) {
        blk.proj.spec = detail::conv1x1(in_c, out_c);
        blk.proj.w = Tensor4<S>(out_c, in_c, 1, 1);
        blk.proj.b = VecX<S>::Zero(out_c);
        blk.proj_bn = BNState<S>::make(out_c);
      }
      p.blocks.push_back(std::move(blk));
      in_c = out_c;
    }
  }

  const int fuse_in = arch.no_concat ? ch[3] : ch[0] + ch[1] + ch[2] + ch[3];
  p.fuse.spec = detail::conv1x1(fuse_in, arch.k);
  p.fuse.w = Tensor4<S>(arch.k, fuse_in, 1, 1);
  p.fuse.b = VecX<S>::Zero(arch.k);

  const int hs = arch.head_stride();
  p.head_spec.kernel_h = p.head_spec.kernel_w = 2 * hs;
  p.head_spec.stride = hs;
  p.head_spec.pad = hs / 2;
  p.head_spec.in_channels = arch.k;
  p.head_spec.out_channels = arch.k;
  p.head_w = Tensor4<S>(arch.k, arch.k, 2 * hs, 2 * hs);
  p.head_b = VecX<S>::Zero(arch.k);
  return p;
}

// Visits every learnable parameter in a fixed canonical order.
// f(name, pointer, length, dims, weight_decay_exempt)
template <typename NP, typename F>
void visit_params(NP& p, F&& f) {
  auto ten = [&](const std::string& name, auto& t, bool exempt) {
    f(name, t.data(), static_cast<std::size_t>(t.size()),
      std::vector<int>{t.n(), t.c(), t.h(), t.w()}, exempt);
  };
  auto vec = [&](const std::string& name, auto& v, bool exempt) {
    f(name, v.data(), static_cast<std::size_t>(v.size()),
      std::vector<int>{static_cast<int>(v.size())}, exempt);
  };
  auto bn = [&](const std::string& name, auto& st) {
    vec(name + ".gamma", st.gamma, true);
    vec(name + ".beta", st.beta, true);
  };
  ten("stem.conv.w", p.stem.w, false);
  vec("stem.conv.b", p.stem.b, false);
  bn("stem.bn", p.stem_bn);
  for (auto& blk : p.blocks) {
    const std::string base = "s" + std::to_string(blk.stage + 1) + ".b" + std::to_string(blk.index);
    ten(base + ".conv1.w", blk.conv1.w, false);
    vec(base + ".conv1.b", blk.conv1.b, false);
    bn(base + ".bn1", blk.bn1);
    ten(base + ".conv2.w", blk.conv2.w, false);
    vec(base + ".conv2.b", blk.conv2.b, false);
    bn(base + ".bn2", blk.bn2);
    if (blk.has_proj) {
      ten(base + ".proj.w", blk.proj.w, false);
      vec(base + ".proj.b", blk.proj.b, false);
      bn(base + ".proj_bn", blk.proj_bn);
    }
  }
  ten("fuse.conv.w", p.fuse.w, false);
  vec("fuse.conv.b", p.fuse.b, false);
  ten("head.deconv.w", p.head_w, false);
  vec("head.deconv.b", p.head_b, false);
}

// Visits BN running statistics (trained state that is not a learnable).
template <typename NP, typename F>
void visit_bn_state(NP& p, F&& f) {
  auto vec = [&](const std::string& name, auto& v) {
    f(name, v.data(), static_cast<std::size_t>(v.size()),
      std::vector<int>{static_cast<int>(v.size())});
  };
  auto bn = [&](const std::string& name, auto& st) {
    vec(name + ".running_mean", st.running_mean);
    vec(name + ".running_var", st.running_var);
  };
  bn("stem.bn", p.stem_bn);
  for (auto& blk : p.blocks) {
    const std::string base = "s" + std::to_string(blk.stage + 1) + ".b" + std::to_string(blk.index);
    bn(base + ".bn1", blk.bn1);
    bn(base + ".bn2", blk.bn2);
    if (blk.has_proj) bn(base + ".proj_bn", blk.proj_bn);
  }
}

// He-normal weights (variance 2/fan_in with fan_in = in_channels*kh*kw),
// zero biases, identity BN. Bitwise deterministic in the seed.
template <typename S>
NetParams<S> init_params(std::uint64_t seed, const NetArch& arch) {
  NetParams<S> p = make_params<S>(arch);
  Rng rng(derive_seed(seed, kStreamInit, 0));
  visit_params(p, [&](const std::string& name, S* data, std::size_t len,
                      const std::vector<int>& dims, bool) {
    if (dims.size() != 4) return;  // biases and BN affines stay zero/identity
    (void)name;
    const double fan_in = static_cast<double>(dims[1]) * dims[2] * dims[3];
    const double stddev = std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < len; ++i) data[i] = static_cast<S>(stddev * rng.normal());
  });
  return p;
}

template <typename S>
struct BlockCache {
  Tensor4<S> in;
  Tensor4<S> pre1;  // conv1+bn1 output, pre-ReLU
  BNCache<S> bn1;
  Tensor4<S> r1;
  BNCache<S> bn2;
  BNCache<S> proj_bn;
  Tensor4<S> sum;  // residual add, pre-ReLU
};

template <typename S>
struct NetCache {
  bool valid = false;
  Tensor4<S> input;
  Tensor4<S> stem_pre;  // stem conv+bn output, pre-ReLU
  BNCache<S> stem_bn;
  PoolResult<S> stem_pool;
  Tensor4<S> stem_relu;
  std::vector<BlockCache<S>> blocks;
  std::array<Tensor4<S>, 4> taps;
  PoolResult<S> mid_pool;          // reinstated pool (no_dilation only)
  Tensor4<S> mid_pool_in;          // its input (= stage-2 output)
  std::array<std::vector<PoolResult<S>>, 4> tap_pools;  // resolution matching
  Tensor4<S> fused;
  Tensor4<S> fuse_out;
  Tensor4<S> scores;
};

// Sets every learnable and every BN running statistic to zero; the shape
// container then serves as a gradient or velocity buffer.
template <typename S>
void zero_fill_params(NetParams<S>& p) {
  visit_params(p, [](const std::string&, S* d, std::size_t len, const std::vector<int>&, bool) {
    std::fill(d, d + len, S(0));
  });
  visit_bn_state(p, [](const std::string&, S* d, std::size_t len, const std::vector<int>&) {
    std::fill(d, d + len, S(0));
  });
}

namespace detail {

template <bool Train, typename S, typename BN>
Tensor4<S> apply_bn(const Tensor4<S>& x, BN& st, BNCache<S>* c) {
  if constexpr (Train)
    return batchnorm_train(x, st, *c);
  else
    return batchnorm_eval(x, st);
}

template <bool Train, typename S, typename Params>
Tensor4<S> forward_impl(const Tensor4<S>& image, Params& params, NetCache<S>* cache) {
  const NetArch& arch = params.arch;
  arch.validate();
  if (image.c() != 3)
    throw std::invalid_argument("forward: expected 3 input channels, got " + image.dims_str());
  const int mult = arch.input_multiple();
  if (image.h() % mult != 0 || image.w() % mult != 0 || image.h() < mult || image.w() < mult)
    throw std::invalid_argument("forward: spatial dims must be positive multiples of " +
                                std::to_string(mult) + ", got " + image.dims_str());
  if ((image.array().abs() > S(1.000001)).any())
    throw std::invalid_argument("forward: input values must be normalized to [-1, 1]");

  BNCache<S> scratch;
  if constexpr (Train) {
    cache->valid = false;
    cache->input = image;
    cache->blocks.assign(params.blocks.size(), BlockCache<S>{});
    for (auto& tp : cache->tap_pools) tp.clear();
  }

  // Stem: conv /2, BN, ReLU, pool /2.
  Tensor4<S> x = conv2d(image, params.stem.w, params.stem.b, params.stem.spec);
  x = apply_bn<Train>(x, params.stem_bn, Train ? &cache->stem_bn : &scratch);
  if constexpr (Train) cache->stem_pre = x;
  x = relu(x);
  if constexpr (Train) cache->stem_relu = x;
  PoolResult<S> pooled = maxpool2(x);
  if constexpr (Train) cache->stem_pool = pooled;
  x = std::move(pooled.out);

  std::array<Tensor4<S>, 4> taps;
  std::size_t bi = 0;
  for (int s = 0; s < 4; ++s) {
    if (arch.no_dilation && s == 2) {
      if constexpr (Train) cache->mid_pool_in = x;
      PoolResult<S> mp = maxpool2(x);
      if constexpr (Train) cache->mid_pool = mp;
      x = std::move(mp.out);
    }
    for (int b = 0; b < arch.blocks_per_stage; ++b, ++bi) {
      auto& blk = params.blocks[bi];
      BlockCache<S>* bc = nullptr;
      if constexpr (Train) bc = &cache->blocks[bi];
      if constexpr (Train) bc->in = x;

      Tensor4<S> y = conv2d(x, blk.conv1.w, blk.conv1.b, blk.conv1.spec);
      y = apply_bn<Train>(y, blk.bn1, Train ? &bc->bn1 : &scratch);
      if constexpr (Train) bc->pre1 = y;
      y = relu(y);
      if constexpr (Train) bc->r1 = y;
      y = conv2d(y, blk.conv2.w, blk.conv2.b, blk.conv2.spec);
      y = apply_bn<Train>(y, blk.bn2, Train ? &bc->bn2 : &scratch);

      Tensor4<S> skip;
      if (blk.has_proj) {
        skip = conv2d(x, blk.proj.w, blk.proj.b, blk.proj.spec);
        skip = apply_bn<Train>(skip, blk.proj_bn, Train ? &bc->proj_bn : &scratch);
      } else {
        skip = x;
      }
      y.array() += skip.array();
      if constexpr (Train) bc->sum = y;
      x = relu(y);
    }
    taps[s] = x;
  }
  if constexpr (Train) cache->taps = taps;

  // Resolution matching: pool earlier taps down to the finest tap before
  // fusing (a no-op for the dilated architecture).
  const int target_h = taps[3].h();
  const int first_fused = arch.no_concat ? 3 : 0;
  for (int t = first_fused; t < 4; ++t) {
    while (taps[t].h() > target_h) {
      PoolResult<S> pr = maxpool2(taps[t]);
      taps[t] = pr.out;
      if constexpr (Train) cache->tap_pools[t].push_back(std::move(pr));
    }
  }

  Tensor4<S> fused;
  if (arch.no_concat) {
    fused = taps[3];
  } else {
    fused = concat_channels<S>({&taps[0], &taps[1], &taps[2], &taps[3]});
  }
  if constexpr (Train) cache->fused = fused;

  Tensor4<S> fout = conv2d(fused, params.fuse.w, params.fuse.b, params.fuse.spec);
  if constexpr (Train) cache->fuse_out = fout;

  Tensor4<S> scores = deconv2d(fout, params.head_w, params.head_spec);
  for (int n = 0; n < scores.n(); ++n)
    for (int c = 0; c < scores.c(); ++c) {
      S* pl = scores.plane(n, c);
      const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(scores.h()) * scores.w();
      for (std::ptrdiff_t i = 0; i < m; ++i) pl[i] += params.head_b[c];
    }
  check_finite(scores, "forward scores");
  if constexpr (Train) {
    cache->scores = scores;
    cache->valid = true;
  }
  return scores;
}

}  // namespace detail

// Train-mode forward: updates BN running statistics and fills the cache
// required by backward().
template <typename S>
Tensor4<S> forward_train(const Tensor4<S>& image, NetParams<S>& params, NetCache<S>& cache) {
  return detail::forward_impl<true>(image, params, &cache);
}

// Eval-mode forward: pure function of (image, params).
template <typename S>
Tensor4<S> forward_eval(const Tensor4<S>& image, const NetParams<S>& params) {
  return detail::forward_impl<false, S, const NetParams<S>>(image, params, nullptr);
}

// Full hand-derived backward pass; returns gradients in a parameter-shaped
// container (BN running-stat slots unused).
template <typename S>
NetParams<S> backward(const NetCache<S>& cache, const NetParams<S>& params,
                      const Tensor4<S>& grad_scores) {
  if (!cache.valid) throw std::invalid_argument("backward: stale or absent cache");
  if (!grad_scores.same_dims(cache.scores))
    throw std::invalid_argument("backward: grad_scores dims " + grad_scores.dims_str() +
                                " do not match forward output " + cache.scores.dims_str());
  check_finite(grad_scores, "backward grad_scores");

  NetParams<S> g = make_params<S>(params.arch);
  zero_fill_params(g);

  // Head deconv (+ its bias).
  const std::ptrdiff_t splane = static_cast<std::ptrdiff_t>(grad_scores.h()) * grad_scores.w();
  for (int n = 0; n < grad_scores.n(); ++n)
    for (int c = 0; c < grad_scores.c(); ++c) {
      const S* pl = grad_scores.plane(n, c);
      double acc = 0.0;
      for (std::ptrdiff_t i = 0; i < splane; ++i) acc += static_cast<double>(pl[i]);
      g.head_b[c] += static_cast<S>(acc);
    }
  DeconvGrads<S> hd = deconv2d_backward(cache.fuse_out, params.head_w, params.head_spec, grad_scores);
  g.head_w = std::move(hd.weights);

  // Fusion conv.
  ConvGrads<S> fg = conv2d_backward(cache.fused, params.fuse.w, params.fuse.spec, hd.input);
  g.fuse.w = std::move(fg.weights);
  g.fuse.b = std::move(fg.bias);

  // Split into per-tap gradients and undo the resolution-matching pools.
  std::array<Tensor4<S>, 4> tap_grads;
  if (params.arch.no_concat) {
    for (int t = 0; t < 3; ++t) {
      tap_grads[t] = Tensor4<S>(cache.taps[t].n(), cache.taps[t].c(),
                                cache.taps[t].h(), cache.taps[t].w());
    }
    tap_grads[3] = std::move(fg.input);
  } else {
    std::vector<int> counts;
    for (const auto& t : cache.taps) counts.push_back(t.c());
    auto split = concat_channels_backward(fg.input, counts);
    for (int t = 0; t < 4; ++t) tap_grads[t] = std::move(split[t]);
  }
  for (int t = 0; t < 4; ++t) {
    const auto& chain = cache.tap_pools[t];
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      Tensor4<S> like(it->out.n(), it->out.c(), it->out.h() * 2, it->out.w() * 2);
      tap_grads[t] = maxpool2_backward(*it, like, tap_grads[t]);
    }
  }

  // Stages in reverse; the running gradient at a stage output is the tap
  // gradient plus whatever flowed back from the next stage.
  Tensor4<S> gx = std::move(tap_grads[3]);
  std::size_t bi = cache.blocks.size();
  for (int s = 3; s >= 0; --s) {
    for (int b = params.arch.blocks_per_stage - 1; b >= 0; --b) {
      --bi;
      const auto& blk = params.blocks[bi];
      const auto& bc = cache.blocks[bi];
      auto& gb = g.blocks[bi];

      Tensor4<S> g_sum = relu_backward(bc.sum, gx);
      // main branch
      Tensor4<S> g_c2 = batchnorm_backward(bc.bn2, blk.bn2, g_sum, gb.bn2.gamma, gb.bn2.beta);
      ConvGrads<S> c2 = conv2d_backward(bc.r1, blk.conv2.w, blk.conv2.spec, g_c2);
      gb.conv2.w = std::move(c2.weights);
      gb.conv2.b = std::move(c2.bias);
      Tensor4<S> g_pre1 = relu_backward(bc.pre1, c2.input);
      Tensor4<S> g_c1 = batchnorm_backward(bc.bn1, blk.bn1, g_pre1, gb.bn1.gamma, gb.bn1.beta);
      ConvGrads<S> c1 = conv2d_backward(bc.in, blk.conv1.w, blk.conv1.spec, g_c1);
      gb.conv1.w = std::move(c1.weights);
      gb.conv1.b = std::move(c1.bias);
      // skip branch
      Tensor4<S> g_in = std::move(c1.input);
      if (blk.has_proj) {
        Tensor4<S> g_pc = batchnorm_backward(bc.proj_bn, blk.proj_bn, g_sum,
                                             gb.proj_bn.gamma, gb.proj_bn.beta);
        ConvGrads<S> pc = conv2d_backward(bc.in, blk.proj.w, blk.proj.spec, g_pc);
        gb.proj.w = std::move(pc.weights);
        gb.proj.b = std::move(pc.bias);
        g_in.array() += pc.input.array();
      } else {
        g_in.array() += g_sum.array();
      }
      gx = std::move(g_in);
    }
    if (s > 0) {
      if (params.arch.no_dilation && s == 2)
        gx = maxpool2_backward(cache.mid_pool, cache.mid_pool_in, gx);
      gx.array() += tap_grads[s - 1].array();
    }
  }

  // Stem.
  gx = maxpool2_backward(cache.stem_pool, cache.stem_relu, gx);
  gx = relu_backward(cache.stem_pre, gx);
  Tensor4<S> g_c0 = batchnorm_backward(cache.stem_bn, params.stem_bn, gx,
                                       g.stem_bn.gamma, g.stem_bn.beta);
  ConvGrads<S> c0 = conv2d_backward(cache.input, params.stem.w, params.stem.spec, g_c0);
  g.stem.w = std::move(c0.weights);
  g.stem.b = std::move(c0.bias);
  return g;
}

// Softmax over the score channels, then per-pixel soft-weighted-sum or
// hard-max depth. Inference math runs at 64-bit regardless of S.
template <typename S>
Tensor4<double> predict_depth(const Tensor4<S>& image, const NetParams<S>& params,
                              const Binning& binning, InferRule rule) {
  if (binning.k != params.arch.k)
    throw std::invalid_argument("predict_depth: binning K does not match network");
  const Tensor4<double> scores = forward_eval(image, params).template cast<double>();
  const Tensor4<double> probs = softmax(scores);
  const int K = probs.c();
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(probs.h()) * probs.w();
  Tensor4<double> depth(probs.n(), 1, probs.h(), probs.w());
  std::vector<double> p(K);
  for (int n = 0; n < probs.n(); ++n) {
    const double* pp = probs.plane(n, 0);
    double* d = depth.plane(n, 0);
    for (std::ptrdiff_t i = 0; i < plane; ++i) {
      for (int k = 0; k < K; ++k) p[k] = pp[i + k * plane];
      d[i] = rule == InferRule::kSoft ? soft_weighted_sum(p, binning) : hard_max(p, binning);
    }
  }
  return depth;
}

}  // namespace mdepth
