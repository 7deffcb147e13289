#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mdepth/layers.hpp"
#include "mdepth/loss.hpp"
#include "mdepth/net.hpp"
#include "mdepth/rng.hpp"
#include "mdepth/tensor.hpp"

namespace mdepth {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  int layer_configs = 0;
  bool all_pass = true;

  void add(std::string name, double err, double tol) {
    all_pass = all_pass && err < tol;
    entries.push_back({std::move(name), err, tol, err < tol});
  }
};

namespace gradcheck_detail {

inline constexpr double kStep = 1e-5;

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

inline Tensor4d random_tensor(Rng& rng, int n, int c, int h, int w, double lo = -1.0,
                              double hi = 1.0) {
  Tensor4d t(n, c, h, w);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Central difference of a scalar function against an analytic gradient over
// every coordinate of one buffer; returns the worst relative error.
inline double fd_against(double* buf, const double* analytic, std::size_t len,
                         const std::function<double()>& loss) {
  double worst = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double keep = buf[i];
    buf[i] = keep + kStep;
    const double lp = loss();
    buf[i] = keep - kStep;
    const double lm = loss();
    buf[i] = keep;
    const double fd = (lp - lm) / (2.0 * kStep);
    worst = std::max(worst, rel_err(analytic[i], fd));
  }
  return worst;
}

struct ConvConfig {
  int n, ic, oc, h, w, k, stride, pad, dilation;
};

inline double check_conv(Rng& rng, const ConvConfig& c) {
  ConvSpec sp{c.k, c.k, c.stride, c.pad, c.dilation, c.ic, c.oc};
  Tensor4d x = random_tensor(rng, c.n, c.ic, c.h, c.w);
  Tensor4d w = random_tensor(rng, c.oc, c.ic, c.k, c.k);
  VecX<double> b(c.oc);
  for (int i = 0; i < c.oc; ++i) b[i] = rng.uniform(-0.5, 0.5);
  const Tensor4d out0 = conv2d(x, w, b, sp);
  Tensor4d r = random_tensor(rng, out0.n(), out0.c(), out0.h(), out0.w());

  auto loss = [&] { return (conv2d(x, w, b, sp).array() * r.array()).sum(); };
  ConvGrads<double> g = conv2d_backward(x, w, sp, r);
  double worst = fd_against(x.data(), g.input.data(), static_cast<std::size_t>(x.size()), loss);
  worst = std::max(worst, fd_against(w.data(), g.weights.data(),
                                     static_cast<std::size_t>(w.size()), loss));
  worst = std::max(worst, fd_against(b.data(), g.bias.data(),
                                     static_cast<std::size_t>(b.size()), loss));
  return worst;
}

inline double check_deconv(Rng& rng, const ConvConfig& c) {
  ConvSpec sp{c.k, c.k, c.stride, c.pad, c.dilation, c.ic, c.oc};
  Tensor4d y = random_tensor(rng, c.n, c.oc, c.h, c.w);
  Tensor4d w = random_tensor(rng, c.oc, c.ic, c.k, c.k);
  const Tensor4d out0 = deconv2d(y, w, sp);
  Tensor4d r = random_tensor(rng, out0.n(), out0.c(), out0.h(), out0.w());

  auto loss = [&] { return (deconv2d(y, w, sp).array() * r.array()).sum(); };
  DeconvGrads<double> g = deconv2d_backward(y, w, sp, r);
  double worst = fd_against(y.data(), g.input.data(), static_cast<std::size_t>(y.size()), loss);
  worst = std::max(worst, fd_against(w.data(), g.weights.data(),
                                     static_cast<std::size_t>(w.size()), loss));
  return worst;
}

inline double check_batchnorm(Rng& rng, int n, int c, int h, int w) {
  Tensor4d x = random_tensor(rng, n, c, h, w);
  BNState<double> base = BNState<double>::make(c);
  for (int i = 0; i < c; ++i) {
    base.gamma[i] = rng.uniform(0.5, 1.5);
    base.beta[i] = rng.uniform(-0.5, 0.5);
  }
  Tensor4d r = random_tensor(rng, n, c, h, w);

  auto loss = [&] {
    BNState<double> st = base;  // running-stat updates must not leak between evals
    BNCache<double> cache;
    return (batchnorm_train(x, st, cache).array() * r.array()).sum();
  };
  BNState<double> st = base;
  BNCache<double> cache;
  batchnorm_train(x, st, cache);
  VecX<double> ggamma, gbeta;
  const Tensor4d gin = batchnorm_backward(cache, base, r, ggamma, gbeta);

  double worst = fd_against(x.data(), gin.data(), static_cast<std::size_t>(x.size()), loss);
  worst = std::max(worst, fd_against(base.gamma.data(), ggamma.data(),
                                     static_cast<std::size_t>(c), loss));
  worst = std::max(worst, fd_against(base.beta.data(), gbeta.data(),
                                     static_cast<std::size_t>(c), loss));
  return worst;
}

inline double check_relu(Rng& rng) {
  Tensor4d x = random_tensor(rng, 2, 3, 5, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i)  // keep away from the kink
    if (std::abs(x.data()[i]) < 0.01) x.data()[i] = 0.05;
  Tensor4d r = random_tensor(rng, 2, 3, 5, 5);
  auto loss = [&] { return (relu(x).array() * r.array()).sum(); };
  const Tensor4d gin = relu_backward(x, r);
  return fd_against(x.data(), gin.data(), static_cast<std::size_t>(x.size()), loss);
}

inline double check_maxpool(Rng& rng) {
  Tensor4d x = random_tensor(rng, 2, 2, 6, 6);
  Tensor4d r = random_tensor(rng, 2, 2, 3, 3);
  auto loss = [&] { return (maxpool2(x).out.array() * r.array()).sum(); };
  PoolResult<double> pr = maxpool2(x);
  const Tensor4d gin = maxpool2_backward(pr, x, r);
  return fd_against(x.data(), gin.data(), static_cast<std::size_t>(x.size()), loss);
}

inline double check_concat(Rng& rng) {
  Tensor4d a = random_tensor(rng, 1, 2, 4, 4);
  Tensor4d b = random_tensor(rng, 1, 3, 4, 4);
  Tensor4d r = random_tensor(rng, 1, 5, 4, 4);
  auto loss = [&] {
    return (concat_channels<double>({&a, &b}).array() * r.array()).sum();
  };
  auto parts = concat_channels_backward(r, {2, 3});
  double worst = fd_against(a.data(), parts[0].data(), static_cast<std::size_t>(a.size()), loss);
  worst = std::max(worst, fd_against(b.data(), parts[1].data(),
                                     static_cast<std::size_t>(b.size()), loss));
  return worst;
}

inline double check_softmax_nll(Rng& rng, int k, int h, int w) {
  Tensor4d scores = random_tensor(rng, 1, k, h, w, -2.0, 2.0);
  LabelMap labels(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      labels.at(0, y, x) = rng.uniform() < 0.2 ? LabelMap::kIgnore : rng.uniform_int(k);
  if (labels.at(0, 0, 0) == LabelMap::kIgnore) labels.at(0, 0, 0) = 0;

  auto loss = [&] { return nll_loss(softmax(scores), labels).loss; };
  const LossResult<double> lr = nll_loss(softmax(scores), labels);
  return fd_against(scores.data(), lr.grad_scores.data(),
                    static_cast<std::size_t>(scores.size()), loss);
}

// End-to-end on the reduced network (1 block per stage, 8 base channels,
// 16x16 input) over a random subset of parameters.
inline double check_end_to_end(Rng& rng, int subset_size) {
  NetArch arch;
  arch.k = 5;
  arch.stem_channels = 8;
  arch.blocks_per_stage = 1;
  NetParams<double> params = init_params<double>(rng.next_u64(), arch);

  Tensor4d x = random_tensor(rng, 1, 3, 16, 16, -0.99, 0.99);
  LabelMap labels(1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x2 = 0; x2 < 8; ++x2)
      labels.at(0, y, x2) = rng.uniform() < 0.15 ? LabelMap::kIgnore : rng.uniform_int(arch.k);
  if (labels.at(0, 0, 0) == LabelMap::kIgnore) labels.at(0, 0, 0) = 0;

  auto loss_of = [&](NetParams<double>& p) {
    NetCache<double> cache;
    const Tensor4d scores = forward_train(x, p, cache);
    return nll_loss(softmax(scores), labels).loss;
  };

  NetCache<double> cache;
  NetParams<double> fwd_params = params;  // keep the reference params pristine
  const Tensor4d scores = forward_train(x, fwd_params, cache);
  const LossResult<double> lr = nll_loss(softmax(scores), labels);
  NetParams<double> grads = backward(cache, params, lr.grad_scores);

  struct Flat {
    double* p;
    double* g;
  };
  std::vector<Flat> coords;
  std::vector<double*> gptr;
  visit_params(grads, [&](const std::string&, double* d, std::size_t len,
                          const std::vector<int>&, bool) {
    for (std::size_t i = 0; i < len; ++i) gptr.push_back(d + i);
  });
  std::size_t idx = 0;
  visit_params(params, [&](const std::string&, double* d, std::size_t len,
                           const std::vector<int>&, bool) {
    for (std::size_t i = 0; i < len; ++i) coords.push_back({d + i, gptr[idx++]});
  });

  double worst = 0.0;
  for (int s = 0; s < subset_size; ++s) {
    const Flat& f = coords[rng.uniform_int(static_cast<int>(coords.size()))];
    const double keep = *f.p;
    *f.p = keep + kStep;
    NetParams<double> pp = params;
    const double lp = loss_of(pp);
    *f.p = keep - kStep;
    NetParams<double> pm = params;
    const double lm = loss_of(pm);
    *f.p = keep;
    const double fd = (lp - lm) / (2.0 * kStep);
    worst = std::max(worst, rel_err(*f.g, fd));
  }
  return worst;
}

}  // namespace gradcheck_detail

// The full randomized finite-difference suite at 64-bit precision. Layer
// kernels must agree within 1e-4 relative error, the reduced end-to-end
// network within 1e-3; configurations span stride {1,2}, dilation {1,2,4}.
inline GradCheckReport run_gradient_checks(std::uint64_t seed) {
  namespace gd = gradcheck_detail;
  GradCheckReport report;
  Rng rng(seed);
  const double layer_tol = 1e-4, net_tol = 1e-3;

  const gd::ConvConfig conv_configs[] = {
      {1, 1, 1, 5, 5, 3, 1, 1, 1},  {2, 3, 4, 8, 8, 3, 1, 2, 2},
      {1, 2, 3, 9, 9, 3, 1, 4, 4},  {2, 2, 2, 8, 8, 3, 2, 1, 1},
      {1, 3, 2, 10, 10, 3, 2, 2, 2}, {1, 2, 4, 12, 9, 3, 2, 0, 4},
      {2, 1, 3, 7, 7, 1, 1, 0, 1},  {1, 4, 2, 6, 8, 2, 2, 1, 2},
  };
  for (const auto& c : conv_configs) {
    report.add("conv2d k" + std::to_string(c.k) + " s" + std::to_string(c.stride) + " d" +
                   std::to_string(c.dilation),
               gd::check_conv(rng, c), layer_tol);
    ++report.layer_configs;
  }

  const gd::ConvConfig deconv_configs[] = {
      {1, 2, 3, 4, 4, 4, 2, 1, 1}, {1, 1, 2, 5, 5, 3, 1, 1, 1},
      {2, 2, 2, 3, 3, 2, 2, 0, 1}, {1, 3, 2, 4, 5, 3, 1, 0, 2},
      {1, 2, 2, 4, 4, 8, 4, 2, 1}, {1, 2, 3, 5, 4, 3, 2, 1, 4},
  };
  for (const auto& c : deconv_configs) {
    report.add("deconv2d k" + std::to_string(c.k) + " s" + std::to_string(c.stride) + " d" +
                   std::to_string(c.dilation),
               gd::check_deconv(rng, c), layer_tol);
    ++report.layer_configs;
  }

  const int bn_configs[][4] = {{2, 3, 4, 4}, {1, 5, 6, 6}, {3, 2, 5, 7}};
  for (const auto& c : bn_configs) {
    report.add("batchnorm c" + std::to_string(c[1]),
               gd::check_batchnorm(rng, c[0], c[1], c[2], c[3]), layer_tol);
    ++report.layer_configs;
  }

  report.add("relu", gd::check_relu(rng), layer_tol);
  report.add("maxpool2", gd::check_maxpool(rng), layer_tol);
  report.add("concat_channels", gd::check_concat(rng), layer_tol);
  report.layer_configs += 3;

  report.add("softmax+nll K=5", gd::check_softmax_nll(rng, 5, 4, 4), layer_tol);
  report.add("softmax+nll K=11", gd::check_softmax_nll(rng, 11, 3, 5), layer_tol);
  report.layer_configs += 2;

  report.add("end-to-end reduced net", gd::check_end_to_end(rng, 64), net_tol);
  return report;
}

}  // namespace mdepth
