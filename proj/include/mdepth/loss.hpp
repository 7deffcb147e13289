#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mdepth/tensor.hpp"

namespace mdepth {

// Per-pixel integer labels in [0, K-1], or kIgnore for pixels excluded from
// loss and metrics.
struct LabelMap {
  static constexpr std::int32_t kIgnore = -1;

  LabelMap() = default;
  LabelMap(int n, int h, int w) : n_(n), h_(h), w_(w), labels_(static_cast<std::size_t>(n) * h * w, kIgnore) {}

  int n() const { return n_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return labels_.size(); }

  std::int32_t& at(int n, int h, int w) { return labels_[(static_cast<std::size_t>(n) * h_ + h) * w_ + w]; }
  std::int32_t at(int n, int h, int w) const { return labels_[(static_cast<std::size_t>(n) * h_ + h) * w_ + w]; }
  std::int32_t& operator[](std::size_t i) { return labels_[i]; }
  std::int32_t operator[](std::size_t i) const { return labels_[i]; }

 private:
  int n_ = 0, h_ = 0, w_ = 0;
  std::vector<std::int32_t> labels_;
};

// Channel-wise softmax with max subtraction.
template <typename S>
Tensor4<S> softmax(const Tensor4<S>& scores) {
  if (scores.c() < 2) throw std::invalid_argument("softmax: need at least 2 channels");
  check_finite(scores, "softmax input");
  const int K = scores.c();
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(scores.h()) * scores.w();
  Tensor4<S> out(scores.n(), K, scores.h(), scores.w());
  for (int n = 0; n < scores.n(); ++n) {
    const S* in = scores.plane(n, 0);
    S* o = out.plane(n, 0);
    for (std::ptrdiff_t i = 0; i < plane; ++i) {
      S mx = in[i];
      for (int k = 1; k < K; ++k) mx = std::max(mx, in[i + k * plane]);
      double denom = 0.0;
      for (int k = 0; k < K; ++k) {
        const double e = std::exp(static_cast<double>(in[i + k * plane] - mx));
        o[i + k * plane] = static_cast<S>(e);
        denom += e;
      }
      const S inv = static_cast<S>(1.0 / denom);
      for (int k = 0; k < K; ++k) o[i + k * plane] *= inv;
    }
  }
  return out;
}

template <typename S>
struct LossResult {
  double loss = 0.0;
  Tensor4<S> grad_scores;  // gradient w.r.t. the pre-softmax scores
};

// Multinomial logistic loss averaged over non-ignored pixels. The returned
// gradient is the fused softmax+loss gradient (p - one_hot)/M, zero at
// ignored pixels.
template <typename S>
LossResult<S> nll_loss(const Tensor4<S>& probs, const LabelMap& labels) {
  const int K = probs.c();
  if (labels.n() != probs.n() || labels.h() != probs.h() || labels.w() != probs.w())
    throw std::invalid_argument("nll_loss: label dims do not match score map");

  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(probs.h()) * probs.w();
  std::ptrdiff_t valid = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::int32_t l = labels[i];
    if (l == LabelMap::kIgnore) continue;
    if (l < 0 || l >= K)
      throw std::invalid_argument("nll_loss: label " + std::to_string(l) + " out of range for K=" +
                                  std::to_string(K));
    ++valid;
  }
  if (valid == 0) throw std::invalid_argument("nll_loss: all pixels ignored");

  LossResult<S> r;
  r.grad_scores = Tensor4<S>(probs.n(), K, probs.h(), probs.w());
  const S inv_m = S(1) / static_cast<S>(valid);
  double loss = 0.0, comp = 0.0;  // Kahan
  for (int n = 0; n < probs.n(); ++n) {
    const S* p = probs.plane(n, 0);
    S* g = r.grad_scores.plane(n, 0);
    for (std::ptrdiff_t i = 0; i < plane; ++i) {
      const std::int32_t l = labels[static_cast<std::size_t>(n) * plane + i];
      if (l == LabelMap::kIgnore) continue;
      const double term = -std::log(static_cast<double>(p[i + static_cast<std::ptrdiff_t>(l) * plane]));
      const double y = term - comp;
      const double t = loss + y;
      comp = (t - loss) - y;
      loss = t;
      for (int k = 0; k < K; ++k) {
        const std::ptrdiff_t j = i + static_cast<std::ptrdiff_t>(k) * plane;
        g[j] = (p[j] - (k == l ? S(1) : S(0))) * inv_m;
      }
    }
  }
  r.loss = loss / static_cast<double>(valid);
  return r;
}

}  // namespace mdepth
