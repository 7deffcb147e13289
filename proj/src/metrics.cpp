#include "mdepth/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mdepth {

namespace {

// Kahan-compensated accumulator for the error sums.
struct Acc {
  double sum = 0.0, comp = 0.0;
  void add(double v) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

MetricSet compute_metrics(const Tensor4<double>& pred, const Tensor4<double>& gt,
                          const MaskMap& mask, std::optional<double> cap) {
  if (!pred.same_dims(gt) || pred.n() != mask.n() || pred.h() != mask.h() || pred.w() != mask.w())
    throw std::invalid_argument("compute_metrics: dims mismatch between pred " + pred.dims_str() +
                                ", gt " + gt.dims_str() + " and mask");
  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  long n1 = 0, n2 = 0, n3 = 0, count = 0;
  Acc rel, lg, sq;
  for (int n = 0; n < pred.n(); ++n)
    for (int y = 0; y < pred.h(); ++y)
      for (int x = 0; x < pred.w(); ++x) {
        if (!mask(n, 0, y, x)) continue;
        const double g = gt(n, 0, y, x);
        if (cap && g > *cap) continue;
        const double p = pred(n, 0, y, x);
        if (!(g > 0.0) || !(p > 0.0))
          throw std::invalid_argument("compute_metrics: non-positive depth on evaluated pixel");
        ++count;
        const double ratio = std::max(p / g, g / p);
        if (ratio < t1) ++n1;
        if (ratio < t2) ++n2;
        if (ratio < t3) ++n3;
        rel.add(std::abs(p - g) / g);
        lg.add(std::abs(std::log10(p) - std::log10(g)));
        sq.add((p - g) * (p - g));
      }
  if (count == 0) throw std::invalid_argument("compute_metrics: zero evaluable pixels");
  MetricSet m;
  m.count = count;
  const double inv = 1.0 / static_cast<double>(count);
  m.delta1 = n1 * inv;
  m.delta2 = n2 * inv;
  m.delta3 = n3 * inv;
  m.rel = rel.sum * inv;
  m.log10e = lg.sum * inv;
  m.rms = std::sqrt(sq.sum * inv);
  return m;
}

double pixel_accuracy(const LabelMap& pred, const LabelMap& gt) {
  if (pred.n() != gt.n() || pred.h() != gt.h() || pred.w() != gt.w())
    throw std::invalid_argument("pixel_accuracy: dims mismatch");
  long count = 0, hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == LabelMap::kIgnore || pred[i] == LabelMap::kIgnore) continue;
    ++count;
    if (gt[i] == pred[i]) ++hits;
  }
  if (count == 0) throw std::invalid_argument("pixel_accuracy: zero evaluable pixels");
  return static_cast<double>(hits) / static_cast<double>(count);
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t v : counts) t += v;
  return t;
}

double ConfusionMatrix::near_diagonal_mass(int band) const {
  std::int64_t near = 0, t = 0;
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      t += at(r, c);
      if (std::abs(r - c) <= band) near += at(r, c);
    }
  return t == 0 ? 0.0 : static_cast<double>(near) / static_cast<double>(t);
}

double ConfusionMatrix::asymmetry() const {
  std::int64_t num = 0, den = 0;
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      num += std::abs(at(r, c) - at(c, r));
      den += std::abs(at(r, c));
    }
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int k, int merge) {
  if (pred.n() != gt.n() || pred.h() != gt.h() || pred.w() != gt.w())
    throw std::invalid_argument("confusion: dims mismatch");
  if (merge < 1 || k % merge != 0)
    throw std::invalid_argument("confusion: merge factor " + std::to_string(merge) +
                                " does not divide K=" + std::to_string(k));
  ConfusionMatrix m;
  m.k = k / merge;
  m.counts.assign(static_cast<std::size_t>(m.k) * m.k, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == LabelMap::kIgnore || pred[i] == LabelMap::kIgnore) continue;
    if (gt[i] < 0 || gt[i] >= k || pred[i] < 0 || pred[i] >= k)
      throw std::invalid_argument("confusion: label out of range for K=" + std::to_string(k));
    ++m.at(gt[i] / merge, pred[i] / merge);
  }
  return m;
}

}  // namespace mdepth
