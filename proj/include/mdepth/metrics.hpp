#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mdepth/loss.hpp"
#include "mdepth/tensor.hpp"

namespace mdepth {

// Standard monocular-depth error metrics over a masked pixel set.
struct MetricSet {
  double delta1 = 0.0;  // max(d^/d, d/d^) < 1.25
  double delta2 = 0.0;  // ... < 1.25^2
  double delta3 = 0.0;  // ... < 1.25^3
  double rel = 0.0;     // mean |d^ - d| / d
  double log10e = 0.0;  // mean |log10 d^ - log10 d|
  double rms = 0.0;     // sqrt(mean (d^ - d)^2)
  long count = 0;       // evaluated pixels
};

// Evaluates over pixels with mask set and, when a cap is given, gt <= cap.
MetricSet compute_metrics(const Tensor4<double>& pred, const Tensor4<double>& gt,
                          const MaskMap& mask, std::optional<double> cap = std::nullopt);

// Fraction of non-ignored pixels with exactly equal labels.
double pixel_accuracy(const LabelMap& pred, const LabelMap& gt);

// K x K counts, row = ground truth, column = prediction. merge > 1 sums
// contiguous groups of bins (K must be divisible by merge).
struct ConfusionMatrix {
  int k = 0;
  std::vector<std::int64_t> counts;  // row-major k*k

  std::int64_t at(int row, int col) const { return counts[static_cast<std::size_t>(row) * k + col]; }
  std::int64_t& at(int row, int col) { return counts[static_cast<std::size_t>(row) * k + col]; }
  std::int64_t total() const;
  double near_diagonal_mass(int band) const;  // fraction with |row-col| <= band
  double asymmetry() const;                   // |C - C^T|_1 / |C|_1
};

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int k, int merge = 1);

}  // namespace mdepth
