#pragma once

#include <span>
#include <vector>

namespace mdepth {

// Log-space depth discretization: K bins spanning [d_min, d_max] with
// constant log-width q, so labels 0 and K-1 land exactly on the endpoints.
struct Binning {
  double d_min = 0.0;
  double d_max = 0.0;
  int k = 0;
  double q = 0.0;
  std::vector<double> w;  // w[i] = ln(d_min) + q*i, the log-space bin centers
};

Binning make_binning(double d_min, double d_max, int k);

// Eq.-style quantization: round((ln d - ln d_min)/q), half away from zero,
// clamped to [0, K-1]. Out-of-range depths clamp rather than error.
int quantize_depth(double d, const Binning& b);

// exp(w . p) after renormalizing p (sum must already be within 1e-4 of 1).
double soft_weighted_sum(std::span<const double> p, const Binning& b);

// Bin center of the most probable bin; ties break toward the smaller index.
double hard_max(std::span<const double> p, const Binning& b);

enum class InferRule { kSoft, kHard };

}  // namespace mdepth
