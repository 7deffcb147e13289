#include "mdepth/bins.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mdepth {

Binning make_binning(double d_min, double d_max, int k) {
  if (!(d_min > 0.0)) throw std::invalid_argument("make_binning: d_min must be positive");
  if (!(d_max > d_min)) throw std::invalid_argument("make_binning: d_max must exceed d_min");
  if (k < 2) throw std::invalid_argument("make_binning: need at least 2 bins");
  Binning b;
  b.d_min = d_min;
  b.d_max = d_max;
  b.k = k;
  b.q = (std::log(d_max) - std::log(d_min)) / (k - 1);
  b.w.resize(k);
  const double w0 = std::log(d_min);
  for (int i = 0; i < k; ++i) b.w[i] = w0 + b.q * i;
  return b;
}

int quantize_depth(double d, const Binning& b) {
  if (!(d > 0.0)) throw std::invalid_argument("quantize_depth: depth must be positive");
  const double l = std::round((std::log(d) - std::log(b.d_min)) / b.q);
  return static_cast<int>(std::clamp(l, 0.0, static_cast<double>(b.k - 1)));
}

namespace {

double checked_total(std::span<const double> p, const Binning& b, const char* who) {
  if (static_cast<int>(p.size()) != b.k)
    throw std::invalid_argument(std::string(who) + ": score vector length " +
                                std::to_string(p.size()) + " != K=" + std::to_string(b.k));
  double total = 0.0;
  for (double v : p) {
    if (v < 0.0) throw std::invalid_argument(std::string(who) + ": negative score entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-4)
    throw std::invalid_argument(std::string(who) + ": scores sum to " + std::to_string(total) +
                                ", expected 1 within 1e-4");
  return total;
}

}  // namespace

double soft_weighted_sum(std::span<const double> p, const Binning& b) {
  const double total = checked_total(p, b, "soft_weighted_sum");
  double acc = 0.0;
  for (int i = 0; i < b.k; ++i) acc += b.w[i] * p[i];
  return std::exp(acc / total);
}

double hard_max(std::span<const double> p, const Binning& b) {
  checked_total(p, b, "hard_max");
  int best = 0;
  for (int i = 1; i < b.k; ++i)
    if (p[i] > p[best]) best = i;
  return std::exp(b.w[best]);
}

}  // namespace mdepth
