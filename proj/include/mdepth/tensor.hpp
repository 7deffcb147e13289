#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace mdepth {

template <typename Scalar>
using VecX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// Dense (batch, channel, height, width) tensor, row-major over (n, c, h, w).
// The single signal/parameter carrier for the whole library.
template <typename Scalar>
class Tensor4 {
 public:
  Tensor4() = default;

  Tensor4(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw std::invalid_argument("Tensor4: negative dimension");
    data_ = VecX<Scalar>::Zero(static_cast<Eigen::Index>(n) * c * h * w);
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  Eigen::Index size() const { return data_.size(); }

  bool same_dims(const Tensor4& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  Scalar& operator()(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  Scalar operator()(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  // Pointer to the start of one (n, c) plane of h*w contiguous values.
  Scalar* plane(int n, int c) { return data_.data() + plane_index(n, c); }
  const Scalar* plane(int n, int c) const { return data_.data() + plane_index(n, c); }

  VecX<Scalar>& array() { return data_; }
  const VecX<Scalar>& array() const { return data_; }

  void fill(Scalar v) { data_.setConstant(v); }

  std::string dims_str() const {
    return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," +
           std::to_string(h_) + "," + std::to_string(w_) + ")";
  }

  template <typename Other>
  Tensor4<Other> cast() const {
    Tensor4<Other> out(n_, c_, h_, w_);
    out.array() = data_.template cast<Other>();
    return out;
  }

 private:
  Eigen::Index index(int n, int c, int h, int w) const {
    return ((static_cast<Eigen::Index>(n) * c_ + c) * h_ + h) * w_ + w;
  }
  Eigen::Index plane_index(int n, int c) const {
    return (static_cast<Eigen::Index>(n) * c_ + c) * h_ * w_;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  VecX<Scalar> data_;
};

using Tensor4d = Tensor4<double>;
using Tensor4f = Tensor4<float>;
using MaskMap = Tensor4<std::uint8_t>;  // 0 = invalid pixel, 1 = valid

// Every operation output must be finite; a NaN/Inf is an error, never silent.
template <typename Scalar>
void check_finite(const Tensor4<Scalar>& t, const char* what) {
  if constexpr (std::is_floating_point_v<Scalar>) {
    if (!t.array().isFinite().all())
      throw std::runtime_error(std::string(what) + ": non-finite value in tensor " + t.dims_str());
  }
}

template <typename Scalar>
void check_finite(const VecX<Scalar>& v, const char* what) {
  if constexpr (std::is_floating_point_v<Scalar>) {
    if (!v.isFinite().all())
      throw std::runtime_error(std::string(what) + ": non-finite value in vector");
  }
}

}  // namespace mdepth
