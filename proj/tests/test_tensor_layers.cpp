#include <doctest.h>

#include <cmath>

#include "mdepth/gradcheck.hpp"
#include "mdepth/layers.hpp"
#include "mdepth/rng.hpp"
#include "support/reference_ops.hpp"

using namespace mdepth;
namespace ts = mdepth::testsupport;

namespace {

ConvSpec spec_of(int k, int stride, int pad, int dil, int ic, int oc) {
  return ConvSpec{k, k, stride, pad, dil, ic, oc};
}

}  // namespace

TEST_CASE("conv2d scalar scaling") {
  Tensor4d x(1, 1, 3, 3);
  x.fill(1.0);
  Tensor4d w(1, 1, 1, 1);
  w(0, 0, 0, 0) = 2.0;
  VecX<double> b = VecX<double>::Zero(1);
  const Tensor4d y = conv2d(x, w, b, spec_of(1, 1, 0, 1, 1, 1));
  CHECK(y.n() == 1);
  CHECK(y.h() == 3);
  CHECK(y.w() == 3);
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(2.0));
}

TEST_CASE("conv2d dilation 1 bit-matches the naive triple loop") {
  Rng rng(11);
  for (int stride : {1, 2}) {
    const ConvSpec sp = spec_of(3, stride, 1, 1, 3, 4);
    const Tensor4d x = ts::random_tensor(rng, 2, 3, 9, 8);
    const Tensor4d w = ts::random_tensor(rng, 4, 3, 3, 3);
    VecX<double> b(4);
    for (int i = 0; i < 4; ++i) b[i] = rng.uniform(-1.0, 1.0);
    const Tensor4d got = conv2d(x, w, b, sp);
    const Tensor4d want = ts::naive_conv2d(x, w, b, sp);
    REQUIRE(got.same_dims(want));
    for (Eigen::Index i = 0; i < got.size(); ++i)
      CHECK(got.data()[i] == want.data()[i]);  // bitwise
  }
}

TEST_CASE("conv2d dilation equals zero-inserted-kernel oracle") {
  Rng rng(12);
  for (int dil : {1, 2, 4}) {
    const Tensor4d x = ts::random_tensor(rng, 1, 2, 11, 11);
    const Tensor4d w = ts::random_tensor(rng, 3, 2, 3, 3);
    VecX<double> b(3);
    for (int i = 0; i < 3; ++i) b[i] = rng.uniform(-1.0, 1.0);
    const Tensor4d got = conv2d(x, w, b, spec_of(3, 1, 0, dil, 2, 3));
    const Tensor4d expanded = ts::zero_inserted_kernel(w, dil);
    ConvSpec esp = spec_of(dil * 2 + 1, 1, 0, 1, 2, 3);
    esp.kernel_h = expanded.h();
    esp.kernel_w = expanded.w();
    const Tensor4d want = ts::naive_conv2d(x, expanded, b, esp);
    REQUIRE(got.same_dims(want));
    for (Eigen::Index i = 0; i < got.size(); ++i)
      CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d dilation 2 on 7x7 matches the spec'd 3x3 output size") {
  Rng rng(13);
  const Tensor4d x = ts::random_tensor(rng, 1, 1, 7, 7);
  const Tensor4d w = ts::random_tensor(rng, 1, 1, 3, 3);
  VecX<double> b = VecX<double>::Zero(1);
  const Tensor4d y = conv2d(x, w, b, spec_of(3, 1, 0, 2, 1, 1));
  CHECK(y.h() == 3);
  CHECK(y.w() == 3);
}

TEST_CASE("conv2d linearity") {
  Rng rng(14);
  const ConvSpec sp = spec_of(3, 1, 1, 2, 2, 3);
  const Tensor4d x = ts::random_tensor(rng, 1, 2, 8, 8);
  const Tensor4d y = ts::random_tensor(rng, 1, 2, 8, 8);
  const Tensor4d w = ts::random_tensor(rng, 3, 2, 3, 3);
  const VecX<double> b = VecX<double>::Zero(3);
  const double a = 0.7, c = -1.3;
  Tensor4d mix(1, 2, 8, 8);
  mix.array() = a * x.array() + c * y.array();
  const Tensor4d lhs = conv2d(mix, w, b, sp);
  Tensor4d rhs(lhs.n(), lhs.c(), lhs.h(), lhs.w());
  rhs.array() = a * conv2d(x, w, b, sp).array() + c * conv2d(y, w, b, sp).array();
  for (Eigen::Index i = 0; i < lhs.size(); ++i)
    CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-10));
}

TEST_CASE("conv2d rejects bad shapes") {
  Tensor4d x(1, 2, 5, 5), w(3, 2, 3, 3);
  VecX<double> b = VecX<double>::Zero(3);
  CHECK_THROWS(conv2d(x, w, b, spec_of(3, 1, 0, 1, 4, 3)));   // channel mismatch
  CHECK_THROWS(conv2d(x, w, b, spec_of(3, 1, 0, 4, 2, 3)));   // effective kernel 9 > 5
  CHECK_THROWS(conv2d(x, w, VecX<double>(VecX<double>::Zero(2)), spec_of(3, 1, 0, 1, 2, 3)));
}

TEST_CASE("conv2d_backward zero grad and single-pixel product rule") {
  Rng rng(15);
  const ConvSpec sp = spec_of(3, 1, 1, 1, 2, 3);
  const Tensor4d x = ts::random_tensor(rng, 1, 2, 6, 6);
  const Tensor4d w = ts::random_tensor(rng, 3, 2, 3, 3);
  Tensor4d zeros(1, 3, 6, 6);
  const ConvGrads<double> g = conv2d_backward(x, w, sp, zeros);
  CHECK(g.input.array().abs().maxCoeff() == 0.0);
  CHECK(g.weights.array().abs().maxCoeff() == 0.0);
  CHECK(g.bias.abs().maxCoeff() == 0.0);

  // 1x1 conv on one pixel, loss = output
  Tensor4d px(1, 1, 1, 1), pw(1, 1, 1, 1), ones(1, 1, 1, 1);
  px(0, 0, 0, 0) = 3.5;
  pw(0, 0, 0, 0) = -1.25;
  ones.fill(1.0);
  const ConvGrads<double> pg = conv2d_backward(px, pw, spec_of(1, 1, 0, 1, 1, 1), ones);
  CHECK(pg.weights(0, 0, 0, 0) == doctest::Approx(3.5));
  CHECK(pg.input(0, 0, 0, 0) == doctest::Approx(-1.25));
  CHECK(pg.bias[0] == doctest::Approx(1.0));
}

TEST_CASE("deconv2d single-tap scatter and size formula") {
  Tensor4d y(1, 1, 1, 1);
  y(0, 0, 0, 0) = 1.0;
  Tensor4d w(1, 1, 2, 2);
  w.fill(1.0);
  const Tensor4d out = deconv2d(y, w, spec_of(2, 2, 0, 1, 1, 1));
  CHECK(out.h() == 2);
  CHECK(out.w() == 2);
  for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(1.0));

  Rng rng(16);
  const Tensor4d y2 = ts::random_tensor(rng, 1, 1, 8, 8);
  const Tensor4d w2 = ts::random_tensor(rng, 1, 1, 4, 4);
  const Tensor4d out2 = deconv2d(y2, w2, spec_of(4, 2, 1, 1, 1, 1));
  CHECK(out2.h() == 16);
  CHECK(out2.w() == 16);
}

TEST_CASE("deconv2d is the exact adjoint of conv2d") {
  Rng rng(17);
  // x dims are derived from y through the deconv size formula so the pair
  // matches exactly (conv's floor may otherwise drop trailing rows)
  for (const auto& [k, stride, pad, dil, hy, wy] :
       {std::tuple{3, 1, 1, 1, 5, 5}, std::tuple{4, 2, 1, 1, 4, 6},
        std::tuple{3, 1, 2, 2, 5, 5}, std::tuple{3, 2, 0, 2, 3, 4}}) {
    const ConvSpec sp = spec_of(k, stride, pad, dil, 2, 3);
    const Tensor4d y = ts::random_tensor(rng, 1, 3, hy, wy);
    const Tensor4d w = ts::random_tensor(rng, 3, 2, k, k);
    const int hx = deconv_out_extent(hy, k, stride, pad, dil);
    const int wx = deconv_out_extent(wy, k, stride, pad, dil);
    const Tensor4d x = ts::random_tensor(rng, 1, 2, hx, wx);
    const VecX<double> b = VecX<double>::Zero(3);
    const Tensor4d cx = conv2d(x, w, b, sp);
    REQUIRE(cx.h() == hy);
    REQUIRE(cx.w() == wy);
    const Tensor4d dy = deconv2d(y, w, sp);
    REQUIRE(dy.same_dims(x));
    CHECK(ts::dot(cx, y) == doctest::Approx(ts::dot(x, dy)).epsilon(1e-10));
  }
}

TEST_CASE("batchnorm basics") {
  SUBCASE("constant channel maps to zero") {
    Tensor4d x(2, 1, 3, 3);
    x.fill(4.2);
    BNState<double> st = BNState<double>::make(1);
    BNCache<double> cache;
    const Tensor4d y = batchnorm_train(x, st, cache);
    CHECK(y.array().abs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("beta shifts the normalized output mean") {
    Rng rng(18);
    Tensor4d x = ts::random_tensor(rng, 2, 1, 4, 4);
    BNState<double> st = BNState<double>::make(1);
    st.beta[0] = 5.0;
    BNCache<double> cache;
    const Tensor4d y = batchnorm_train(x, st, cache);
    CHECK(y.array().mean() == doctest::Approx(5.0).epsilon(1e-9));
  }
  SUBCASE("normalized stats recomputed independently") {
    Rng rng(19);
    Tensor4d x = ts::random_tensor(rng, 2, 3, 5, 5, -3.0, 2.0);
    BNState<double> st = BNState<double>::make(3);
    BNCache<double> cache;
    batchnorm_train(x, st, cache);
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0, sq = 0.0;
      long m = 0;
      for (int n = 0; n < 2; ++n)
        for (int yy = 0; yy < 5; ++yy)
          for (int xx = 0; xx < 5; ++xx) {
            const double v = cache.xhat(n, c, yy, xx);
            sum += v;
            sq += v * v;
            ++m;
          }
      const double mean = sum / m;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(sq / m - mean * mean == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  SUBCASE("zero extent is an error") {
    Tensor4d x(0, 1, 3, 3);
    BNState<double> st = BNState<double>::make(1);
    BNCache<double> cache;
    CHECK_THROWS(batchnorm_train(x, st, cache));
  }
  SUBCASE("eval mode never touches running stats") {
    Rng rng(20);
    Tensor4d x = ts::random_tensor(rng, 1, 2, 4, 4);
    BNState<double> st = BNState<double>::make(2);
    st.running_mean[0] = 0.3;
    st.running_var[1] = 2.0;
    const BNState<double> before = st;
    batchnorm_eval(x, st);
    CHECK((st.running_mean == before.running_mean).all());
    CHECK((st.running_var == before.running_var).all());
  }
}

TEST_CASE("relu, maxpool2 and concat behave per contract") {
  Tensor4d x(1, 1, 1, 3);
  x(0, 0, 0, 0) = -1.0;
  x(0, 0, 0, 1) = 0.0;
  x(0, 0, 0, 2) = 2.0;
  const Tensor4d r = relu(x);
  CHECK(r(0, 0, 0, 0) == 0.0);
  CHECK(r(0, 0, 0, 1) == 0.0);
  CHECK(r(0, 0, 0, 2) == 2.0);

  Tensor4d p(1, 1, 2, 2);
  p(0, 0, 0, 0) = 1;
  p(0, 0, 0, 1) = 2;
  p(0, 0, 1, 0) = 3;
  p(0, 0, 1, 1) = 4;
  const PoolResult<double> pr = maxpool2(p);
  CHECK(pr.out(0, 0, 0, 0) == 4.0);
  Tensor4d go(1, 1, 1, 1);
  go.fill(1.0);
  const Tensor4d gi = maxpool2_backward(pr, p, go);
  CHECK(gi(0, 0, 1, 1) == 1.0);
  CHECK(gi.array().sum() == 1.0);

  Tensor4d odd(1, 1, 3, 4);
  CHECK_THROWS(maxpool2(odd));

  Tensor4d a(2, 3, 4, 4), b(2, 5, 4, 4);
  const Tensor4d cat = concat_channels<double>({&a, &b});
  CHECK(cat.c() == 8);
  Tensor4d mism(1, 2, 4, 4);
  CHECK_THROWS(concat_channels<double>({&a, &mism}));
}

TEST_CASE("maxpool2 tie routes to the first window element") {
  Tensor4d p(1, 1, 2, 2);
  p.fill(7.0);
  const PoolResult<double> pr = maxpool2(p);
  CHECK(pr.argmax[0] == 0);
}

TEST_CASE("receptive_field reproduces the dilated stack growth") {
  std::vector<LayerGeom> ls = {{3, 1, 1}};
  CHECK(receptive_field(ls).first == 3);
  ls.push_back({3, 1, 2});
  CHECK(receptive_field(ls).first == 7);
  ls.push_back({3, 1, 4});
  CHECK(receptive_field(ls).first == 15);

  // appending a 1x1 layer never changes the result
  const int before = receptive_field(ls).first;
  ls.push_back({1, 1, 1});
  CHECK(receptive_field(ls).first == before);
  CHECK_THROWS(receptive_field(std::span<const LayerGeom>{}));
}

TEST_CASE("layer gradients agree with finite differences") {
  // spot checks here; the full randomized sweep runs in the acceptance suite
  Rng rng(21);
  const gradcheck_detail::ConvConfig cc{2, 3, 4, 8, 8, 3, 1, 2, 2};
  CHECK(gradcheck_detail::check_conv(rng, cc) < 1e-4);
  const gradcheck_detail::ConvConfig dc{1, 2, 3, 4, 4, 4, 2, 1, 1};
  CHECK(gradcheck_detail::check_deconv(rng, dc) < 1e-4);
  CHECK(gradcheck_detail::check_batchnorm(rng, 2, 3, 4, 4) < 1e-4);
  CHECK(gradcheck_detail::check_relu(rng) < 1e-4);
  CHECK(gradcheck_detail::check_maxpool(rng) < 1e-4);
  CHECK(gradcheck_detail::check_concat(rng) < 1e-4);
}

TEST_CASE("non-finite outputs are rejected") {
  Tensor4d x(1, 1, 2, 2);
  x(0, 0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(relu(x));
}
