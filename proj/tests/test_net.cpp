#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mdepth/checkpoint.hpp"
#include "mdepth/gradcheck.hpp"
#include "mdepth/net.hpp"
#include "support/reference_ops.hpp"

using namespace mdepth;
namespace ts = mdepth::testsupport;
namespace fs = std::filesystem;

namespace {

NetArch reduced_arch(int k = 5) {
  NetArch a;
  a.k = k;
  a.stem_channels = 8;
  a.blocks_per_stage = 1;
  return a;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("forward shape contract: output is exactly half the input") {
  NetArch arch;  // default mini net
  arch.k = 40;
  NetParams<double> p = init_params<double>(7, arch);
  Tensor4d img(1, 3, 64, 64);  // zero image
  const Tensor4d scores = forward_eval(img, p);
  CHECK(scores.n() == 1);
  CHECK(scores.c() == 40);
  CHECK(scores.h() == 32);
  CHECK(scores.w() == 32);
  CHECK(scores.array().isFinite().all());

  Tensor4d bad(1, 3, 62, 64);  // not a multiple of 4
  CHECK_THROWS(forward_eval(bad, p));
  Tensor4d range(1, 3, 64, 64);
  range.fill(1.5);  // outside [-1,1]
  CHECK_THROWS(forward_eval(range, p));
}

TEST_CASE("ablation variants keep the shape contract") {
  Rng rng(41);
  SUBCASE("no_dilation needs multiples of 8 and still halves") {
    NetArch arch = reduced_arch(6);
    arch.no_dilation = true;
    NetParams<double> p = init_params<double>(3, arch);
    const Tensor4d img = ts::random_tensor(rng, 1, 3, 32, 40, -1.0, 1.0);
    const Tensor4d scores = forward_eval(img, p);
    CHECK(scores.h() == 16);
    CHECK(scores.w() == 20);
    Tensor4d bad(1, 3, 36, 36);
    CHECK_THROWS(forward_eval(bad, p));
  }
  SUBCASE("no_concat narrows the fusion conv") {
    NetArch arch = reduced_arch(6);
    arch.no_concat = true;
    NetParams<double> p = init_params<double>(3, arch);
    CHECK(p.fuse.spec.in_channels == 16);  // last stage width only
    const Tensor4d img = ts::random_tensor(rng, 1, 3, 16, 16, -1.0, 1.0);
    const Tensor4d scores = forward_eval(img, p);
    CHECK(scores.h() == 8);
  }
  SUBCASE("both ablations together") {
    NetArch arch = reduced_arch(6);
    arch.no_dilation = true;
    arch.no_concat = true;
    NetParams<double> p = init_params<double>(3, arch);
    const Tensor4d img = ts::random_tensor(rng, 1, 3, 16, 16, -1.0, 1.0);
    const Tensor4d scores = forward_eval(img, p);
    CHECK(scores.h() == 8);
  }
}

TEST_CASE("receptive field of the score path") {
  NetArch arch;  // default: stem /2, pool /2, 4 stages of 2 blocks, dil 1,1,2,4
  const auto layers = arch.rf_layers();
  const auto [rf_h, rf_w] = receptive_field(layers);
  CHECK(rf_h == rf_w);
  CHECK(rf_h == 261);
  CHECK(rf_h >= 51);
}

TEST_CASE("init_params is deterministic and He-scaled") {
  NetArch arch;  // full-size layers for the variance statistics
  NetParams<float> a = init_params<float>(42, arch);
  NetParams<float> b = init_params<float>(42, arch);
  NetParams<float> c = init_params<float>(43, arch);

  bool identical = true, differs = false;
  visit_params(a, [&](const std::string& name, float* d, std::size_t len,
                      const std::vector<int>& dims, bool) {
    float* db = nullptr;
    float* dc = nullptr;
    visit_params(b, [&](const std::string& n2, float* p2, std::size_t, const std::vector<int>&,
                        bool) {
      if (n2 == name) db = p2;
    });
    visit_params(c, [&](const std::string& n2, float* p2, std::size_t, const std::vector<int>&,
                        bool) {
      if (n2 == name) dc = p2;
    });
    for (std::size_t i = 0; i < len; ++i) {
      if (d[i] != db[i]) identical = false;
      if (d[i] != dc[i]) differs = true;
    }
    if (dims.size() == 4 && len >= 1024) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        sum += d[i];
        sq += static_cast<double>(d[i]) * d[i];
      }
      const double mean = sum / static_cast<double>(len);
      const double var = sq / static_cast<double>(len) - mean * mean;
      const double want = 2.0 / (static_cast<double>(dims[1]) * dims[2] * dims[3]);
      CHECK(var > 0.8 * want);
      CHECK(var < 1.2 * want);
    }
  });
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("eval forward is pure, train forward updates running stats") {
  Rng rng(42);
  NetArch arch = reduced_arch();
  NetParams<double> p = init_params<double>(9, arch);
  const Tensor4d img = ts::random_tensor(rng, 1, 3, 16, 16, -1.0, 1.0);

  const VecX<double> rm_before = p.stem_bn.running_mean;
  const Tensor4d s1 = forward_eval(img, p);
  const Tensor4d s2 = forward_eval(img, p);
  CHECK((p.stem_bn.running_mean == rm_before).all());
  for (Eigen::Index i = 0; i < s1.size(); ++i) CHECK(s1.data()[i] == s2.data()[i]);  // bitwise

  NetCache<double> cache;
  forward_train(img, p, cache);
  CHECK_FALSE((p.stem_bn.running_mean == rm_before).all());
}

TEST_CASE("backward contract") {
  Rng rng(43);
  NetArch arch = reduced_arch();
  NetParams<double> p = init_params<double>(11, arch);
  const Tensor4d img = ts::random_tensor(rng, 1, 3, 16, 16, -1.0, 1.0);
  NetCache<double> cache;
  const Tensor4d scores = forward_train(img, p, cache);

  SUBCASE("zero grad_scores give all-zero parameter gradients") {
    Tensor4d zeros(scores.n(), scores.c(), scores.h(), scores.w());
    NetParams<double> g = backward(cache, p, zeros);
    double total = 0.0;
    visit_params(g, [&](const std::string&, double* d, std::size_t len, const std::vector<int>&,
                        bool) {
      for (std::size_t i = 0; i < len; ++i) total += std::abs(d[i]);
    });
    CHECK(total == 0.0);
  }
  SUBCASE("absent cache is an error") {
    NetCache<double> empty;
    Tensor4d zeros(scores.n(), scores.c(), scores.h(), scores.w());
    CHECK_THROWS(backward(empty, p, zeros));
  }
  SUBCASE("grad dims must match the forward output") {
    Tensor4d wrong(1, arch.k, 4, 4);
    CHECK_THROWS(backward(cache, p, wrong));
  }
}

TEST_CASE("reduced end-to-end gradient agrees with finite differences") {
  Rng rng(44);
  CHECK(gradcheck_detail::check_end_to_end(rng, 24) < 1e-3);
}

TEST_CASE("predict_depth rules") {
  NetArch arch = reduced_arch(6);
  const Binning binning = make_binning(0.5, 8.0, 6);
  SUBCASE("all-equal scores give sqrt(d_min*d_max) under the soft rule") {
    NetParams<double> zero = make_params<double>(arch);  // zero weights, zero scores
    Tensor4d img(1, 3, 16, 16);
    const Tensor4d depth = predict_depth(img, zero, binning, InferRule::kSoft);
    for (Eigen::Index i = 0; i < depth.size(); ++i)
      CHECK(depth.data()[i] == doctest::Approx(std::sqrt(0.5 * 8.0)).epsilon(1e-9));
  }
  SUBCASE("hard rule emits bin centers only") {
    Rng rng(45);
    NetParams<double> p = init_params<double>(5, arch);
    const Tensor4d img = ts::random_tensor(rng, 1, 3, 16, 16, -1.0, 1.0);
    const Tensor4d depth = predict_depth(img, p, binning, InferRule::kHard);
    for (Eigen::Index i = 0; i < depth.size(); ++i) {
      double best = 1e9;
      for (double w : binning.w) best = std::min(best, std::abs(std::log(depth.data()[i]) - w));
      CHECK(best < 1e-9);
    }
  }
  SUBCASE("binning K must match the network") {
    NetParams<double> p = make_params<double>(arch);
    Tensor4d img(1, 3, 16, 16);
    CHECK_THROWS(predict_depth(img, p, make_binning(0.5, 8.0, 7), InferRule::kSoft));
  }
}

TEST_CASE("checkpoint round trip is byte-exact") {
  const fs::path dir = fs::temp_directory_path() / "mdepth_ckpt_test";
  fs::create_directories(dir);
  NetArch arch = reduced_arch(6);
  arch.no_dilation = true;

  CheckpointData<float> ck;
  ck.params = init_params<float>(21, arch);
  ck.d_min = 0.5;
  ck.d_max = 8.0;
  ck.iter = 123;
  ck.has_opt = true;
  ck.velocity = init_params<float>(22, arch);

  const fs::path a = dir / "a.ckpt", b = dir / "b.ckpt";
  save_checkpoint(a, ck);
  const CheckpointData<float> loaded = load_checkpoint<float>(a);
  CHECK(loaded.params.arch == arch);
  CHECK(loaded.d_min == 0.5);
  CHECK(loaded.d_max == 8.0);
  CHECK(loaded.iter == 123);
  CHECK(loaded.has_opt);
  save_checkpoint(b, loaded);
  CHECK(file_bytes(a) == file_bytes(b));

  SUBCASE("truncation is reported with offset and field") {
    const std::string bytes = file_bytes(a);
    const fs::path t = dir / "trunc.ckpt";
    std::ofstream(t, std::ios::binary).write(bytes.data(), static_cast<long>(bytes.size() / 2));
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(t), doctest::Contains("truncated"),
                         std::runtime_error);
  }
  SUBCASE("bad magic is rejected") {
    const fs::path m = dir / "magic.ckpt";
    std::ofstream(m, std::ios::binary) << "NOTACKPTfile with some trailing payload";
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(m), doctest::Contains("magic"),
                         std::runtime_error);
  }
  fs::remove_all(dir);
}
