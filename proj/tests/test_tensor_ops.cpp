#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "tsfn/oracles.hpp"
#include "tsfn/ops.hpp"
#include "tsfn/rng.hpp"
#include "tsfn/serialize.hpp"

using namespace tsfn;

namespace {

Tensor rand_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv1d_temporal identity kernel") {
  Tensor x = Tensor::from({1, 5}, {0.3, -1.2, 4.0, 0.0, 2.5});
  Tensor k = Tensor::from({1, 1, 1}, {1.0});
  Tensor b = Tensor::from({1}, {0.0});
  ConvSpec s;
  s.padding = Padding::causal;
  Tensor y = conv1d_temporal(x, k, b, s);
  CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv1d_temporal causal hand case") {
  Tensor x = Tensor::from({1, 4}, {1, 2, 3, 4});
  Tensor k = Tensor::from({1, 1, 2}, {1, 1});
  Tensor b = Tensor::from({1}, {0.0});
  ConvSpec s;
  s.temporal_extent = 2;
  s.padding = Padding::causal;
  Tensor y = conv1d_temporal(x, k, b, s);
  const Tensor want = Tensor::from({1, 4}, {1, 3, 5, 7});
  CHECK(max_abs_diff(y, want) == 0.0);
}

TEST_CASE("conv1d_temporal dilation 2 matches nested-loop oracle") {
  Rng rng(42);
  Tensor x = rand_tensor({2, 8}, rng);
  ConvSpec s;
  s.out_channels = 3;
  s.in_channels = 2;
  s.temporal_extent = 2;
  s.dilation = 2;
  s.padding = Padding::causal;
  Tensor k = rand_tensor({3, 2, 2}, rng);
  Tensor b = rand_tensor({3}, rng);
  CHECK(max_abs_diff(conv1d_temporal(x, k, b, s), oracle::conv1d(x, k, b, s)) <= 1e-12);
}

TEST_CASE("conv1d_temporal causality: no future leakage") {
  Rng rng(7);
  ConvSpec s;
  s.out_channels = 2;
  s.in_channels = 2;
  s.temporal_extent = 3;
  s.dilation = 2;
  s.padding = Padding::causal;
  Tensor k = rand_tensor({2, 2, 3}, rng);
  Tensor b = rand_tensor({2}, rng);
  Tensor x = rand_tensor({2, 10}, rng);
  Tensor base = conv1d_temporal(x, k, b, s);
  for (std::size_t t = 0; t < 10; ++t) {
    Tensor cut = x;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t u = t + 1; u < 10; ++u) cut[c * 10 + u] = 0.0;
    Tensor y = conv1d_temporal(cut, k, b, s);
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t u = 0; u <= t; ++u)
        CHECK(y[ch * 10 + u] == base[ch * 10 + u]);
  }
}

TEST_CASE("conv linearity in the input") {
  Rng rng(9);
  ConvSpec s;
  s.out_channels = 2;
  s.in_channels = 3;
  s.temporal_extent = 2;
  s.padding = Padding::causal;
  Tensor k = rand_tensor({2, 3, 2}, rng);
  Tensor zero_bias(Shape{2});
  Tensor x = rand_tensor({3, 6}, rng);
  Tensor y = rand_tensor({3, 6}, rng);
  const double a = 0.7, c = -1.9;
  Tensor mix(Shape{3, 6});
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + c * y[i];
  Tensor lhs = conv1d_temporal(mix, k, zero_bias, s);
  Tensor rx = conv1d_temporal(x, k, zero_bias, s);
  Tensor ry = conv1d_temporal(y, k, zero_bias, s);
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(std::abs(lhs[i] - (a * rx[i] + c * ry[i])) <= 1e-10);
}

TEST_CASE("conv1d errors") {
  ConvSpec s;
  s.in_channels = 2;
  s.padding = Padding::causal;
  Tensor k = Tensor::from({1, 2, 1}, {1, 1});
  Tensor b = Tensor::from({1}, {0.0});
  CHECK_THROWS_AS(conv1d_temporal(Tensor(Shape{3, 4}), k, b, s), DimensionError);
  ConvSpec wide = s;
  wide.temporal_extent = 5;
  wide.padding = Padding::valid;
  Tensor kw = Tensor(Shape{1, 2, 5});
  CHECK_THROWS_AS(conv1d_temporal(Tensor(Shape{2, 3}), kw, b, wide), InvalidInput);
}

TEST_CASE("conv2d_spatial 1x1 identity") {
  Rng rng(3);
  Tensor x = rand_tensor({1, 4, 5}, rng);
  Tensor k = Tensor::from({1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::from({1}, {0.0});
  ConvSpec s;
  s.padding = Padding::valid;
  CHECK(max_abs_diff(conv2d_spatial(x, k, b, s), x) == 0.0);
}

TEST_CASE("conv2d_spatial all-ones valid hand case") {
  Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  Tensor k = Tensor::from({1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor b = Tensor::from({1}, {0.0});
  ConvSpec s;
  s.spatial_extent = 2;
  s.padding = Padding::valid;
  Tensor y = conv2d_spatial(x, k, b, s);
  REQUIRE(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 10.0);
}

TEST_CASE("conv2d_spatial same padding matches nested-loop oracle") {
  Rng rng(12);
  ConvSpec s;
  s.out_channels = 2;
  s.in_channels = 3;
  s.spatial_extent = 3;
  s.padding = Padding::same;
  Tensor x = rand_tensor({3, 6, 6}, rng);
  Tensor k = rand_tensor({2, 3, 3, 3}, rng);
  Tensor b = rand_tensor({2}, rng);
  CHECK(max_abs_diff(conv2d_spatial(x, k, b, s), oracle::conv2d(x, k, b, s)) <= 1e-12);
}

TEST_CASE("conv2d kernel larger than padded input") {
  ConvSpec s;
  s.spatial_extent = 5;
  s.padding = Padding::valid;
  Tensor x(Shape{1, 3, 3});
  Tensor k(Shape{1, 1, 5, 5});
  Tensor b(Shape{1});
  CHECK_THROWS_AS(conv2d_spatial(x, k, b, s), InvalidInput);
}

TEST_CASE("conv3d_reference temporal-depth-1 degeneracy") {
  Rng rng(21);
  const std::size_t C = 2, T = 3, H = 5, W = 5, K = 2, ke = 3;
  Tensor x = rand_tensor({C, T, H, W}, rng);
  Tensor k3 = rand_tensor({K, C, 1, ke, ke}, rng);
  ConvSpec s3;
  s3.out_channels = K;
  s3.in_channels = C;
  s3.spatial_extent = ke;
  Tensor y = conv3d_reference(x, k3, s3);

  // same kernel applied per frame through conv2d
  Tensor k2 = Tensor::from({K, C, ke, ke}, k3.values());
  Tensor zb(Shape{K});
  ConvSpec s2 = s3;
  s2.temporal_extent = 1;
  s2.padding = Padding::valid;
  for (std::size_t t = 0; t < T; ++t) {
    Tensor frame(Shape{C, H, W});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H * W; ++i)
        frame[c * H * W + i] = x[(c * T + t) * H * W + i];
    Tensor f = conv2d_spatial(frame, k2, zb, s2);
    for (std::size_t oc = 0; oc < K; ++oc)
      for (std::size_t i = 0; i < f.extent(1) * f.extent(2); ++i)
        CHECK(std::abs(f[oc * f.extent(1) * f.extent(2) + i] -
                       y[(oc * T + t) * f.extent(1) * f.extent(2) + i]) <= 1e-12);
  }
}

TEST_CASE("conv3d_reference matches quadruple-loop oracle exactly") {
  Rng rng(31);
  Tensor x = rand_tensor({2, 3, 4, 4}, rng);
  Tensor k = rand_tensor({1, 2, 2, 2, 2}, rng);
  ConvSpec s;
  s.out_channels = 1;
  s.in_channels = 2;
  s.temporal_extent = 2;
  s.spatial_extent = 2;
  CHECK(max_abs_diff(conv3d_reference(x, k, s), oracle::conv3d(x, k)) == 0.0);
}

TEST_CASE("conv3d_reference zero input gives zero output") {
  Tensor x(Shape{1, 3, 3, 3});
  Rng rng(5);
  Tensor k = rand_tensor({2, 1, 2, 2, 2}, rng);
  ConvSpec s;
  s.out_channels = 2;
  s.temporal_extent = 2;
  s.spatial_extent = 2;
  Tensor y = conv3d_reference(x, k, s);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("sigmoid basics") {
  CHECK(sigmoid(Tensor::scalar(0.0))[0] == 0.5);
  Rng rng(2);
  Tensor x = rand_tensor({17}, rng, -6.0, 6.0);
  Tensor y = sigmoid(x);
  Tensor xn(Shape{17});
  for (std::size_t i = 0; i < 17; ++i) xn[i] = -x[i];
  Tensor yn = sigmoid(xn);
  for (std::size_t i = 0; i < 17; ++i) CHECK(std::abs(y[i] + yn[i] - 1.0) <= 1e-15);

  Tensor big = Tensor::from({2}, {50.0, -50.0});
  Tensor yb = sigmoid(big);
  CHECK(std::abs(yb[0] - 1.0) <= 1e-12);
  CHECK(std::abs(yb[1]) <= 1e-12);
  CHECK(yb.all_finite());
}

TEST_CASE("softmax properties") {
  Tensor u = softmax(Tensor::from({3}, {0, 0, 0}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(u[i] - 1.0 / 3.0) <= 1e-15);

  Tensor same = softmax(Tensor::from({4}, {2.7, 2.7, 2.7, 2.7}));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(same[i] - 0.25) <= 1e-15);

  Rng rng(8);
  Tensor x = rand_tensor({6}, rng, -3.0, 3.0);
  Tensor y = softmax(x);
  // extended-precision oracle
  long double mx = x[0];
  for (std::size_t i = 1; i < 6; ++i) mx = std::max<long double>(mx, x[i]);
  long double sum = 0;
  std::vector<long double> e(6);
  for (std::size_t i = 0; i < 6; ++i) {
    e[i] = expl(static_cast<long double>(x[i]) - mx);
    sum += e[i];
  }
  double total = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(y[i] - static_cast<double>(e[i] / sum)) <= 1e-12);
    CHECK(y[i] > 0);
    total += y[i];
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);

  // shift invariance
  Tensor shifted(Shape{6});
  for (std::size_t i = 0; i < 6; ++i) shifted[i] = x[i] + 13.5;
  CHECK(max_abs_diff(softmax(shifted), y) <= 1e-12);
}

TEST_CASE("global_avg_pool") {
  Tensor c(Shape{3, 4}, 3.7);
  Tensor pooled = global_avg_pool(c, {0, 1});
  REQUIRE(pooled.size() == 1);
  CHECK(std::abs(pooled[0] - 3.7) <= 1e-15);

  Tensor v = Tensor::from({4}, {1, 2, 3, 4});
  CHECK(std::abs(global_avg_pool(v, {0})[0] - 2.5) <= 1e-15);

  Rng rng(4);
  Tensor x = rand_tensor({4, 5, 5}, rng);
  double mean = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mean += x[i];
  mean /= static_cast<double>(x.size());
  CHECK(std::abs(global_avg_pool(x, {0, 1, 2})[0] - mean) <= 1e-12);

  // partial pooling keeps remaining axes
  Tensor p = global_avg_pool(x, {1, 2});
  REQUIRE(p.shape() == Shape{4});
  for (std::size_t c2 = 0; c2 < 4; ++c2) {
    double m2 = 0;
    for (std::size_t i = 0; i < 25; ++i) m2 += x[c2 * 25 + i];
    CHECK(std::abs(p[c2] - m2 / 25.0) <= 1e-12);
  }

  CHECK_THROWS_AS(global_avg_pool(x, {}), InvalidInput);
}

TEST_CASE("linear") {
  Tensor x = Tensor::from({3}, {1, 2, 3});
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor zb(Shape{3});
  CHECK(max_abs_diff(linear(x, eye, zb), x) == 0.0);

  Tensor zw(Shape{2, 3});
  Tensor b = Tensor::from({2}, {-1.5, 2.0});
  CHECK(max_abs_diff(linear(x, zw, b), b) == 0.0);

  Rng rng(6);
  Tensor xr = rand_tensor({4}, rng);
  Tensor w = rand_tensor({3, 4}, rng);
  Tensor br = rand_tensor({3}, rng);
  Tensor y = linear(xr, w, br);
  for (std::size_t r = 0; r < 3; ++r) {
    double acc = br[r];
    for (std::size_t c2 = 0; c2 < 4; ++c2) acc += w[r * 4 + c2] * xr[c2];
    CHECK(std::abs(y[r] - acc) <= 1e-12);
  }

  CHECK_THROWS_AS(linear(Tensor(Shape{5}), w, br), DimensionError);
}

TEST_CASE("randomized conv oracle sweep") {
  Rng rng(101);
  for (int it = 0; it < 100; ++it) {
    const std::size_t C = 1 + rng.below(4), K = 1 + rng.below(4);
    const std::size_t T = 2 + rng.below(7);
    std::size_t dt = 1 + rng.below(3);
    std::size_t dil = 1 + rng.below(2);
    if (dil * (dt - 1) + 1 > T) { dt = 1; dil = 1; }
    ConvSpec s;
    s.out_channels = K;
    s.in_channels = C;
    s.temporal_extent = dt;
    s.dilation = dil;
    s.stride = 1 + rng.below(2);
    s.padding = it % 3 == 0 ? Padding::same : (it % 3 == 1 ? Padding::valid : Padding::causal);
    Tensor x = rand_tensor({C, T}, rng);
    Tensor k = rand_tensor({K, C, dt}, rng);
    Tensor b = rand_tensor({K}, rng);
    CHECK(max_abs_diff(conv1d_temporal(x, k, b, s), oracle::conv1d(x, k, b, s)) <= 1e-12);
  }
}

TEST_CASE("shape algebra is a pure function of shapes") {
  // exhaustive small-shape enumeration for conv1d and conv2d output shapes
  for (std::size_t T = 1; T <= 6; ++T)
    for (std::size_t dt = 1; dt <= 3; ++dt)
      for (std::size_t dil = 1; dil <= 2; ++dil)
        for (std::size_t stride = 1; stride <= 2; ++stride)
          for (Padding p : {Padding::causal, Padding::same, Padding::valid}) {
            ConvSpec s;
            s.temporal_extent = dt;
            s.dilation = dil;
            s.stride = stride;
            s.padding = p;
            Tensor x(Shape{1, T}, 1.0);
            Tensor k(Shape{1, 1, dt}, 1.0);
            Tensor b(Shape{1});
            const std::size_t span = dil * (dt - 1) + 1;
            std::size_t pad = (p == Padding::causal) ? span - 1
                              : (p == Padding::same) ? span - 1
                                                     : 0;
            if (T + pad < span) {
              CHECK_THROWS_AS(conv1d_temporal(x, k, b, s), InvalidInput);
              continue;
            }
            Tensor y = conv1d_temporal(x, k, b, s);
            CHECK(y.extent(1) == (T + pad - span) / stride + 1);
            // and the value layout is consistent with the oracle
            CHECK(y.shape() == oracle::conv1d(x, k, b, s).shape());
          }

  for (std::size_t H = 1; H <= 5; ++H)
    for (std::size_t ke = 1; ke <= 3; ke += 2)
      for (std::size_t stride = 1; stride <= 2; ++stride)
        for (Padding p : {Padding::same, Padding::valid}) {
          ConvSpec s;
          s.spatial_extent = ke;
          s.stride = stride;
          s.padding = p;
          Tensor x(Shape{1, H, H}, 1.0);
          Tensor k(Shape{1, 1, ke, ke}, 1.0);
          Tensor b(Shape{1});
          const std::size_t pad = (p == Padding::same) ? ke - 1 : 0;
          if (H + pad < ke) {
            CHECK_THROWS_AS(conv2d_spatial(x, k, b, s), InvalidInput);
            continue;
          }
          Tensor y = conv2d_spatial(x, k, b, s);
          CHECK(y.extent(1) == (H + pad - ke) / stride + 1);
        }
}

TEST_CASE("tensor serialization round trip") {
  Rng rng(77);
  Tensor t = rand_tensor({2, 3, 4}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  Tensor back = read_tensor(ss);
  CHECK(back.shape() == t.shape());
  CHECK(max_abs_diff(back, t) == 0.0);

  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(read_tensor(bad), IoError);
}
