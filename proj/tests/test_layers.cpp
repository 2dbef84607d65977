#include <cmath>
#include <set>

#include "doctest.h"
#include "mtlsar/error.hpp"
#include "mtlsar/layers.hpp"
#include "oracles.hpp"

using namespace mtlsar;

namespace {

Tensor of(Shape s, std::vector<double> v) { return Tensor(s, std::move(v)); }

// Largest relative error between analytic gradients of <R, f(x)> and central
// differences, over every coordinate of `x`.
double fd_max_error(Tensor& x, const Tensor& analytic, const std::function<double()>& objective) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = oracle::central_difference(x.values()[i], 1e-5, objective);
    worst = std::max(worst, oracle::rel_error(analytic[i], n));
  }
  return worst;
}

double fd_max_error(std::vector<double>& v, const std::vector<double>& analytic,
                    const std::function<double()>& objective) {
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double n = oracle::central_difference(v[i], 1e-5, objective);
    worst = std::max(worst, oracle::rel_error(analytic[i], n));
  }
  return worst;
}

}  // namespace

TEST_CASE("conv_forward") {
  SUBCASE("1x1 identity kernel") {
    Rng rng(1);
    const Tensor x = oracle::random_tensor({2, 1, 5, 4}, rng);
    ConvParams p = ConvParams::make(1, 1, 1, 1);
    p.weight[0] = 1.0;
    CHECK(conv_forward(x, p) == x);
  }
  SUBCASE("2x2 ones over [[1,2],[3,4]] sums to 10") {
    ConvParams p = ConvParams::make(1, 1, 2, 2);
    p.weight.fill(1.0);
    const Tensor y = conv_forward(of({1, 1, 2, 2}, {1, 2, 3, 4}), p);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 10.0);
  }
  SUBCASE("zero kernel with bias 0.1") {
    ConvParams p = ConvParams::make(3, 2, 3, 3, 1, 1);
    std::fill(p.bias.begin(), p.bias.end(), 0.1);
    Rng rng(2);
    const Tensor y = conv_forward(oracle::random_tensor({2, 2, 6, 6}, rng), p);
    for (double v : y.values()) CHECK(v == 0.1);
  }
  SUBCASE("matches the loop definition for random strides and padding") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform_int(0, 3));
      const std::size_t stride = 1 + static_cast<std::size_t>(rng.uniform_int(0, 1));
      const std::size_t pad = static_cast<std::size_t>(rng.uniform_int(0, 2));
      ConvParams p = ConvParams::make(3, 2, k, k, stride, pad);
      p.weight = oracle::random_tensor(p.weight.shape(), rng);
      for (double& b : p.bias) b = rng.uniform(-1, 1);
      const Tensor x = oracle::random_tensor({2, 2, 7, 6}, rng);
      const Tensor y = conv_forward(x, p);
      const Tensor ref = oracle::conv(x, p.weight, p.bias, stride, pad);
      REQUIRE(y.shape() == ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);
    }
  }
  SUBCASE("linear in x without bias") {
    Rng rng(4);
    ConvParams p = ConvParams::make(2, 2, 3, 3, 1, 1);
    p.weight = oracle::random_tensor(p.weight.shape(), rng);
    Tensor x = oracle::random_tensor({1, 2, 5, 5}, rng);
    const Tensor y = conv_forward(x, p);
    for (double& v : x.values()) v *= 2.5;
    const Tensor y2 = conv_forward(x, p);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y2[i] - 2.5 * y[i]) < 1e-12);
  }
  SUBCASE("channel mismatch is an error") {
    ConvParams p = ConvParams::make(1, 3, 3, 3);
    CHECK_THROWS_AS(conv_forward(Tensor(1, 2, 5, 5), p), Error);
  }
}

TEST_CASE("conv_backward") {
  SUBCASE("zero upstream gradient") {
    Rng rng(5);
    ConvParams p = ConvParams::make(3, 2, 3, 3, 1, 1);
    p.weight = oracle::random_tensor(p.weight.shape(), rng);
    ConvCache cache;
    const Tensor y = conv_forward(oracle::random_tensor({1, 2, 4, 4}, rng), p, &cache);
    const Tensor dx = conv_backward(Tensor(y.shape()), cache, p);
    for (double v : dx.values()) CHECK(v == 0.0);
    for (double v : p.grad_weight.values()) CHECK(v == 0.0);
    for (double v : p.grad_bias) CHECK(v == 0.0);
  }
  SUBCASE("identity kernel passes the gradient through") {
    ConvParams p = ConvParams::make(1, 1, 1, 1);
    p.weight[0] = 1.0;
    Rng rng(6);
    ConvCache cache;
    const Tensor y = conv_forward(oracle::random_tensor({1, 1, 3, 3}, rng), p, &cache);
    const Tensor g = oracle::random_tensor(y.shape(), rng);
    CHECK(conv_backward(g, cache, p) == g);
  }
  SUBCASE("1x2x6x6 input, 3-channel 3x3 conv against finite differences") {
    Rng rng(7);
    ConvParams p = ConvParams::make(3, 2, 3, 3, 1, 1);
    p.weight = oracle::random_tensor(p.weight.shape(), rng);
    for (double& b : p.bias) b = rng.uniform(-1, 1);
    Tensor x = oracle::random_tensor({1, 2, 6, 6}, rng);
    ConvCache cache;
    const Tensor y = conv_forward(x, p, &cache);
    const Tensor r = oracle::random_tensor(y.shape(), rng);
    const Tensor dx = conv_backward(r, cache, p);
    auto objective = [&] { return oracle::dot(conv_forward(x, p), r); };
    CHECK(fd_max_error(x, dx, objective) < 1e-4);
    CHECK(fd_max_error(p.weight, p.grad_weight, objective) < 1e-4);
    CHECK(fd_max_error(p.bias, p.grad_bias, objective) < 1e-4);
  }
  SUBCASE("shape mismatch with the cache") {
    ConvParams p = ConvParams::make(1, 1, 3, 3);
    ConvCache cache;
    conv_forward(Tensor(1, 1, 5, 5), p, &cache);
    CHECK_THROWS_AS(conv_backward(Tensor(1, 1, 4, 4), cache, p), Error);
  }
}

TEST_CASE("tconv_forward") {
  SUBCASE("single pixel spreads the kernel") {
    TransposedConvParams p = TransposedConvParams::make(1, 1, 2, 2, 2);
    p.weight = of({1, 1, 2, 2}, {0.5, -1.0, 2.0, 3.0});
    const Tensor y = tconv_forward(of({1, 1, 1, 1}, {1.0}), p);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == p.weight[i]);
  }
  SUBCASE("zero input yields the bias") {
    TransposedConvParams p = TransposedConvParams::make(2, 3, 2, 2, 2);
    Rng rng(8);
    p.weight = oracle::random_tensor(p.weight.shape(), rng);
    p.bias = {0.1, -0.2, 0.3};
    const Tensor y = tconv_forward(Tensor(1, 2, 3, 3), p);
    CHECK(y.shape() == Shape{1, 3, 6, 6});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 36; ++i) CHECK(y.plane(0, c)[i] == p.bias[c]);
  }
  SUBCASE("matches the scatter definition") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t stride = 1 + static_cast<std::size_t>(rng.uniform_int(0, 2));
      const std::size_t k = stride + static_cast<std::size_t>(rng.uniform_int(0, 2));
      const std::size_t pad = static_cast<std::size_t>(rng.uniform_int(0, (k - 1) / 2));
      TransposedConvParams p = TransposedConvParams::make(2, 3, k, k, stride, pad);
      p.weight = oracle::random_tensor(p.weight.shape(), rng);
      for (double& b : p.bias) b = rng.uniform(-1, 1);
      const Tensor x = oracle::random_tensor({2, 2, 4, 3}, rng);
      const Tensor y = tconv_forward(x, p);
      const Tensor ref = oracle::tconv(x, p.weight, p.bias, stride, pad);
      REQUIRE(y.shape() == ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);
    }
  }
  SUBCASE("adjoint of the strided convolution") {
    Rng rng(10);
    TransposedConvParams t = TransposedConvParams::make(3, 2, 2, 2, 2);
    t.weight = oracle::random_tensor(t.weight.shape(), rng);
    ConvParams c = ConvParams::make(3, 2, 2, 2, 2);
    c.weight = t.weight;
    const Tensor x = oracle::random_tensor({1, 2, 8, 8}, rng);
    const Tensor y = oracle::random_tensor({1, 3, 4, 4}, rng);
    CHECK(std::abs(inner_product(conv_forward(x, c), y) - inner_product(x, tconv_forward(y, t))) < 1e-10);
  }
}

TEST_CASE("tconv_backward") {
  SUBCASE("zero upstream gradient") {
    Rng rng(11);
    TransposedConvParams p = TransposedConvParams::make(2, 2, 2, 2, 2);
    p.weight = oracle::random_tensor(p.weight.shape(), rng);
    TransposedConvCache cache;
    const Tensor y = tconv_forward(oracle::random_tensor({1, 2, 3, 3}, rng), p, &cache);
    const Tensor dx = tconv_backward(Tensor(y.shape()), cache, p);
    for (double v : dx.values()) CHECK(v == 0.0);
    for (double v : p.grad_weight.values()) CHECK(v == 0.0);
  }
  SUBCASE("1x1x3x3 input, factor 2, against finite differences") {
    Rng rng(12);
    TransposedConvParams p = TransposedConvParams::make(1, 2, 2, 2, 2);
    p.weight = oracle::random_tensor(p.weight.shape(), rng);
    for (double& b : p.bias) b = rng.uniform(-1, 1);
    Tensor x = oracle::random_tensor({1, 1, 3, 3}, rng);
    TransposedConvCache cache;
    const Tensor y = tconv_forward(x, p, &cache);
    const Tensor r = oracle::random_tensor(y.shape(), rng);
    const Tensor dx = tconv_backward(r, cache, p);
    auto objective = [&] { return oracle::dot(tconv_forward(x, p), r); };
    CHECK(fd_max_error(x, dx, objective) < 1e-4);
    CHECK(fd_max_error(p.weight, p.grad_weight, objective) < 1e-4);
    CHECK(fd_max_error(p.bias, p.grad_bias, objective) < 1e-4);
  }
  SUBCASE("backward data pass equals conv_forward with the same kernels") {
    Rng rng(13);
    TransposedConvParams t = TransposedConvParams::make(3, 2, 2, 2, 2);
    t.weight = oracle::random_tensor(t.weight.shape(), rng);
    TransposedConvCache cache;
    const Tensor y = tconv_forward(oracle::random_tensor({1, 3, 4, 4}, rng), t, &cache);
    const Tensor g = oracle::random_tensor(y.shape(), rng);
    ConvParams c = ConvParams::make(3, 2, 2, 2, 2);
    c.weight = t.weight;
    const Tensor a = tconv_backward(g, cache, t);
    const Tensor b = conv_forward(g, c);
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("bn_forward") {
  SUBCASE("constant batch normalises to zero") {
    BNParams p = BNParams::make(2);
    const Tensor y = bn_forward(Tensor(4, 2, 3, 3, 7.0), p, Mode::train);
    for (double v : y.values()) CHECK(std::abs(v) <= 1e-6);
  }
  SUBCASE("values -1 and +1 map to +-1/sqrt(1+eps)") {
    BNParams p = BNParams::make(1);
    const Tensor y = bn_forward(of({2, 1, 1, 1}, {-1.0, 1.0}), p, Mode::train);
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y[0] == doctest::Approx(-expect).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("gamma 0 yields beta") {
    BNParams p = BNParams::make(2);
    p.gamma = {0.0, 0.0};
    p.beta = {0.3, -0.7};
    Rng rng(14);
    const Tensor y = bn_forward(oracle::random_tensor({3, 2, 2, 2}, rng), p, Mode::train);
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i) CHECK(y.plane(b, c)[i] == p.beta[c]);
  }
  SUBCASE("train mode gives zero mean and unit variance per channel") {
    BNParams p = BNParams::make(3);
    Rng rng(15);
    const Tensor x = oracle::random_tensor({4, 3, 5, 5}, rng, -3.0, 5.0);
    const Tensor y = bn_forward(x, p, Mode::train);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0, v = 0.0;
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t i = 0; i < 25; ++i) m += y.plane(b, c)[i];
      m /= 100.0;
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t i = 0; i < 25; ++i) v += std::pow(y.plane(b, c)[i] - m, 2);
      v /= 100.0;
      CHECK(std::abs(m) < 1e-10);
      CHECK(std::abs(v - 1.0) < 0.01);
    }
  }
  SUBCASE("eval before any training batch is an error") {
    BNParams p = BNParams::make(1);
    CHECK_THROWS_AS(bn_forward(Tensor(1, 1, 2, 2), p, Mode::eval), Error);
  }
  SUBCASE("running statistics follow the moving average and drive eval mode") {
    BNParams p = BNParams::make(1);
    bn_forward(of({2, 1, 1, 1}, {1.0, 3.0}), p, Mode::train);  // mean 2, var 1
    bn_forward(of({2, 1, 1, 1}, {4.0, 8.0}), p, Mode::train);  // mean 6, var 4
    CHECK(p.running_mean[0] == doctest::Approx(0.9 * 2.0 + 0.1 * 6.0));
    CHECK(p.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 4.0));
    const Tensor y = bn_forward(of({1, 1, 1, 1}, {5.0}), p, Mode::eval);
    CHECK(y[0] == doctest::Approx((5.0 - p.running_mean[0]) / std::sqrt(p.running_var[0] + 1e-5)));
    CHECK(p.running_mean[0] == doctest::Approx(2.4));
  }
}

TEST_CASE("bn_backward") {
  SUBCASE("batch of 8 random values against finite differences") {
    Rng rng(16);
    BNParams p = BNParams::make(1);
    Tensor x = oracle::random_tensor({8, 1, 1, 1}, rng);
    BNCache cache;
    bn_forward(x, p, Mode::train, &cache);
    const Tensor r = oracle::random_tensor(x.shape(), rng);
    const Tensor dx = bn_backward(r, cache, p);
    auto objective = [&] { return oracle::dot(bn_forward(x, p, Mode::train), r); };
    CHECK(fd_max_error(x, dx, objective) < 1e-4);
    CHECK(fd_max_error(p.gamma, p.grad_gamma, objective) < 1e-4);
    CHECK(fd_max_error(p.beta, p.grad_beta, objective) < 1e-4);
  }
  SUBCASE("constant upstream gradient is annihilated") {
    Rng rng(17);
    BNParams p = BNParams::make(2);
    p.gamma = {1.7, -0.4};
    BNCache cache;
    const Tensor y = bn_forward(oracle::random_tensor({3, 2, 4, 4}, rng), p, Mode::train, &cache);
    const Tensor dx = bn_backward(Tensor(y.shape(), 0.8), cache, p);
    for (double v : dx.values()) CHECK(std::abs(v) < 1e-8);
  }
  SUBCASE("grad_beta is the per-channel sum of the upstream gradient") {
    Rng rng(18);
    BNParams p = BNParams::make(2);
    BNCache cache;
    const Tensor y = bn_forward(oracle::random_tensor({2, 2, 3, 3}, rng), p, Mode::train, &cache);
    const Tensor g = oracle::random_tensor(y.shape(), rng);
    bn_backward(g, cache, p);
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 9; ++i) s += g.plane(b, c)[i];
      CHECK(p.grad_beta[c] == doctest::Approx(s).epsilon(1e-13));
    }
  }
}

TEST_CASE("relu") {
  const Tensor y = relu_forward(of({1, 1, 1, 3}, {-3.0, 5.0, 0.0}));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 5.0);
  CHECK(y[2] == 0.0);
  const Tensor x = of({1, 1, 1, 3}, {-3.0, 5.0, 0.0});
  const Tensor g = relu_backward(Tensor(1, 1, 1, 3, 2.0), x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 2.0);
  CHECK(g[2] == 0.0);  // subgradient at zero

  Rng rng(19);
  const Tensor neg = oracle::random_tensor({2, 2, 3, 3}, rng, -2.0, -0.1);
  const Tensor neg_out = relu_forward(neg);
  const Tensor neg_grad = relu_backward(Tensor(neg.shape(), 1.0), neg);
  for (double v : neg_out.values()) CHECK(v == 0.0);
  for (double v : neg_grad.values()) CHECK(v == 0.0);

  Tensor z = oracle::random_tensor({1, 2, 4, 4}, rng);
  for (double& v : z.values()) v = v < 0 ? v - 1e-3 : v + 1e-3;
  const Tensor r = oracle::random_tensor(z.shape(), rng);
  const Tensor dz = relu_backward(r, z);
  CHECK(fd_max_error(z, dz, [&] { return oracle::dot(relu_forward(z), r); }) < 1e-4);
}

TEST_CASE("maxpool") {
  SUBCASE("single window") {
    PoolIndices idx;
    const Tensor y = maxpool_forward(of({1, 1, 2, 2}, {1, 2, 3, 4}), &idx);
    CHECK(y[0] == 4.0);
    CHECK(idx.argmax[0] == 3);
  }
  SUBCASE("constant input picks the top-left of each window") {
    PoolIndices idx;
    const Tensor x(1, 1, 4, 4, 2.5);
    const Tensor y = maxpool_forward(x, &idx);
    const auto ref = oracle::maxpool(x);
    for (double v : y.values()) CHECK(v == 2.5);
    CHECK(idx.argmax == ref.argmax);
    CHECK(idx.argmax == std::vector<std::size_t>{0, 2, 8, 10});
  }
  SUBCASE("4x4 ramp") {
    Tensor x(1, 1, 4, 4);
    for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i + 1);
    const Tensor y = maxpool_forward(x);
    CHECK(y.values()[0] == 6.0);
    CHECK(y.values()[1] == 8.0);
    CHECK(y.values()[2] == 14.0);
    CHECK(y.values()[3] == 16.0);
  }
  SUBCASE("random inputs match the window scan") {
    Rng rng(20);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor x = oracle::random_tensor({2, 3, 6, 8}, rng);
      PoolIndices idx;
      const Tensor y = maxpool_forward(x, &idx);
      const auto ref = oracle::maxpool(x);
      CHECK(y == ref.out);
      CHECK(idx.argmax == ref.argmax);
    }
  }
  SUBCASE("backward routes one unit per window") {
    Rng rng(21);
    Tensor x(1, 2, 4, 6);
    std::vector<double> distinct(x.size());
    for (std::size_t i = 0; i < distinct.size(); ++i) distinct[i] = 0.01 * static_cast<double>(i);
    for (std::size_t i = distinct.size(); i > 1; --i) {
      std::swap(distinct[i - 1], distinct[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    std::copy(distinct.begin(), distinct.end(), x.data());
    PoolIndices idx;
    const Tensor y = maxpool_forward(x, &idx);
    const Tensor dx = maxpool_backward(Tensor(y.shape(), 1.0), idx);
    std::size_t ones = 0;
    for (double v : dx.values()) ones += v == 1.0 ? 1 : 0;
    CHECK(ones == y.size());
    const Tensor r = oracle::random_tensor(y.shape(), rng);
    const Tensor g = maxpool_backward(r, idx);
    CHECK(fd_max_error(x, g, [&] { return oracle::dot(maxpool_forward(x), r); }) < 1e-4);
  }
  SUBCASE("odd sizes are rejected in strict mode") {
    CHECK_THROWS_AS(maxpool_forward(Tensor(1, 1, 3, 4)), Error);
    CHECK(maxpool_forward(Tensor(1, 1, 5, 5), nullptr, PoolEdge::floor).shape() == Shape{1, 1, 2, 2});
  }
  SUBCASE("corrupted indices are rejected") {
    PoolIndices idx;
    const Tensor y = maxpool_forward(Tensor(1, 1, 2, 2), &idx);
    idx.argmax[0] = 99;
    CHECK_THROWS_AS(maxpool_backward(y, idx), Error);
  }
}

TEST_CASE("softmax") {
  const std::vector<double> uniform(10, 0.3);
  for (double p : softmax(uniform)) CHECK(p == doctest::Approx(0.1).epsilon(1e-15));
  const auto two = softmax(std::vector<double>{0.0, std::log(2.0)});
  CHECK(two[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(two[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const std::vector<double> x{0.5, -1.0, 2.0, 0.0};
  std::vector<double> shifted = x;
  for (double& v : shifted) v += 1000.0;
  const auto a = softmax(x);
  const auto b = softmax(shifted);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK_THROWS_AS(softmax(std::vector<double>{0.0, NAN}), Error);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0}), Error);
}
