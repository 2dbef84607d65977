#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mtlsar/error.hpp"
#include "mtlsar/loss.hpp"
#include "oracles.hpp"

using namespace mtlsar;

namespace {

Tensor probs_from_logits(const Tensor& logits) {
  const Shape& s = logits.shape();
  Tensor p(s);
  for (std::size_t b = 0; b < s.n; ++b) {
    double peak = -INFINITY;
    for (std::size_t c = 0; c < s.c; ++c) peak = std::max(peak, logits(b, c, 0, 0));
    double sum = 0.0;
    for (std::size_t c = 0; c < s.c; ++c) sum += std::exp(logits(b, c, 0, 0) - peak);
    for (std::size_t c = 0; c < s.c; ++c) p(b, c, 0, 0) = std::exp(logits(b, c, 0, 0) - peak) / sum;
  }
  return p;
}

}  // namespace

TEST_CASE("recognition loss") {
  SUBCASE("certain and correct is zero") {
    const Tensor p(Shape{1, 3, 1, 1}, std::vector<double>{0.0, 1.0, 0.0});
    const std::vector<std::size_t> y{1};
    CHECK(recognition_loss(p, y).value == 0.0);
  }
  SUBCASE("uniform over ten classes is ln 10") {
    const Tensor p(Shape{4, 10, 1, 1}, 0.1);
    const std::vector<std::size_t> y{0, 3, 7, 9};
    CHECK(std::abs(recognition_loss(p, y).value - std::log(10.0)) <= 1e-12);
  }
  SUBCASE("gradient is (p - y) / batch and matches finite differences") {
    Rng rng(1);
    Tensor logits = oracle::random_tensor({3, 5, 1, 1}, rng, -2.0, 2.0);
    const std::vector<std::size_t> y{4, 0, 2};
    const RecognitionLoss loss = recognition_loss(probs_from_logits(logits), y);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double numeric = oracle::central_difference(logits[i], 1e-5, [&] {
        return recognition_loss(probs_from_logits(logits), y).value;
      });
      CHECK(oracle::rel_error(loss.grad_logits[i], numeric) < 1e-6);
    }
  }
  SUBCASE("bad labels") {
    const Tensor p(Shape{1, 3, 1, 1}, 1.0 / 3.0);
    CHECK_THROWS_AS(recognition_loss(p, std::vector<std::size_t>{3}), Error);
    CHECK_THROWS_AS(recognition_loss(p, std::vector<std::size_t>{0, 1}), Error);
  }
}

TEST_CASE("segmentation loss") {
  SUBCASE("equal logits give ln 2") {
    const Tensor logits(2, 2, 8, 8, 0.3);
    std::vector<std::uint8_t> m(2 * 64);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = i % 5 == 0;
    CHECK(std::abs(segmentation_loss(logits, m).value - std::numbers::ln2) <= 1e-12);
  }
  SUBCASE("2x2 hand case") {
    // Pixel logits (target, background) and labels; loss is the mean of
    // -log softmax at the true label.
    Tensor logits(1, 2, 2, 2);
    const double bg[] = {0.0, 1.0, 2.0, -1.0};
    const double fg[] = {1.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < 4; ++i) {
      logits[i] = bg[i];
      logits[4 + i] = fg[i];
    }
    const std::vector<std::uint8_t> m{1, 0, 1, 0};
    double expect = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const double z = m[i] ? fg[i] : bg[i];
      expect -= z - std::log(std::exp(bg[i]) + std::exp(fg[i]));
    }
    expect /= 4.0;
    CHECK(segmentation_loss(logits, m).value == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(2);
    Tensor logits = oracle::random_tensor({2, 3, 3, 4}, rng, -3.0, 3.0);
    std::vector<std::uint8_t> m(2 * 12);
    for (auto& v : m) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    const SegmentationLoss loss = segmentation_loss(logits, m);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double numeric =
          oracle::central_difference(logits[i], 1e-5, [&] { return segmentation_loss(logits, m).value; });
      CHECK(oracle::rel_error(loss.grad_logits[i], numeric) < 1e-6);
    }
  }
  SUBCASE("huge logits stay finite") {
    Tensor logits(1, 2, 1, 2);
    logits[0] = 1000.0;
    logits[2] = -1000.0;
    const std::vector<std::uint8_t> m{1, 1};
    const double v = segmentation_loss(logits, m).value;
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx((2000.0 + std::numbers::ln2) / 2.0));
  }
  SUBCASE("mask outside the label range") {
    const Tensor logits(1, 2, 1, 2);
    CHECK_THROWS_AS(segmentation_loss(logits, std::vector<std::uint8_t>{0, 2}), Error);
    CHECK_THROWS_AS(segmentation_loss(logits, std::vector<std::uint8_t>{0}), Error);
  }
}

TEST_CASE("joint loss") {
  CHECK(joint_loss(2.0, 3.0, 1.0, 1.0) == 5.0);
  CHECK(joint_loss(2.0, 3.0, 1.0, 0.0) == 2.0);
  CHECK(joint_loss(2.0, 3.0, 0.5, 2.0) == 7.0);
}

TEST_CASE("sgd") {
  SUBCASE("single step") {
    std::vector<double> w{1.0}, g{0.5};
    const std::vector<ParamRef> p{{"w", w, g}};
    sgd_step(p, 0.001);
    CHECK(w[0] == 0.9995);
  }
  SUBCASE("zero gradient leaves weights untouched") {
    std::vector<double> w{1.0, -2.0}, g{0.0, 0.0};
    const std::vector<ParamRef> p{{"w", w, g}};
    sgd_step(p, 0.1);
    CHECK(w == std::vector<double>{1.0, -2.0});
  }
  SUBCASE("step schedule") {
    SgdState s;
    const double expect[] = {0.001, 0.001, 0.001, 0.001, 0.001, 1e-4, 1e-4, 1e-4,
                             1e-4,  1e-4,  1e-5,  1e-5,  1e-5,  1e-5, 1e-5};
    for (std::size_t e = 0; e < 15; ++e) CHECK(s.lr_at(e) == expect[e]);
    s.period = 0;
    CHECK(s.lr_at(100) == 0.001);
  }
  SUBCASE("the gradient is an average over the batch") {
    // Doubling a batch by repeating it leaves the recognition gradient unchanged.
    Rng rng(3);
    const Tensor logits = oracle::random_tensor({2, 4, 1, 1}, rng);
    Tensor twice(4, 4, 1, 1);
    for (std::size_t i = 0; i < 8; ++i) twice[i] = twice[i + 8] = logits[i];
    const auto g1 = recognition_loss(probs_from_logits(logits), std::vector<std::size_t>{1, 2});
    const auto g2 = recognition_loss(probs_from_logits(twice), std::vector<std::size_t>{1, 2, 1, 2});
    CHECK(g1.value == doctest::Approx(g2.value).epsilon(1e-15));
    for (std::size_t i = 0; i < 8; ++i) CHECK(g1.grad_logits[i] == doctest::Approx(2.0 * g2.grad_logits[i]));
  }
}

TEST_CASE("predictions") {
  Tensor p(Shape{2, 3, 1, 1}, std::vector<double>{0.2, 0.5, 0.3, 0.4, 0.4, 0.2});
  CHECK(predict_labels(p) == std::vector<std::size_t>{1, 0});
  Tensor seg(1, 2, 1, 3);
  seg[0] = 1.0;  // background
  seg[3] = 0.0;
  seg[1] = 0.0;
  seg[4] = 2.0;
  seg[2] = 0.5;
  seg[5] = 0.5;
  CHECK(predict_masks(seg) == std::vector<std::uint8_t>{0, 1, 0});
}
