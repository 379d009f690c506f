#include <doctest.h>

#include <cmath>

#include "../support/helpers.hpp"
#include "slbr/errors.hpp"
#include "slbr/ops.hpp"

using namespace slbr;
using slbr::testing::grad_check;
using slbr::testing::random_tensor;

namespace {

Var sum_sq(const Var& y) {
  // smooth scalar probe: mean |y - c| is kinked, so square via mul
  Var sq = ops::mul(y, y);
  return ops::mean_abs_diff(sq, Var(Tensor(sq.shape(), -1.0)));
}

}  // namespace

TEST_CASE("conv2d matches direct convolution") {
  Rng rng(10);
  const Tensor x = random_tensor({2, 3, 7, 6}, rng);
  const Tensor w = random_tensor({4, 3, 3, 3}, rng);
  const Tensor b = random_tensor({1, 4, 1, 1}, rng);
  for (int stride : {1, 2}) {
    const Tensor y = ops::conv2d(Var(x), Var(w), Var(b), stride, 1).value();
    const int oh = (7 + 2 - 3) / stride + 1, ow = (6 + 2 - 3) / stride + 1;
    REQUIRE(y.shape() == Shape{2, 4, oh, ow});
    double worst = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int o = 0; o < 4; ++o)
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j) {
            double acc = b[o];
            for (int c = 0; c < 3; ++c)
              for (int di = 0; di < 3; ++di)
                for (int dj = 0; dj < 3; ++dj) {
                  const int yy = i * stride + di - 1, xx = j * stride + dj - 1;
                  if (yy < 0 || yy >= 7 || xx < 0 || xx >= 6) continue;
                  acc += w.at(o, c, di, dj) * x.at(n, c, yy, xx);
                }
            worst = std::max(worst, std::abs(acc - y.at(n, o, i, j)));
          }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("conv2d gradients") {
  Rng rng(11);
  for (int stride : {1, 2}) {
    for (int kernel : {1, 3}) {
      const double err = grad_check(
          [&](const std::vector<Var>& v) {
            return sum_sq(ops::conv2d(v[0], v[1], v[2], kernel == 1 ? 1 : stride, kernel / 2));
          },
          {random_tensor({2, 2, 6, 6}, rng), random_tensor({3, 2, kernel, kernel}, rng),
           random_tensor({1, 3, 1, 1}, rng)});
      CHECK(err < 1e-6);
    }
  }
}

TEST_CASE("group_norm normalizes each group and has correct gradients") {
  Rng rng(12);
  const Tensor x = random_tensor({2, 4, 5, 5}, rng, -2.0, 3.0);
  const Var y = ops::group_norm(Var(x), Var(Tensor({1, 4, 1, 1}, 1.0)), Var(Tensor({1, 4, 1, 1})), 2);
  for (int n = 0; n < 2; ++n) {
    for (int g = 0; g < 2; ++g) {
      double mean = 0.0, sq = 0.0;
      for (int c = 2 * g; c < 2 * g + 2; ++c)
        for (int i = 0; i < 25; ++i) {
          const double v = y.value().plane(n, c)[i];
          mean += v;
          sq += v * v;
        }
      CHECK(mean / 50.0 == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(sq / 50.0 == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
  // sum of squares of a normalized map is nearly constant in x; weight it.
  const Var weights(random_tensor({2, 4, 3, 3}, rng));
  for (int groups : {1, 2, 4}) {
    const double err = grad_check(
        [&](const std::vector<Var>& v) {
          return sum_sq(ops::mul(ops::group_norm(v[0], v[1], v[2], groups), weights));
        },
        {random_tensor({2, 4, 3, 3}, rng), random_tensor({1, 4, 1, 1}, rng),
         random_tensor({1, 4, 1, 1}, rng)});
    CHECK(err < 1e-5);
  }
}

TEST_CASE("pointwise ops") {
  Rng rng(13);
  const Tensor x({1, 1, 1, 3}, {-2.0, 0.5, 3.0});
  const Tensor lr = ops::leaky_relu(Var(x), 0.2).value();
  CHECK(lr[0] == doctest::Approx(-0.4));
  CHECK(lr[2] == 3.0);
  CHECK(ops::sigmoid(Var(Tensor({1, 1, 1, 1}, 0.0))).item() == 0.5);
  const Tensor si = ops::silu(Var(x)).value();
  CHECK(si[0] == doctest::Approx(-2.0 / (1.0 + std::exp(2.0))).epsilon(1e-14));
  CHECK(si[1] == doctest::Approx(0.5 / (1.0 + std::exp(-0.5))).epsilon(1e-14));
  CHECK(ops::silu(Var(Tensor({1, 1, 1, 1}, 0.0))).item() == 0.0);
  CHECK(grad_check([](const std::vector<Var>& v) { return sum_sq(ops::silu(v[0])); },
                   {random_tensor({1, 2, 3, 3}, rng, -4.0, 4.0)}) < 1e-7);
  // Values kept away from the kink.
  Tensor pos = random_tensor({1, 2, 3, 3}, rng, 0.1, 1.0);
  for (std::size_t i = 0; i < pos.size(); i += 2) pos[i] = -pos[i];
  CHECK(grad_check([](const std::vector<Var>& v) { return sum_sq(ops::leaky_relu(v[0], 0.2)); },
                   {pos}) < 1e-7);
  CHECK(grad_check([](const std::vector<Var>& v) { return sum_sq(ops::sigmoid(v[0])); },
                   {random_tensor({1, 2, 3, 3}, rng)}) < 1e-7);
  CHECK(grad_check(
            [](const std::vector<Var>& v) {
              return sum_sq(ops::sub(ops::mul(v[0], v[1]), ops::scale(ops::add(v[0], v[1]), 0.3)));
            },
            {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng)}) < 1e-7);
}

TEST_CASE("concat_channels and expand_spatial") {
  Rng rng(14);
  CHECK(grad_check(
            [](const std::vector<Var>& v) {
              const std::array<Var, 2> parts{v[0], v[1]};
              return sum_sq(ops::concat_channels(parts));
            },
            {random_tensor({2, 1, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)}) < 1e-7);
  const Var e = ops::expand_spatial(Var(Tensor({1, 2, 1, 1}, {4.0, -1.0})), 2, 3);
  CHECK(e.shape() == Shape{1, 2, 2, 3});
  CHECK(e.value().at(0, 1, 1, 2) == -1.0);
  CHECK(grad_check([](const std::vector<Var>& v) { return sum_sq(ops::expand_spatial(v[0], 3, 2)); },
                   {random_tensor({2, 2, 1, 1}, rng)}) < 1e-7);
}

TEST_CASE("bilinear resize uses half-pixel centers") {
  const Tensor row({1, 1, 1, 2}, {0.0, 1.0});
  const Tensor up = ops::resize_bilinear(Var(row), 1, 4).value();
  // Source coordinates -0.25, 0.25, 0.75, 1.25 (clamped at the borders).
  CHECK(up[0] == doctest::Approx(0.0));
  CHECK(up[1] == doctest::Approx(0.25));
  CHECK(up[2] == doctest::Approx(0.75));
  CHECK(up[3] == doctest::Approx(1.0));
  Rng rng(15);
  const Tensor x = random_tensor({1, 2, 4, 4}, rng);
  CHECK(max_abs_diff(ops::resize_bilinear(Var(x), 4, 4).value(), x) == 0.0);
  CHECK(grad_check([](const std::vector<Var>& v) { return sum_sq(ops::resize_bilinear(v[0], 8, 6)); },
                   {random_tensor({1, 2, 4, 3}, rng)}) < 1e-7);
  CHECK(grad_check([](const std::vector<Var>& v) { return sum_sq(ops::resize_bilinear(v[0], 2, 2)); },
                   {random_tensor({1, 1, 4, 4}, rng)}) < 1e-7);
}

TEST_CASE("max pooling") {
  const Tensor x({1, 1, 2, 4}, {1, 5, 2, 0, 3, -1, 7, 8});
  const Tensor y = ops::max_pool2(Var(x)).value();
  CHECK(y.shape() == Shape{1, 1, 1, 2});
  CHECK(y[0] == 5.0);
  CHECK(y[1] == 8.0);
  CHECK(ops::max_pool_tensor(x, 2)[1] == 8.0);
  CHECK(ops::max_pool_tensor(x, 1)[5] == -1.0);
  Rng rng(16);
  CHECK(grad_check([](const std::vector<Var>& v) { return sum_sq(ops::max_pool2(v[0])); },
                   {random_tensor({1, 2, 4, 4}, rng)}) < 1e-7);
}

TEST_CASE("masked average pooling") {
  // X row [1, 3] under mask [1, 0] pools to 1.
  const Var x(Tensor({1, 1, 1, 2}, {1.0, 3.0}));
  const Var m(Tensor({1, 1, 1, 2}, {1.0, 0.0}));
  CHECK(ops::masked_avg_pool(x, m, 1e-6).item() == doctest::Approx(1.0).epsilon(1e-5));
  // Uniform weight: plain spatial mean.
  Rng rng(17);
  const Tensor feat = random_tensor({2, 3, 4, 4}, rng);
  const Tensor half({2, 1, 4, 4}, 0.5);
  const Tensor pooled = ops::masked_avg_pool(Var(feat), Var(half), 0.0).value();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (int i = 0; i < 16; ++i) mean += feat.plane(n, c)[i] / 16.0;
      CHECK(pooled.at(n, c, 0, 0) == doctest::Approx(mean).epsilon(1e-12));
    }
  // All-zero mask stays finite.
  const Tensor zero_pool = ops::masked_avg_pool(Var(feat), Var(Tensor({2, 1, 4, 4})), 1e-6).value();
  CHECK(zero_pool.all_finite());
  CHECK(zero_pool.max() == 0.0);
  CHECK(grad_check(
            [](const std::vector<Var>& v) { return sum_sq(ops::masked_avg_pool(v[0], v[1], 1e-6)); },
            {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 1, 3, 3}, rng, 0.1, 0.9)}) < 1e-6);
}

TEST_CASE("channel standardization") {
  const std::array<double, 2> shift{0.5, 1.0}, div{2.0, 4.0};
  const Tensor y = ops::channel_standardize(Var(Tensor({1, 2, 1, 1}, {1.5, 3.0})), shift, div).value();
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.5));
}

TEST_CASE("binary cross entropy oracles") {
  const Tensor gt({1, 1, 1, 2}, {1.0, 0.0});
  const Var half(Tensor({1, 1, 1, 2}, 0.5));
  CHECK(ops::binary_cross_entropy(half, gt, ops::Reduction::sum).item() ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  const Var p9(Tensor({1, 1, 1, 1}, 0.9));
  CHECK(ops::binary_cross_entropy(p9, Tensor({1, 1, 1, 1}, 1.0), ops::Reduction::sum).item() ==
        doctest::Approx(-std::log(0.9)).epsilon(1e-12));
  Rng rng(18);
  const Tensor pred = random_tensor({1, 1, 3, 3}, rng, 0.05, 0.95);
  Tensor target = random_tensor({1, 1, 3, 3}, rng, 0.0, 1.0);
  for (double& v : target.values()) v = v > 0.5 ? 1.0 : 0.0;
  CHECK(grad_check(
            [&](const std::vector<Var>& v) {
              return ops::binary_cross_entropy(v[0], target, ops::Reduction::mean);
            },
            {pred}) < 1e-6);
  // Saturated predictions stay finite.
  const Tensor saturated({1, 1, 1, 2}, {0.0, 1.0});
  CHECK(std::isfinite(ops::binary_cross_entropy(Var(saturated), gt, ops::Reduction::sum).item()));
}

TEST_CASE("mean absolute difference") {
  const Var a(Tensor({1, 3, 2, 2}, 0.2)), b(Tensor({1, 3, 2, 2}, 0.5));
  CHECK(ops::mean_abs_diff(a, b).item() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(ops::mean_abs_diff(a, b).item() == ops::mean_abs_diff(b, a).item());
  CHECK_THROWS_AS(ops::mean_abs_diff(a, Var(Tensor({1, 3, 2, 3}))), ContractError);
}

TEST_CASE("no-grad guard suppresses recording") {
  Var x(Tensor({1, 1, 1, 1}, 2.0), true);
  {
    NoGradGuard guard;
    Var y = ops::scale(x, 3.0);
    CHECK_FALSE(y.requires_grad());
  }
  Var y = ops::scale(x, 3.0);
  CHECK(y.requires_grad());
  backward(y);
  CHECK(x.grad()[0] == 3.0);
}
