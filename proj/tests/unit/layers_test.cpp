#include "csmri/layers.hpp"
#include "csmri/optim.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <array>
#include <numeric>
#include <random>

using namespace csmri;
using test::dot;
using test::numeric_grad;
using test::random_tensor;
using test::rel_error;

namespace {

constexpr int kSeeds = 20;
constexpr double kTol = 1e-5;

// Values whose 2x2 patches have well separated maxima, so small perturbations never flip an argmax.
Tensor64 spread_tensor(Shape s, std::mt19937_64 &rng)
{
  std::vector<int> order(s.count());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Tensor64 t(s);
  for (std::size_t i = 0; i < t.size(); i++) {
    t[i] = 0.01 * order[i] - 0.005 * static_cast<double>(s.count());
  }
  return t;
}

// ReLU inputs kept away from the kink.
Tensor64 off_kink_tensor(Shape s, std::mt19937_64 &rng)
{
  auto t = random_tensor(s, rng);
  for (auto &v : t.values()) {
    v += v >= 0 ? 0.01 : -0.01;
  }
  return t;
}

} // namespace

TEST(Conv, IdentityAndBias)
{
  std::mt19937_64 rng(0);
  auto x = random_tensor({2, 1, 5, 7}, rng);
  ConvParams<double> id{Tensor64({1, 1, 1, 1}, 1.0), Tensor64({1, 1, 1, 1}, 0.0)};
  auto y = conv2d(x, id);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(rel_error(y, x), 0.0);

  ConvParams<double> c{Tensor64({3, 2, 3, 3}, 0.0), Tensor64({1, 3, 1, 1}, 0.0)};
  c.bias[0] = 1.5;
  c.bias[1] = -2.0;
  c.bias[2] = 0.25;
  auto x2 = random_tensor({2, 2, 6, 6}, rng);
  auto y2 = conv2d(x2, c);
  EXPECT_EQ(y2.shape(), (Shape{2, 3, 6, 6}));
  for (int n = 0; n < 2; n++) {
    for (int o = 0; o < 3; o++) {
      for (int i = 0; i < 36; i++) {
        EXPECT_EQ(y2.plane(n, o)[i], c.bias[static_cast<std::size_t>(o)]);
      }
    }
  }
}

class ConvOracle : public ::testing::TestWithParam<std::array<int, 4>>
{};

TEST_P(ConvOracle, MatchesDirectCrossCorrelation)
{
  auto const [C, O, H, W] = GetParam();
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, C, H, W}, rng);
  ConvParams<double> p{random_tensor({O, C, 3, 3}, rng), random_tensor({1, O, 1, 1}, rng)};
  auto y = conv2d(x, p);
  double worst = 0.0;
  for (int n = 0; n < 2; n++) {
    for (int o = 0; o < O; o++) {
      for (int h = 0; h < H; h++) {
        for (int w = 0; w < W; w++) {
          double acc = p.bias[static_cast<std::size_t>(o)];
          for (int c = 0; c < C; c++) {
            for (int i = 0; i < 3; i++) {
              for (int j = 0; j < 3; j++) {
                int const hh = h + i - 1;
                int const ww = w + j - 1;
                if (hh >= 0 && hh < H && ww >= 0 && ww < W) {
                  acc += p.weight(o, c, i, j) * x(n, c, hh, ww);
                }
              }
            }
          }
          worst = std::max(worst, std::abs(y(n, o, h, w) - acc));
        }
      }
    }
  }
  EXPECT_LT(worst, 1e-12);
}

// Large channel counts split the image into several row blocks internally.
INSTANTIATE_TEST_SUITE_P(Shapes, ConvOracle,
                         ::testing::Values(std::array<int, 4>{3, 4, 5, 6}, std::array<int, 4>{40, 3, 32, 32},
                                           std::array<int, 4>{72, 2, 24, 16}));

TEST(Conv, BackwardIsAdjointOnLargeInputs)
{
  std::mt19937_64 rng(12);
  auto x = random_tensor({2, 48, 32, 32}, rng);
  ConvParams<double> p{random_tensor({5, 48, 3, 3}, rng), Tensor64({1, 5, 1, 1})};
  auto dy = random_tensor({2, 5, 32, 32}, rng);
  auto const y = conv2d(x, p);
  auto const g = conv2d_backward(x, p, dy);
  // Without bias the output is linear in x and in the weights separately.
  double const lhs = test::dot(dy, y);
  EXPECT_NEAR(test::dot(g.dx, x), lhs, 1e-9 * std::abs(lhs));
  EXPECT_NEAR(test::dot(g.dweight, p.weight), lhs, 1e-9 * std::abs(lhs));
}

TEST(Conv, RejectsMismatches)
{
  Tensor64 x({1, 2, 4, 4});
  ConvParams<double> p{Tensor64({1, 3, 3, 3}), Tensor64({1, 1, 1, 1})};
  EXPECT_THROW(conv2d(x, p), std::invalid_argument);
  ConvParams<double> k5{Tensor64({1, 2, 5, 5}), Tensor64({1, 1, 1, 1})};
  EXPECT_THROW(conv2d(x, k5), std::invalid_argument);
  ConvParams<double> ok{Tensor64({1, 2, 3, 3}), Tensor64({1, 1, 1, 1})};
  EXPECT_THROW(conv2d(Tensor64({1, 2, 2, 2}), ok), std::invalid_argument);
}

class ConvGradient : public ::testing::TestWithParam<int>
{};

TEST_P(ConvGradient, MatchesFiniteDifferences)
{
  int const k = GetParam();
  for (int seed = 0; seed < kSeeds; seed++) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    auto x = random_tensor({1, 2, 6, 6}, rng);
    ConvParams<double> p{random_tensor({3, 2, k, k}, rng), random_tensor({1, 3, 1, 1}, rng)};
    auto r = random_tensor({1, 3, 6, 6}, rng);
    auto loss = [&] { return dot(conv2d(x, p), r); };

    auto g = conv2d_backward(x, p, r);
    EXPECT_LT(rel_error(g.dx, numeric_grad(x, loss)), kTol) << seed;
    EXPECT_LT(rel_error(g.dweight, numeric_grad(p.weight, loss)), kTol) << seed;
    EXPECT_LT(rel_error(g.dbias, numeric_grad(p.bias, loss)), kTol) << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Kernels, ConvGradient, ::testing::Values(1, 3));

TEST(Xavier, VarianceBiasAndDeterminism)
{
  // 3x3, 128 -> 96 channels: 110592 weights per draw, ten draws.
  double sum = 0.0;
  double sum2 = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 10; seed++) {
    auto p = xavier_init<double>(3, 3, 128, 96, seed);
    for (double v : p.weight.values()) {
      sum += v;
      sum2 += v * v;
      count++;
    }
    for (double b : p.bias.values()) {
      EXPECT_EQ(b, 0.0);
    }
  }
  ASSERT_GE(count, 1000000u);
  double const mean = sum / count;
  double const var = sum2 / count - mean * mean;
  double const expect = 2.0 / (9.0 * 128 + 9.0 * 96);
  EXPECT_NEAR(var, expect, 0.05 * expect);

  auto a = xavier_init<float>(3, 3, 4, 8, 77);
  auto b = xavier_init<float>(3, 3, 4, 8, 77);
  EXPECT_TRUE(std::equal(a.weight.values().begin(), a.weight.values().end(), b.weight.values().begin()));
  EXPECT_EQ(a.weight.shape(), (Shape{8, 4, 3, 3}));
}

TEST(BatchNorm, TrainNormalisesPerChannel)
{
  std::mt19937_64 rng(3);
  auto x = random_tensor({4, 3, 5, 5}, rng, -2.0, 7.0);
  auto p = BNParams<double>::identity(3);
  auto y = batch_norm(x, p, BNMode::Train);
  for (int c = 0; c < 3; c++) {
    double m = 0.0;
    double v = 0.0;
    for (int n = 0; n < 4; n++) {
      for (int i = 0; i < 25; i++) {
        m += y.plane(n, c)[i];
      }
    }
    m /= 100.0;
    for (int n = 0; n < 4; n++) {
      for (int i = 0; i < 25; i++) {
        v += (y.plane(n, c)[i] - m) * (y.plane(n, c)[i] - m);
      }
    }
    v /= 100.0;
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-5);
  }
}

TEST(BatchNorm, AffineAndRunningStats)
{
  std::mt19937_64 rng(4);
  auto raw = random_tensor({8, 1, 4, 4}, rng, -10.0, 10.0);
  auto unit = BNParams<double>::identity(1);
  auto x = batch_norm(raw, unit, BNMode::Train);

  auto p = BNParams<double>::identity(1);
  p.gamma[0] = 2.0;
  p.beta[0] = 3.0;
  auto y = batch_norm(x, p, BNMode::Train);
  double m = 0.0;
  for (double v : y.values()) {
    m += v;
  }
  m /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y.values()) {
    var += (v - m) * (v - m);
  }
  var /= static_cast<double>(y.size());
  EXPECT_NEAR(m, 3.0, 1e-4);
  EXPECT_NEAR(var, 4.0, 1e-4);

  // One update from (0, 1) with momentum 0.1 against a zero-mean unit-variance batch.
  double const n = static_cast<double>(x.size());
  EXPECT_NEAR(p.running_mean[0], 0.0, 1e-12);
  EXPECT_NEAR(p.running_var[0], 0.9 + 0.1 * n / (n - 1.0), 1e-6);

  auto inf = batch_norm(x, p, BNMode::Infer);
  double const inv = 1.0 / std::sqrt(p.running_var[0] + p.epsilon);
  for (std::size_t i = 0; i < x.size(); i++) {
    EXPECT_NEAR(inf[i], 2.0 * (x[i] - p.running_mean[0]) * inv + 3.0, 1e-12);
  }
}

TEST(BatchNorm, Errors)
{
  auto p = BNParams<double>::identity(2);
  EXPECT_THROW(batch_norm(Tensor64({1, 2, 1, 1}), p, BNMode::Train), std::invalid_argument);
  EXPECT_NO_THROW(batch_norm(Tensor64({1, 2, 1, 1}), p, BNMode::Infer));
  EXPECT_THROW(batch_norm(Tensor64({2, 3, 2, 2}), p, BNMode::Train), std::invalid_argument);
}

TEST(BatchNorm, GradientMatchesFiniteDifferences)
{
  for (int seed = 0; seed < kSeeds; seed++) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(100 + seed));
    auto x = random_tensor({3, 2, 3, 4}, rng);
    auto p = BNParams<double>::identity(2);
    p.gamma = random_tensor({1, 2, 1, 1}, rng, 0.5, 2.0);
    p.beta = random_tensor({1, 2, 1, 1}, rng);
    auto r = random_tensor(x.shape(), rng);
    auto loss = [&] {
      auto q = p;
      return dot(batch_norm(x, q, BNMode::Train), r);
    };
    auto q = p;
    BNCache<double> cache;
    batch_norm(x, q, BNMode::Train, &cache);
    auto g = batch_norm_backward(r, p, cache);
    EXPECT_LT(rel_error(g.dx, numeric_grad(x, loss)), kTol) << seed;
    EXPECT_LT(rel_error(g.dgamma, numeric_grad(p.gamma, loss)), kTol) << seed;
    EXPECT_LT(rel_error(g.dbeta, numeric_grad(p.beta, loss)), kTol) << seed;
  }
}

TEST(Relu, ValuesAndIdempotence)
{
  Tensor64 x({1, 1, 1, 4});
  x[0] = -1.0;
  x[1] = 2.0;
  x[2] = 0.0;
  x[3] = -0.0;
  auto y = relu(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 2.0);
  EXPECT_EQ(y[2], 0.0);
  auto yy = relu(y);
  EXPECT_EQ(rel_error(yy, y), 0.0);

  Tensor64 dy({1, 1, 1, 4}, 1.0);
  auto dx = relu_backward(x, dy);
  EXPECT_EQ(dx[0], 0.0);
  EXPECT_EQ(dx[1], 1.0);
  EXPECT_EQ(dx[2], 0.0);
}

TEST(Relu, GradientMatchesFiniteDifferences)
{
  for (int seed = 0; seed < kSeeds; seed++) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(200 + seed));
    auto x = off_kink_tensor({2, 2, 4, 4}, rng);
    auto r = random_tensor(x.shape(), rng);
    auto loss = [&] { return dot(relu(x), r); };
    EXPECT_LT(rel_error(relu_backward(x, r), numeric_grad(x, loss)), kTol) << seed;
  }
}

TEST(Block, ConvBnReluIsNonNegative)
{
  std::mt19937_64 rng(9);
  auto x = random_tensor({2, 3, 8, 8}, rng);
  auto c = xavier_init<double>(3, 3, 3, 4, 1);
  auto bn = BNParams<double>::identity(4);
  auto y = relu(batch_norm(conv2d(x, c), bn, BNMode::Train));
  for (double v : y.values()) {
    EXPECT_GE(v, 0.0);
  }
}

TEST(Pool, PatchMaxAndSwitches)
{
  Tensor64 x({1, 1, 2, 2});
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  x[3] = 4;
  auto [y, sw] = max_pool_2x2(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 4.0);
  EXPECT_EQ(sw.index[0], 3);

  Tensor64 flat({2, 3, 4, 6}, 1.25);
  auto [fy, fsw] = max_pool_2x2(flat);
  EXPECT_EQ(fy.shape(), (Shape{2, 3, 2, 3}));
  for (double v : fy.values()) {
    EXPECT_EQ(v, 1.25);
  }
  for (auto s : fsw.index) {
    EXPECT_EQ(s, 0);
  }
  EXPECT_THROW(max_pool_2x2(Tensor64({1, 1, 3, 4})), std::invalid_argument);
}

TEST(Pool, UnpoolRoundTrips)
{
  std::mt19937_64 rng(5);
  auto x = spread_tensor({2, 2, 6, 8}, rng);
  auto [y, sw] = max_pool_2x2(x);
  auto up = unpool_2x2(y, sw);
  EXPECT_EQ(up.shape(), x.shape());
  std::size_t nonzero = 0;
  for (double v : up.values()) {
    nonzero += v != 0.0 ? 1 : 0;
  }
  EXPECT_EQ(nonzero * 4, up.size());

  auto pos = random_tensor(y.shape(), rng, 0.0, 1.0);
  auto [back, sw2] = max_pool_2x2(unpool_2x2(pos, sw));
  EXPECT_EQ(rel_error(back, pos), 0.0);

  EXPECT_THROW(unpool_2x2(Tensor64({2, 2, 3, 3}), sw), std::invalid_argument);
}

TEST(Pool, GradientsMatchFiniteDifferences)
{
  for (int seed = 0; seed < kSeeds; seed++) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(300 + seed));
    auto x = spread_tensor({2, 2, 4, 6}, rng);
    auto [y, sw] = max_pool_2x2(x);
    auto r = random_tensor(y.shape(), rng);
    auto pool_loss = [&] { return dot(max_pool_2x2(x).first, r); };
    EXPECT_LT(rel_error(max_pool_2x2_backward(r, sw), numeric_grad(x, pool_loss)), kTol) << seed;

    auto u = random_tensor(y.shape(), rng);
    auto ru = random_tensor(x.shape(), rng);
    auto unpool_loss = [&] { return dot(unpool_2x2(u, sw), ru); };
    EXPECT_LT(rel_error(unpool_2x2_backward(ru, sw), numeric_grad(u, unpool_loss)), kTol) << seed;

    auto near_loss = [&] { return dot(upsample_nearest_2x(u), ru); };
    EXPECT_LT(rel_error(upsample_nearest_2x_backward(ru), numeric_grad(u, near_loss)), kTol) << seed;
  }
}

TEST(Concat, ShapesSlicesAndGradient)
{
  std::mt19937_64 rng(6);
  auto a = random_tensor({1, 2, 4, 4}, rng);
  auto b = random_tensor({1, 3, 4, 4}, rng);
  auto y = concat_channels(a, b);
  EXPECT_EQ(y.shape(), (Shape{1, 5, 4, 4}));
  auto [ga, gb] = concat_channels_backward(y, 2);
  EXPECT_EQ(rel_error(ga, a), 0.0);
  EXPECT_EQ(rel_error(gb, b), 0.0);
  EXPECT_THROW(concat_channels(a, Tensor64({1, 3, 4, 2})), std::invalid_argument);
  EXPECT_THROW(concat_channels_backward(y, 6), std::invalid_argument);

  for (int seed = 0; seed < kSeeds; seed++) {
    std::mt19937_64 r2(static_cast<std::uint64_t>(400 + seed));
    auto p = random_tensor({2, 2, 3, 3}, r2);
    auto q = random_tensor({2, 1, 3, 3}, r2);
    auto r = random_tensor({2, 3, 3, 3}, r2);
    auto loss = [&] { return dot(concat_channels(p, q), r); };
    auto [dp, dq] = concat_channels_backward(r, 2);
    EXPECT_LT(rel_error(dp, numeric_grad(p, loss)), kTol);
    EXPECT_LT(rel_error(dq, numeric_grad(q, loss)), kTol);
    // The two parts hold every upstream entry exactly once.
    EXPECT_DOUBLE_EQ(dot(dp, dp) + dot(dq, dq), dot(r, r));
  }
}

TEST(Mse, ValuesAndGradient)
{
  std::mt19937_64 rng(7);
  auto a = random_tensor({2, 1, 4, 4}, rng);
  EXPECT_EQ(mse_loss(a, a).loss, 0.0);
  Tensor64 shifted = a;
  for (auto &v : shifted.values()) {
    v += 0.7;
  }
  EXPECT_NEAR(mse_loss(shifted, a).loss, 0.49, 1e-12);
  EXPECT_THROW(mse_loss(a, Tensor64({2, 1, 4, 3})), std::invalid_argument);

  for (int seed = 0; seed < kSeeds; seed++) {
    std::mt19937_64 r2(static_cast<std::uint64_t>(500 + seed));
    auto pred = random_tensor({2, 1, 3, 5}, r2);
    auto target = random_tensor(pred.shape(), r2);
    auto loss = [&] { return mse_loss(pred, target).loss; };
    EXPECT_LT(rel_error(mse_loss(pred, target).grad, numeric_grad(pred, loss)), 1e-8) << seed;
  }
}
