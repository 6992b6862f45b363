#include "damgan/autodiff.hpp"

#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace damgan;
using damgan::testing::max_gradient_error;
using damgan::testing::random_tensor;
using Var = ad::Var<double>;
using Tape = ad::Tape<double>;

namespace {

// Weighted sum so every output element gets a distinct upstream gradient.
Var probe(Tape& t, const Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = t.constant(random_tensor(y.shape(), rng));
  auto prod = ad::mul(y, w);
  return ad::l1_mean(prod, t.constant(Tensor<double>(y.shape(), -4.0)));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(Autodiff, ConvForwardMatchesDirectLoop) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({2, 3, 6, 5}, rng);
  const auto w = random_tensor({4, 3, 3, 3}, rng);
  const auto b = random_tensor({1, 4, 1, 1}, rng);
  const ad::ConvOptions o{.stride = 2, .padding = 2, .dilation = 2};
  Tape t;
  auto y = ad::conv2d(t.constant(x), t.constant(w), std::optional(t.constant(b)), o).value();
  ASSERT_EQ(y.shape(), (Shape{2, 4, 3, 3}));
  for (Index n = 0; n < 2; ++n)
    for (Index oc = 0; oc < 4; ++oc)
      for (Index oy = 0; oy < 3; ++oy)
        for (Index ox = 0; ox < 3; ++ox) {
          double acc = b[oc];
          for (Index c = 0; c < 3; ++c)
            for (Index ky = 0; ky < 3; ++ky)
              for (Index kx = 0; kx < 3; ++kx) {
                const Index iy = oy * 2 - 2 + ky * 2, ix = ox * 2 - 2 + kx * 2;
                if (iy >= 0 && iy < 6 && ix >= 0 && ix < 5) acc += w(oc, c, ky, kx) * x(n, c, iy, ix);
              }
          EXPECT_NEAR(y(n, oc, oy, ox), acc, 1e-12);
        }
}

TEST(Autodiff, ConvGradients) {
  std::mt19937_64 rng(2);
  for (const ad::ConvOptions o : {ad::ConvOptions{}, ad::ConvOptions{.stride = 2, .padding = 1},
                                  ad::ConvOptions{.padding = 2, .dilation = 2}}) {
    const Index k = o.stride == 1 && o.padding == 0 ? 1 : 3;
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      return probe(t, ad::conv2d(v[0], v[1], std::optional(v[2]), o));
    };
    EXPECT_LT(max_gradient_error(f, {random_tensor({2, 3, 5, 5}, rng), random_tensor({2, 3, k, k}, rng),
                                     random_tensor({1, 2, 1, 1}, rng)}),
              kTol);
  }
}

TEST(Autodiff, LinearGradients) {
  std::mt19937_64 rng(3);
  auto f = [](Tape& t, const std::vector<Var>& v) { return probe(t, ad::linear(v[0], v[1], v[2])); };
  EXPECT_LT(max_gradient_error(f, {random_tensor({3, 2, 2, 2}, rng), random_tensor({4, 8, 1, 1}, rng),
                                   random_tensor({1, 4, 1, 1}, rng)}),
            kTol);
}

TEST(Autodiff, PointwiseGradients) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor({2, 2, 3, 3}, rng);
  EXPECT_LT(max_gradient_error([](Tape& t, const std::vector<Var>& v) { return probe(t, ad::sigmoid(v[0])); }, {x}),
            kTol);
  EXPECT_LT(max_gradient_error(
                [](Tape& t, const std::vector<Var>& v) { return probe(t, ad::leaky_relu(v[0], 0.2)); }, {x}),
            kTol);
  EXPECT_LT(max_gradient_error([](Tape& t, const std::vector<Var>& v) { return probe(t, ad::scale(v[0], 3.0)); }, {x}),
            kTol);
}

TEST(Autodiff, InstanceNormGradients) {
  std::mt19937_64 rng(5);
  auto f = [](Tape& t, const std::vector<Var>& v) { return probe(t, ad::instance_norm(v[0])); };
  EXPECT_LT(max_gradient_error(f, {random_tensor({2, 3, 4, 4}, rng)}), kTol);
}

TEST(Autodiff, InstanceNormOutputIsStandardized) {
  std::mt19937_64 rng(6);
  Tape t;
  auto y = ad::instance_norm(t.constant(random_tensor({2, 3, 5, 5}, rng, 2.0, 9.0)), 0.0).value();
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 3; ++c) {
      EXPECT_NEAR(y.item(n).row(c).mean(), 0.0, 1e-12);
      EXPECT_NEAR(y.item(n).row(c).array().square().mean(), 1.0, 1e-12);
    }
}

TEST(Autodiff, StructuralOpGradients) {
  std::mt19937_64 rng(7);
  auto up = [](Tape& t, const std::vector<Var>& v) { return probe(t, ad::upsample_nearest(v[0], 2)); };
  EXPECT_LT(max_gradient_error(up, {random_tensor({1, 2, 3, 3}, rng)}), kTol);

  auto cat = [](Tape& t, const std::vector<Var>& v) { return probe(t, ad::concat_channels(v[0], v[1])); };
  EXPECT_LT(max_gradient_error(cat, {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 1, 3, 3}, rng)}), kTol);

  auto bc = [](Tape& t, const std::vector<Var>& v) { return probe(t, ad::mul_channel_broadcast(v[0], v[1])); };
  EXPECT_LT(max_gradient_error(bc, {random_tensor({2, 3, 3, 3}, rng), random_tensor({2, 1, 3, 3}, rng)}), kTol);

  auto arith = [](Tape& t, const std::vector<Var>& v) { return probe(t, v[0] * v[1] + v[0]); };
  EXPECT_LT(max_gradient_error(arith, {random_tensor({1, 2, 2, 2}, rng), random_tensor({1, 2, 2, 2}, rng)}), kTol);
}

TEST(Autodiff, LossOpGradients) {
  std::mt19937_64 rng(8);
  auto l1 = [](Tape&, const std::vector<Var>& v) { return ad::l1_mean(v[0], v[1]); };
  EXPECT_LT(max_gradient_error(l1, {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng)}), kTol);

  auto logs = [](Tape&, const std::vector<Var>& v) {
    return ad::neg_mean_log(v[0], 1e-7) + ad::neg_mean_log1m(v[0], 1e-7);
  };
  EXPECT_LT(max_gradient_error(logs, {random_tensor({4, 1, 1, 1}, rng, 0.05, 0.95)}), kTol);
}

TEST(Autodiff, ClampedLogHasNoGradientOutsideRange) {
  Tape t;
  auto x = t.leaf(Tensor<double>({2, 1, 1, 1}, 0.0));
  auto l = ad::neg_mean_log(x, 1e-7);
  EXPECT_NEAR(l.item(), -std::log(1e-7), 1e-9);
  t.backward(l);
  EXPECT_EQ(t.gradient(x)[0], 0.0);
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
  Tape t;
  auto x = t.leaf(Tensor<double>({1, 1, 1, 1}, 3.0));
  auto y = x * x + x;  // dy/dx = 2x + 1
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.gradient(x)[0], 7.0);
}

TEST(Autodiff, ConstantsReceiveNoBackward) {
  Tape t;
  auto c = t.constant(Tensor<double>({1, 1, 2, 2}, 1.0));
  auto x = t.leaf(Tensor<double>({1, 1, 2, 2}, 2.0));
  auto y = ad::l1_mean(c, x);
  EXPECT_FALSE(c.requires_grad());
  EXPECT_TRUE(y.requires_grad());
  t.backward(y);
  EXPECT_TRUE((t.gradient(c).array() == 0.0).all());
  EXPECT_TRUE((t.gradient(x).array() == 0.25).all());
}

TEST(Autodiff, ShapeErrors) {
  Tape t;
  auto a = t.constant(Tensor<double>({1, 2, 3, 3}));
  auto b = t.constant(Tensor<double>({1, 2, 4, 4}));
  EXPECT_THROW(ad::add(a, b), std::invalid_argument);
  EXPECT_THROW(ad::conv2d(a, t.constant(Tensor<double>({1, 3, 3, 3})), std::optional<Var>{}, ad::ConvOptions{}), std::invalid_argument);
  EXPECT_THROW(ad::mul_channel_broadcast(a, t.constant(Tensor<double>({1, 2, 3, 3}))), std::invalid_argument);
  EXPECT_THROW(t.backward(a), std::invalid_argument);
}
