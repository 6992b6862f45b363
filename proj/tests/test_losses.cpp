#include "damgan/losses.hpp"

#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace damgan;
using namespace damgan::loss;
using damgan::testing::random_tensor;

namespace {

constexpr double kEps = 1e-7;

Tensor<double> unit_random(const Shape& s, std::mt19937_64& rng) { return random_tensor(s, rng, 0.0, 1.0); }

double l1_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  double sum = 0;
  for (Index i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / double(a.size());
}

// Per-pixel luma of |final - x_hat|, block-averaged by 2^j, compared to pred_j.
double dam_oracle(const FakenessTargets<double>& pred, const Tensor<double>& x_hat, const Tensor<double>& final) {
  const Shape s = x_hat.shape();
  double total = 0;
  for (int j = 0; j < 4; ++j) {
    const Index f = Index{1} << j, h = s.h / f, w = s.w / f;
    double sum = 0;
    for (Index n = 0; n < s.n; ++n)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          double t = 0;
          for (Index dy = 0; dy < f; ++dy)
            for (Index dx = 0; dx < f; ++dx) {
              const Index yy = y * f + dy, xx = x * f + dx;
              t += 0.299 * std::abs(final(n, 0, yy, xx) - x_hat(n, 0, yy, xx)) +
                   0.587 * std::abs(final(n, 1, yy, xx) - x_hat(n, 1, yy, xx)) +
                   0.114 * std::abs(final(n, 2, yy, xx) - x_hat(n, 2, yy, xx));
            }
          sum += std::abs(pred[std::size_t(j)](n, 0, y, x) - t / double(f * f));
        }
    total += sum / double(s.n * h * w);
  }
  return total;
}

model::ModelConfig micro() {
  model::ModelConfig c;
  c.resolution = 16;
  c.base_width = 4;
  c.disc_base_width = 8;
  return c;
}

}  // namespace

TEST(ReconstructionLoss, Examples) {
  Tensor<double> x({1, 3, 4, 4}, 1.0);
  EXPECT_EQ(reconstruction_loss(x, x, x), 0.0);
  EXPECT_DOUBLE_EQ(reconstruction_loss(x, Tensor<double>({1, 3, 4, 4}, 0.5), x), 0.5);
  EXPECT_THROW(reconstruction_loss(x, Tensor<double>({1, 3, 2, 2}), x), std::invalid_argument);
}

TEST(ReconstructionLoss, MatchesScalarLoopAndIsSymmetric) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = unit_random({2, 3, 4, 4}, rng), c = unit_random({2, 3, 4, 4}, rng), f = unit_random({2, 3, 4, 4}, rng);
    EXPECT_NEAR(reconstruction_loss(x, c, f), l1_oracle(x, c) + l1_oracle(x, f), 1e-12);
    EXPECT_NEAR(reconstruction_loss(c, x, x), reconstruction_loss(x, c, c), 1e-12);
    const auto xf = x.cast<float>(), cf = c.cast<float>(), ff = f.cast<float>();
    EXPECT_NEAR(reconstruction_loss(xf, cf, ff), l1_oracle(x, c) + l1_oracle(x, f), 1e-6);
  }
}

TEST(AdversarialLoss, DiscriminatorExamples) {
  const std::vector<double> ones(3, 1 - kEps), zeros(3, kEps), half(3, 0.5);
  EXPECT_NEAR(adversarial_loss_d<double>(ones, zeros), 0.0, 1e-6);
  EXPECT_NEAR(adversarial_loss_d<double>(half, half), 2 * std::log(2.0), 1e-12);
  const std::vector<double> real{0.5, 1 - kEps}, fake{0.5, kEps};
  EXPECT_NEAR(adversarial_loss_d<double>(real, fake), std::log(2.0), 1e-6);
}

TEST(AdversarialLoss, GeneratorExamples) {
  EXPECT_NEAR(adversarial_loss_g<double>(std::vector<double>(2, 1 - kEps)), 0.0, 1e-6);
  EXPECT_NEAR(adversarial_loss_g<double>(std::vector<double>(2, 0.5)), 0.6931471805599453, 1e-12);
  EXPECT_NEAR(adversarial_loss_g<double>(std::vector<double>(2, kEps)), 16.11809565095832, 1e-6);
  // Scores beyond the clamp behave like the clamp.
  EXPECT_NEAR(adversarial_loss_g<double>(std::vector<double>(2, 0.0)), 16.11809565095832, 1e-6);
}

TEST(GroundTruthFakeness, Examples) {
  Tensor<double> a({1, 3, 4, 4}, 1.0), z({1, 3, 4, 4}, 0.0);
  EXPECT_TRUE((ground_truth_fakeness(a, a).array() == 0.0).all());
  EXPECT_TRUE(((ground_truth_fakeness(a, z).array() - 1.0).abs() < 1e-15).all());
  Tensor<double> b = z;
  b(0, 0, 2, 1) = 0.5;
  const auto m = ground_truth_fakeness(z, b);
  EXPECT_EQ(m.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_NEAR(m(0, 0, 2, 1), 0.1495, 1e-15);
  EXPECT_EQ(m(0, 0, 1, 2), 0.0);
  EXPECT_THROW(ground_truth_fakeness(a, Tensor<double>({1, 3, 2, 2})), std::invalid_argument);
}

TEST(GroundTruthFakeness, RangeAndZeroIffIdentical) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = unit_random({2, 3, 8, 8}, rng), f = unit_random({2, 3, 8, 8}, rng);
    for (const auto& t : fakeness_targets(x, f)) {
      EXPECT_GE(t.array().minCoeff(), 0.0);
      EXPECT_LE(t.array().maxCoeff(), 1.0);
      EXPECT_GT(t.array().minCoeff(), 0.0);
    }
    for (const auto& t : fakeness_targets(x, x)) EXPECT_TRUE((t.array() == 0.0).all());
  }
}

TEST(FakenessTargets, SidesHalvePerScale) {
  const auto t = fakeness_targets(Tensor<double>({2, 3, 16, 16}), Tensor<double>({2, 3, 16, 16}, 1.0));
  for (int j = 0; j < 4; ++j) EXPECT_EQ(t[std::size_t(j)].shape(), (Shape{2, 1, 16 >> j, 16 >> j}));
}

TEST(DamLoss, Examples) {
  std::mt19937_64 rng(3);
  const auto x = unit_random({1, 3, 8, 8}, rng);
  Tensor<double> f = x;
  f.array() = (x.array() * 0.5 + 0.1).min(1.0);
  const auto targets = fakeness_targets(x, f);
  EXPECT_NEAR(dam_loss(targets, x, f), 0.0, 1e-15);
  auto shifted = targets;
  for (auto& t : shifted) t.array() += 0.1;
  EXPECT_NEAR(dam_loss(shifted, x, f), 0.4, 1e-12);
}

TEST(DamLoss, MatchesScalarLoopOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = unit_random({2, 3, 8, 8}, rng), f = unit_random({2, 3, 8, 8}, rng);
    FakenessTargets<double> pred;
    for (int j = 0; j < 4; ++j) pred[std::size_t(j)] = unit_random({2, 1, 8 >> j, 8 >> j}, rng);
    EXPECT_NEAR(dam_loss(pred, x, f), dam_oracle(pred, x, f), 1e-12);

    FakenessTargets<float> pf;
    for (int j = 0; j < 4; ++j) pf[std::size_t(j)] = pred[std::size_t(j)].cast<float>();
    EXPECT_NEAR(dam_loss(pf, x.cast<float>(), f.cast<float>()), dam_oracle(pred, x, f), 1e-6);
  }
}

TEST(DamLoss, WrongScaleShapeThrows) {
  FakenessTargets<double> pred;
  for (auto& p : pred) p = Tensor<double>({1, 1, 8, 8});
  EXPECT_THROW(dam_loss(pred, Tensor<double>({1, 3, 8, 8}), Tensor<double>({1, 3, 8, 8})), std::invalid_argument);
}

TEST(TotalLoss, WeightsAndLinearity) {
  const LossWeights w;
  EXPECT_EQ(total_loss(0, 0, 0, w), 0.0);
  EXPECT_NEAR(total_loss(1, 1, 1, w), 1.006, 1e-12);
  const LossWeights w2{2 * w.re, 2 * w.adv, 2 * w.dam};
  EXPECT_NEAR(total_loss(0.3, 2.0, 0.7, w2), 2 * total_loss(0.3, 2.0, 0.7, w), 1e-12);
  EXPECT_THROW((LossWeights{1, -0.1, 0}.validate()), std::invalid_argument);
}

TEST(GeneratorObjective, TotalIsWeightedSumOfParts) {
  const auto cfg = micro();
  const auto g = model::build_generator<double>(cfg, 1);
  const auto d = model::build_discriminator<double>(cfg, 2);
  std::mt19937_64 rng(5);
  const auto x_hat = unit_random({2, 3, 16, 16}, rng);
  auto input = unit_random({2, 4, 16, 16}, rng);
  ad::Tape<double> tape;
  model::Bound<double> gb(tape, g, true), db(tape, d, false);
  const auto graph = model::generator_forward(cfg, gb, input);
  const auto scores = model::discriminator_forward(cfg, db, graph.final);
  const LossWeights w;
  const auto obj = generator_objective(graph, x_hat, scores, w);
  EXPECT_NEAR(obj.total.item(), total_loss(obj.l_re.item(), obj.l_adv_g.item(), obj.l_dam.item(), w), 1e-12);
  EXPECT_NEAR(obj.l_re.item(), reconstruction_loss(x_hat, graph.coarse.value(), graph.final.value()), 1e-12);
  EXPECT_GE(obj.l_adv_g.item(), 0.0);
  EXPECT_GE(obj.l_dam.item(), 0.0);
}

// d(total generator loss)/d(generator params) against central differences,
// with the fakeness targets held at their unperturbed values.
TEST(GeneratorObjective, GradientMatchesFiniteDifferences) {
  const auto cfg = micro();
  auto g = model::build_generator<double>(cfg, 21);
  const auto d = model::build_discriminator<double>(cfg, 22);
  std::mt19937_64 rng(23);
  const auto x_hat = unit_random({2, 3, 16, 16}, rng);
  const auto input = unit_random({2, 4, 16, 16}, rng);
  const LossWeights w{1.0, 0.5, 0.5};

  auto objective = [&](bool trainable, const FakenessTargets<double>* frozen) {
    auto tape = std::make_unique<ad::Tape<double>>();
    auto gb = std::make_unique<model::Bound<double>>(*tape, g, trainable);
    model::Bound<double> db(*tape, d, false);
    const auto graph = model::generator_forward(cfg, *gb, input);
    auto obj = generator_objective(graph, x_hat, model::discriminator_forward(cfg, db, graph.final), w, frozen);
    return std::tuple(std::move(tape), std::move(gb), std::move(obj));
  };

  auto [tape, bound, obj] = objective(true, nullptr);
  tape->backward(obj.total);
  const auto grads = bound->gradients();
  const auto frozen = obj.targets;

  std::vector<std::string> names;
  for (const auto& [n, t] : g) names.push_back(n);
  std::mt19937_64 pick(24);
  const double h = 1e-6;
  double worst = 0;
  for (int k = 0; k < 30; ++k) {
    const auto& name = names[pick() % names.size()];
    auto& t = g.at(name);
    const Index i = Index(pick() % std::uint64_t(t.size()));
    const double orig = t[i];
    t[i] = orig + h;
    const double up = std::get<2>(objective(false, &frozen)).total.item();
    t[i] = orig - h;
    const double down = std::get<2>(objective(false, &frozen)).total.item();
    t[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double err = damgan::testing::relative_error(grads.at(name)[i], numeric, 1e-6);
    worst = std::max(worst, err);
    EXPECT_LE(err, 1e-4) << name << "[" << i << "] analytic " << grads.at(name)[i] << " numeric " << numeric;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}
