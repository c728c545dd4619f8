#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cafe/errors.hpp"
#include "cafe/optimizer.hpp"
#include "cafe/random.hpp"

namespace cafe {
namespace {

// Textbook Adam written out per coordinate.
struct ScalarAdam {
  double lr, b1, b2, eps, wd;
  bool decay;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double p, double g, double lr_now) {
    if (decay) g += wd * p;
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return p - lr_now * mh / (std::sqrt(vh) + eps);
  }
};

TEST(Adam, MatchesScalarOracle) {
  AdamConfig cfg;
  Adam adam(cfg, {true, false, true});
  std::vector<double> p{0.5, -0.25, 2.0};
  std::vector<ScalarAdam> ref;
  for (bool d : {true, false, true}) ref.push_back({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, d});
  std::vector<double> q = p;
  Rng rng(3);
  for (int s = 0; s < 50; ++s) {
    const std::size_t epoch = static_cast<std::size_t>(s / 10);
    std::vector<double> g(3);
    for (double& v : g) v = rng.normal();
    adam.step(p, g, epoch);
    for (std::size_t i = 0; i < 3; ++i) q[i] = ref[i].step(q[i], g[i], cfg.lr * std::pow(cfg.gamma, epoch));
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
  EXPECT_EQ(adam.step_count(), 50u);
}

TEST(Adam, FirstStepMovesByTheLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps) per coordinate.
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam adam(cfg, std::vector<bool>(4, true));
  std::vector<double> p(4, 1.0);
  const std::vector<double> g{3.0, -0.5, 1e-3, 100.0};
  adam.step(p, g, 0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(1.0 - p[i], cfg.lr * std::copysign(1.0, g[i]), cfg.lr * 1e-4);
  }
}

TEST(Adam, BiasesAreNotDecayed) {
  AdamConfig cfg;
  cfg.weight_decay = 0.5;
  Adam adam(cfg, {true, false});
  std::vector<double> p{1.0, 1.0};
  adam.step(p, std::vector<double>{0.0, 0.0}, 0);
  EXPECT_LT(p[0], 1.0);
  EXPECT_EQ(p[1], 1.0);
}

TEST(Adam, NonFiniteGradientLeavesParametersUntouched) {
  Adam adam(AdamConfig{}, {true, true});
  std::vector<double> p{1.0, 2.0};
  EXPECT_THROW(adam.step(p, std::vector<double>{0.1, std::numeric_limits<double>::quiet_NaN()}, 0),
               TrainingDiverged);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 2.0);
  EXPECT_EQ(adam.step_count(), 0u);
}

TEST(Adam, ExponentialSchedule) {
  AdamConfig cfg;
  EXPECT_EQ(lr_at(cfg, 0), 2e-4);
  EXPECT_NEAR(lr_at(cfg, 3), 2e-4 * 0.729, 1e-18);
}

TEST(Adam, InvalidConfigThrows) {
  AdamConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = AdamConfig{};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  Adam adam(AdamConfig{}, {true, true});
  std::vector<double> two(2, 0.0);
  EXPECT_THROW(adam.step(two, std::vector<double>{1.0}, 0), ArgumentError);
}

TEST(GradCheck, HalfSquareAtThree) {
  const LossFn f = [](std::span<const double> p) { return 0.5L * p[0] * p[0]; };
  const std::vector<double> p{3.0};
  const auto r = grad_check(f, p, std::vector<double>{3.0});
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_NEAR(r.numeric, 3.0, 1e-9);
}

TEST(GradCheck, FlagsAWrongGradient) {
  const LossFn f = [](std::span<const double> p) { return static_cast<long double>(std::sin(p[0])) + p[1]; };
  const std::vector<double> p{0.3, 1.0};
  const auto r = grad_check(f, p, std::vector<double>{std::cos(0.3), 1.1});
  EXPECT_EQ(r.worst_index, 1u);
  EXPECT_NEAR(r.max_rel_error, 0.1 / 1.1, 1e-6);
}

TEST(GradCheck, ZeroGradientsUseTheAbsoluteFloor) {
  const LossFn f = [](std::span<const double>) { return 1.0L; };
  const auto r = grad_check(f, std::vector<double>{1.0}, std::vector<double>{0.0});
  EXPECT_EQ(r.max_rel_error, 0.0);
}

}  // namespace
}  // namespace cafe
