#include <gtest/gtest.h>

#include <numeric>

#include "sphnn/data.hpp"
#include "sphnn/train.hpp"

using namespace sphnn;

namespace {

double mean_of(const std::vector<double>& v, std::size_t first, std::size_t count) {
  return std::accumulate(v.begin() + first, v.begin() + first + count, 0.0) / static_cast<double>(count);
}

std::vector<Trajectory> forced_linear_data(std::size_t count, double duration) {
  const auto f = linear_field(Matrix::from_rows(2, 2, {-0.1, -1.0, 1.0, -0.1}), Matrix::from_rows(2, 1, {0.0, 1.0}));
  const auto times = uniform_grid(duration, 0.1);
  std::vector<Trajectory> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::vector<double> x0{0.5 - 0.3 * k, 0.2 + 0.1 * k};
    out.push_back(simulate(f, x0, times, square_wave(times, 2.0 + k, 0.5)));
  }
  return out;
}

}  // namespace

TEST(Train, MeanSquaredError) {
  const Matrix p = Matrix::from_rows(2, 2, {1, 2, 3, 4});
  const Matrix t = Matrix::from_rows(2, 2, {1, 0, 3, 0});
  EXPECT_DOUBLE_EQ(mse(p, t), (4.0 + 16.0) / 4.0);
  const std::vector<std::size_t> first{0};
  EXPECT_DOUBLE_EQ(mse(p, t, first), 0.0);
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(mse(p, t, bad), StructuralError);
}

TEST(Train, AdamFirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.3, -40.0};
  AdamState st;
  adam_step(p, g, st, 1e-3);
  EXPECT_NEAR(p[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(p[1], -2.0 + 1e-3, 1e-10);
}

TEST(Train, ZeroStepsLeavesParametersUnchanged) {
  ModelSpec s;
  PhsModel model(s);
  const std::vector<double> before(model.params().values().begin(), model.params().values().end());
  TrainConfig cfg;
  cfg.steps = 0;
  const auto hist = fit_derivative(model, {}, cfg);
  EXPECT_TRUE(hist.loss.empty());
  EXPECT_EQ(hist.final_params, before);
  cfg.regime = Regime::trajectory;
  fit_trajectory(model, {}, cfg);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), model.params().values().begin()));
}

TEST(Train, DerivativeFittingReducesLoss) {
  const auto f = linear_field(Matrix::from_rows(2, 2, {-0.1, -1.0, 1.0, -0.1}), Matrix(2, 0));
  const auto times = uniform_grid(20.0, 0.1);
  std::vector<DerivativePair> pairs;
  for (const auto& x0 : {std::vector<double>{1.0, 0.0}, std::vector<double>{-0.5, 0.8}}) {
    const auto p = derivative_pairs(f, simulate(f, x0, times));
    pairs.insert(pairs.end(), p.begin(), p.end());
  }
  ModelSpec s;
  s.seed = 1;
  PhsModel model(s);
  TrainConfig cfg;
  cfg.steps = 5000;
  cfg.learning_rate = 1e-2;
  cfg.seed = 1;
  const auto hist = fit_derivative(model, pairs, cfg);
  ASSERT_EQ(hist.loss.size(), 5000u);
  EXPECT_LE(mean_of(hist.loss, 4900, 100), 0.05 * mean_of(hist.loss, 0, 10));
}

TEST(Train, DerivativeRegimeRejectsAugmentedStates) {
  ModelSpec s;
  PhsModel model(s);
  TrainConfig cfg;
  cfg.augmented_dims = 1;
  EXPECT_THROW(fit_derivative(model, {}, cfg), ConfigError);
  cfg.augmented_dims = 0;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(fit_derivative(model, {}, cfg), ConfigError);
}

TEST(Train, RolloutGradientMatchesFiniteDifferences) {
  const auto data = forced_linear_data(1, 1.0);
  ModelSpec s;
  s.n = 3;
  s.m = 1;
  s.hidden = {8};
  s.g_mode = MatrixMode::constant;
  s.j_mode = MatrixMode::state_dependent;
  s.seed = 6;
  PhsModel model(s);
  const std::vector<std::size_t> observed{0, 1};
  RolloutLoss loss(model, data[0], observed, 2, 1.0, Interpolation::zero_order_hold);
  std::vector<double> grad(model.params().size(), 0.0);
  loss.evaluate(grad);
  auto p = model.params().values();
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = loss.evaluate({});
    p[i] = keep - h;
    const double down = loss.evaluate({});
    p[i] = keep;
    const double fd = (up - down) / (2 * h);
    EXPECT_LE(std::abs(grad[i] - fd) / std::max({1.0, std::abs(grad[i]), std::abs(fd)}), 1e-4) << "param " << i;
  }
}

TEST(Train, RolloutWindowsShareEndpoints) {
  const auto data = forced_linear_data(1, 1.0);  // 11 samples
  const auto w = rollout_windows(data, 4);
  ASSERT_EQ(w.size(), 4u);  // 0-3, 3-6, 6-9, 9-10
  EXPECT_EQ(w[0].times.back(), w[1].times.front());
  EXPECT_EQ(w.back().size(), 2u);
  EXPECT_THROW(rollout_windows(data, 1), ConfigError);
}

TEST(Train, TrajectoryFittingWithAugmentedStateReducesLoss) {
  const auto data = forced_linear_data(2, 4.0);
  ModelSpec s;
  s.n = 3;
  s.m = 1;
  s.g_mode = MatrixMode::constant;
  s.hidden = {8, 8};
  s.seed = 2;
  PhsModel model(s);
  TrainConfig cfg;
  cfg.regime = Regime::trajectory;
  cfg.steps = 200;
  cfg.learning_rate = 1e-2;
  cfg.augmented_dims = 1;
  cfg.interpolation = Interpolation::zero_order_hold;
  std::size_t calls = 0;
  cfg.on_step = [&](std::size_t, double) { ++calls; };
  const auto hist = fit_trajectory(model, data, cfg);
  EXPECT_EQ(calls, 200u);
  EXPECT_LT(hist.loss.back(), 0.5 * hist.loss.front());
}

TEST(Train, TrajectoryRegimeValidatesDimensions) {
  const auto data = forced_linear_data(1, 1.0);
  ModelSpec s;
  s.n = 2;
  s.m = 1;
  s.g_mode = MatrixMode::constant;
  PhsModel model(s);
  TrainConfig cfg;
  cfg.regime = Regime::trajectory;
  cfg.steps = 1;
  cfg.augmented_dims = 2;
  EXPECT_THROW(fit_trajectory(model, data, cfg), ConfigError);
  cfg.augmented_dims = 1;  // data has 2 states, model observes 1
  EXPECT_THROW(fit_trajectory(model, data, cfg), Error);
}
