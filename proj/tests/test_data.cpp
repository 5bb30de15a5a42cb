#include <gtest/gtest.h>

#include <sstream>

#include "sphnn/data.hpp"

using namespace sphnn;

namespace {
const std::array<double, 3> inertia{1.0, 2.0, 3.0};
}

TEST(Data, EulerEquations) {
  const std::vector<double> w{0.0, 1.0, 1.0};
  const auto d = euler_rhs(w, inertia, 0.0);
  EXPECT_DOUBLE_EQ(d[0], -1.0);
  EXPECT_DOUBLE_EQ(d[1], 0.0);
  EXPECT_DOUBLE_EQ(d[2], 0.0);
  const std::vector<double> e1{1.0, 0.0, 0.0};
  const auto damped = euler_rhs(e1, inertia, 0.01);
  EXPECT_DOUBLE_EQ(damped[0], -0.01);
  EXPECT_DOUBLE_EQ(damped[1], 0.0);
  EXPECT_DOUBLE_EQ(damped[2], 0.0);
  const std::vector<double> ones{1.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(rigid_energy(ones, inertia), 3.0);
}

TEST(Data, SpinningBodyDataset) {
  SpinningBodyConfig cfg;
  cfg.duration = 5.0;
  const auto data = gen_spinning_body(cfg);
  ASSERT_EQ(data.trajectories.size(), 10u);
  EXPECT_EQ(data.trajectories[0].size(), 51u);
  EXPECT_EQ(data.pairs.size(), 510u);
  for (const auto& tr : data.trajectories)
    for (double v : tr.states[0]) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  // damped: energy never increases along a trajectory
  for (const auto& tr : data.trajectories)
    for (std::size_t k = 1; k < tr.size(); ++k)
      EXPECT_LE(rigid_energy(tr.states[k], inertia), rigid_energy(tr.states[k - 1], inertia) + 1e-12);
  const auto again = gen_spinning_body(cfg);
  EXPECT_EQ(again.trajectories, data.trajectories);
  cfg.mu = -1.0;
  EXPECT_THROW(gen_spinning_body(cfg), ConfigError);
}

TEST(Data, CsvRoundTrip) {
  Trajectory tr;
  tr.times = {0.0, 0.1, 0.2};
  tr.states = {{1.0, 1.0 / 3.0}, {2.5e-17, -4.0}, {1e300, 0.0}};
  tr.inputs = {{0.5}, {-0.5}, {0.125}};
  tr.state_names = {"x1", "x2"};
  tr.input_names = {"u1"};
  std::stringstream ss;
  write_csv(ss, tr);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "t,x1,x2,u1");
  const auto back = read_csv(ss);
  EXPECT_EQ(back, tr);
}

TEST(Data, CsvErrorsCarryLineNumbers) {
  auto fails_with = [](const std::string& text, const std::string& fragment) {
    std::stringstream ss(text);
    try {
      read_csv(ss, "f.csv");
    } catch (const DataError& e) {
      return std::string(e.what()).find(fragment) != std::string::npos;
    }
    return false;
  };
  EXPECT_TRUE(fails_with("", "f.csv:1"));
  EXPECT_TRUE(fails_with("x,y\n", "f.csv:1"));
  EXPECT_TRUE(fails_with("t,x1\n0,1\n0.1,abc\n", "f.csv:3"));
  EXPECT_TRUE(fails_with("t,x1\n0,1\n0,2\n", "f.csv:3"));
  EXPECT_TRUE(fails_with("t,x1\n0,1,2\n", "f.csv:2"));
  EXPECT_TRUE(fails_with("t,x1\n0,nan\n", "f.csv:2"));
  EXPECT_TRUE(fails_with("t,u1,x1\n0,1,2\n", "f.csv:1"));
  EXPECT_THROW(load_csv("/nonexistent/dir/file.csv"), DataError);
}

TEST(Data, NormalizerGivesUnitVariance) {
  Trajectory tr;
  for (int k = 0; k < 200; ++k) {
    tr.times.push_back(0.1 * k);
    tr.states.push_back({3.0 + 2.0 * std::sin(0.1 * k), -1.0 + 0.5 * std::cos(0.37 * k)});
  }
  const std::vector<double> eq{3.0, -1.0};
  const auto nz = fit_normalizer({tr}, eq);
  const auto scaled = nz.apply(tr);
  const auto sd = channel_std({scaled});
  EXPECT_NEAR(sd[0], 1.0, 1e-12);
  EXPECT_NEAR(sd[1], 1.0, 1e-12);
  const auto eq_scaled = nz.apply_state(eq);
  EXPECT_EQ(eq_scaled[0], 0.0);
  EXPECT_EQ(eq_scaled[1], 0.0);
  const auto back = nz.invert(scaled);
  for (std::size_t k = 0; k < tr.size(); ++k)
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(back.states[k][i], tr.states[k][i], 1e-12);
}

TEST(Data, NoiseMatchesRequestedLevel) {
  Trajectory tr;
  for (int k = 0; k < 20000; ++k) {
    tr.times.push_back(k);
    tr.states.push_back({std::sin(0.01 * k)});
    tr.inputs.push_back({k % 2 == 0 ? 1.0 : -1.0});
  }
  const auto noisy = add_noise(tr, 25.0, 3);
  const auto sd = channel_std({tr});
  double mean = 0.0, var = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double e = noisy.states[k][0] - tr.states[k][0];
    mean += e;
    var += e * e;
  }
  mean /= tr.size();
  var /= tr.size();
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(var), 0.25 * sd[0], 0.01 * sd[0]);
  EXPECT_NE(noisy.inputs[0][0], tr.inputs[0][0]);
  EXPECT_EQ(add_noise(tr, 25.0, 3), noisy);
  EXPECT_EQ(add_noise(tr, 0.0, 3), tr);
  EXPECT_THROW(add_noise(tr, -1.0, 3), ConfigError);
}

TEST(Data, SquareWaveAndGrid) {
  const auto t = uniform_grid(1.0, 0.1);
  ASSERT_EQ(t.size(), 11u);
  EXPECT_DOUBLE_EQ(t.back(), 1.0);
  const auto u = square_wave(t, 0.4, 2.0);
  EXPECT_EQ(u.mode(), Interpolation::zero_order_hold);
  EXPECT_DOUBLE_EQ(u(0.0)[0], 2.0);
  EXPECT_DOUBLE_EQ(u(0.25)[0], -2.0);
}
