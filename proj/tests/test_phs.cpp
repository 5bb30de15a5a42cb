#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "sphnn/phs.hpp"
#include "sphnn/verify.hpp"

using namespace sphnn;

namespace {

// ℋ = ½‖x‖², J = [[0,-1],[1,0]], R = 0.1·I, G = I.
PhsModel hand_model() {
  ModelSpec s;
  s.kind = ModelKind::bphnn;
  s.n = 2;
  s.m = 2;
  s.beta = 0.5;
  s.g_mode = MatrixMode::constant;
  PhsModel model(s);
  auto& p = model.params();
  for (auto& v : p.segment("hamiltonian")) v = 0.0;
  p.segment("J")[0] = 1.0;
  auto r = p.segment("R");
  r[0] = ad::softplus_inverse(std::sqrt(0.1));
  r[1] = 0.0;
  r[2] = ad::softplus_inverse(std::sqrt(0.1));
  auto g = p.segment("G");
  g[0] = 1.0;
  g[1] = 0.0;
  g[2] = 0.0;
  g[3] = 1.0;
  return model;
}

std::vector<double> random_point(std::mt19937_64& rng, std::size_t n, double box = 2.0) {
  std::uniform_real_distribution<double> d(-box, box);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

}  // namespace

TEST(Phs, SkewFromVector) {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const Matrix j = skew_from_vec(v, 3);
  const Matrix want = Matrix::from_rows(3, 3, {0, -1, -2, 1, 0, -3, 2, 3, 0});
  EXPECT_TRUE(std::ranges::equal(j.data(), want.data()));
  EXPECT_EQ(skew_residual(j), 0.0);
}

TEST(Phs, SpdFromZeroVector) {
  const std::vector<double> v(6, 0.0);
  const Matrix r = spd_from_vec(v, 3, Definiteness::strict);
  const double d = std::log(2.0) * std::log(2.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r(i, k), i == k ? d : 0.0, 1e-15);
  EXPECT_NEAR(d, 0.480453, 1e-6);
  EXPECT_TRUE(cholesky(r).has_value());
}

TEST(Phs, HandModelRightHandSide) {
  const auto model = hand_model();
  const std::vector<double> x{1.0, 0.0}, zero{0.0, 0.0};
  const auto f = rhs(model, x, zero);
  EXPECT_NEAR(f[0], -0.1, 1e-14);
  EXPECT_NEAR(f[1], 1.0, 1e-14);
  EXPECT_NEAR(hamiltonian(model, x), 0.5, 1e-15);
  const std::vector<double> u{1.0, 0.0};
  EXPECT_NEAR(supply_rate(model, x, u), 1.0, 1e-14);
  const auto parts = decompose(model, x, u);
  EXPECT_NEAR(parts.conservative[1], 1.0, 1e-14);
  EXPECT_NEAR(parts.dissipative[0], -0.1, 1e-14);
  EXPECT_NEAR(parts.input[0], 1.0, 1e-14);
}

TEST(Phs, SphnnIsNormalizedAtEquilibrium) {
  for (auto kind : {ModelKind::sphnn, ModelKind::sphnn_lm}) {
    ModelSpec s;
    s.kind = kind;
    s.n = 3;
    s.seed = 4;
    s.xstar = kind == ModelKind::sphnn ? std::vector<double>{0.5, -0.2, 0.1} : std::vector<double>{};
    const PhsModel model(s);
    const auto xs = model.xstar();
    EXPECT_NEAR(hamiltonian(model, xs), 0.0, 1e-12);
    EXPECT_LE(max_abs(hamiltonian_gradient(model, xs)), 1e-10);
    EXPECT_GT(min_eigenvalue(hamiltonian_hessian(model, xs)), 0.0);
  }
}

TEST(Phs, LatentEquilibriumDrawnFromBox) {
  ModelSpec s;
  s.kind = ModelKind::sphnn_lm;
  s.n = 4;
  s.seed = 8;
  const PhsModel model(s);
  for (double v : model.xstar()) EXPECT_LE(std::abs(v), 1.0);
  EXPECT_TRUE(model.params().has_segment("xstar"));
}

TEST(Phs, StructuralIdentitiesOnRandomStates) {
  ModelSpec s;
  s.n = 3;
  s.m = 1;
  s.j_mode = MatrixMode::state_dependent;
  s.r_mode = MatrixMode::state_dependent;
  s.g_mode = MatrixMode::state_dependent;
  s.seed = 3;
  const PhsModel model(s);
  Evaluator ev(model);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const auto x = random_point(rng, 3);
    EXPECT_EQ(skew_residual(ev.structure_matrix(x)), 0.0);
    EXPECT_TRUE(cholesky(ev.dissipation_matrix(x)).has_value());
  }
}

TEST(Phs, EnergyBalanceHoldsPointwise) {
  ModelSpec s;
  s.n = 3;
  s.m = 2;
  s.j_mode = MatrixMode::state_dependent;
  s.r_mode = MatrixMode::state_dependent;
  s.g_mode = MatrixMode::state_dependent;
  s.epsilon = 0.01;
  s.seed = 12;
  const PhsModel model(s);
  Evaluator ev(model);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    const auto x = random_point(rng, 3);
    const auto u = random_point(rng, 2);
    ev.evaluate(x, u);
    const auto grad = ev.gradient();
    const double lhs = dot(grad, ev.rhs());
    const double want = -dot(grad, matvec(ev.dissipation_matrix(x), grad)) + ev.supply_rate();
    EXPECT_LE(std::abs(lhs - want), 1e-10);
  }
}

TEST(Phs, FixedSymplecticNeedsEvenDimension) {
  ModelSpec s;
  s.n = 3;
  s.j_mode = MatrixMode::fixed_symplectic;
  EXPECT_THROW(PhsModel{s}, ConfigError);
  s.n = 4;
  const PhsModel model(s);
  const std::vector<double> x(4, 0.3);
  Evaluator ev(model);
  const Matrix j = ev.structure_matrix(x);
  EXPECT_EQ(j(0, 2), -1.0);
  EXPECT_EQ(j(2, 0), 1.0);
  EXPECT_EQ(j(0, 1), 0.0);
}

TEST(Phs, InvalidSpecsAreConfigErrors) {
  ModelSpec s;
  s.g_mode = MatrixMode::constant;  // m = 0
  EXPECT_THROW(PhsModel{s}, ConfigError);
  s = {};
  s.r_mode = MatrixMode::fixed_symplectic;
  EXPECT_THROW(PhsModel{s}, ConfigError);
  s = {};
  s.n = 0;
  EXPECT_THROW(PhsModel{s}, ConfigError);
  s = {};
  s.xstar = {1.0};
  EXPECT_THROW(PhsModel{s}, ConfigError);
}

TEST(Phs, NodeIsPlainNetworkOfStateAndInput) {
  ModelSpec s;
  s.kind = ModelKind::node;
  s.n = 2;
  s.m = 1;
  s.hidden = {16, 16};
  const PhsModel model(s);
  const std::size_t want = (3 * 16 + 16) + (16 * 16 + 16) + (16 * 2 + 2);
  EXPECT_EQ(model.params().segment("dynamics").size(), want);
  const std::vector<double> x{0.1, 0.2}, u{0.3};
  EXPECT_EQ(rhs(model, x, u).size(), 2u);
  EXPECT_THROW(hamiltonian(model, x), UnsupportedError);
  EXPECT_THROW(decompose(model, x, u), UnsupportedError);
}

TEST(Phs, SameSeedSameParameters) {
  ModelSpec s;
  s.n = 3;
  s.seed = 21;
  const PhsModel a(s), b(s);
  EXPECT_TRUE(std::equal(a.params().values().begin(), a.params().values().end(), b.params().values().begin()));
  s.seed = 22;
  const PhsModel c(s);
  EXPECT_FALSE(std::equal(a.params().values().begin(), a.params().values().end(), c.params().values().begin()));
}
