#include <gtest/gtest.h>

#include "sphnn/data.hpp"
#include "sphnn/verify.hpp"

using namespace sphnn;

namespace {

// ℋ = sp(x) + sp(-x) - sp(y) - sp(-y): zero with zero gradient at the
// origin, but a saddle.
PhsModel saddle_model() {
  ModelSpec s;
  s.kind = ModelKind::phnn;
  s.n = 2;
  s.hidden = {4};
  PhsModel model(s);
  const std::vector<double> w{1, 0, -1, 0, 0, 1, 0, -1, 0, 0, 0, 0, 1, 1, -1, -1, 0};
  auto seg = model.params().segment("hamiltonian");
  EXPECT_EQ(seg.size(), w.size());
  std::copy(w.begin(), w.end(), seg.begin());
  return model;
}

}  // namespace

TEST(Verify, FreshSphnnIsGloballyAsymptoticallyStable) {
  ModelSpec s;
  s.n = 3;
  s.j_mode = MatrixMode::state_dependent;
  s.seed = 5;
  const PhsModel model(s);
  const auto rep = verify_stability(model, 500, 1);
  EXPECT_EQ(rep.verdict, Verdict::certified_global_asymptotic);
  EXPECT_TRUE(rep.normalized);
  EXPECT_EQ(rep.skewness_residual, 0.0);
  EXPECT_EQ(rep.convexity_violations, 0u);
  EXPECT_STREQ(to_string(rep.verdict), "certified_global_asymptotic");
}

TEST(Verify, SemidefiniteDissipationIsOnlyBounded) {
  ModelSpec s;
  s.r_definiteness = Definiteness::semi;
  s.epsilon = 0.1;
  s.seed = 2;
  const PhsModel model(s);
  EXPECT_EQ(verify_stability(model, 200, 0).verdict, Verdict::certified_stable_bounded);
}

TEST(Verify, NodeIsUnsupported) {
  ModelSpec s;
  s.kind = ModelKind::node;
  const PhsModel model(s);
  EXPECT_THROW(verify_stability(model), UnsupportedError);
}

TEST(Verify, SaddleHamiltonianIsNotCertified) {
  const auto model = saddle_model();
  const auto rep = verify_stability(model, 200, 0);
  EXPECT_TRUE(rep.normalized);
  EXPECT_FALSE(rep.hessian_pd_at_xstar);
  EXPECT_NEAR(rep.hessian_min_eigenvalue, -0.5, 1e-6);
  EXPECT_GT(rep.convexity_violations, 0u);
  EXPECT_EQ(rep.verdict, Verdict::not_certified);
}

TEST(Verify, MoreSamplesCanOnlyRevoke) {
  const auto model = saddle_model();
  const auto few = verify_stability(model, 50, 3);
  const auto many = verify_stability(model, 500, 3);
  EXPECT_GE(many.convexity_violations, few.convexity_violations);
}

TEST(Verify, EnergyAuditOnModelTrajectory) {
  ModelSpec s;
  s.n = 2;
  s.m = 1;
  s.g_mode = MatrixMode::constant;
  s.seed = 7;
  const PhsModel model(s);
  const auto times = uniform_grid(10.0, 0.1);
  const std::vector<double> x0{1.0, -1.0};
  const auto free = integrate(model_field(model), x0, times, {}, reference_tolerances());
  const auto audit = energy_audit(model, free);
  EXPECT_TRUE(audit.unforced);
  EXPECT_LE(audit.max_residual, 1e-10);
  EXPECT_EQ(audit.increase_violations, 0u);
  EXPECT_EQ(audit.energy.size(), times.size());

  const auto u = square_wave(times, 2.0, 1.0);
  const auto forced = integrate(model_field(model), x0, times, u, reference_tolerances());
  const auto fa = energy_audit(model, forced, u);
  EXPECT_FALSE(fa.unforced);
  EXPECT_LE(fa.max_residual, 1e-10);
}

TEST(Verify, BoundednessProbe) {
  ModelSpec s;
  s.n = 2;
  s.seed = 1;
  const PhsModel model(s);
  ProbeConfig cfg;
  cfg.horizon = 20.0;
  cfg.directions = 4;
  const auto res = boundedness_probe(model, cfg);
  EXPECT_TRUE(res.passed);
  EXPECT_EQ(res.runs, 4u);
  EXPECT_LE(res.max_distance, 1e3);
  EXPECT_EQ(res.increase_violations, 0u);
}

TEST(Verify, RmseAndAlignment) {
  Trajectory a, b;
  a.times = b.times = {0.0, 1.0};
  a.states = {{0.0, 0.0}, {0.0, 0.0}};
  b.states = {{1.0, 0.0}, {1.0, 2.0}};
  EXPECT_DOUBLE_EQ(rmse(a, b), std::sqrt(6.0 / 4.0));
  EXPECT_DOUBLE_EQ(rmse(a, b, {0}), 1.0);
  Trajectory c = b;
  c.times = {0.0, 2.0};
  EXPECT_THROW(rmse(a, c), DataError);
}
