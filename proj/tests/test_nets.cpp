#include <gtest/gtest.h>

#include <random>

#include "sphnn/nets.hpp"

using namespace sphnn;

TEST(Nets, FfnnWithoutHiddenLayersIsAffine) {
  ParamVector pv;
  Ffnn net({2, {}, 2, Activation::softplus}, pv, "net");
  ASSERT_EQ(pv.size(), 6u);
  // W = [[1,2],[3,4]], b = [0.5,-1]
  const std::vector<double> v{1, 2, 3, 4, 0.5, -1};
  pv.assign(v);
  const std::vector<double> x{1.0, -1.0};
  const auto y = ffnn_forward(net, pv, x);
  EXPECT_DOUBLE_EQ(y[0], -1.0 + 0.5);
  EXPECT_DOUBLE_EQ(y[1], -1.0 - 1.0);
}

TEST(Nets, GlorotInitIsBoundedAndDeterministic) {
  ParamVector a, b;
  Ffnn na({3, {16, 16}, 2, Activation::softplus}, a, "net");
  Ffnn nb({3, {16, 16}, 2, Activation::softplus}, b, "net");
  std::mt19937_64 ra(5), rb(5);
  na.init_glorot(a, ra);
  nb.init_glorot(b, rb);
  EXPECT_EQ(std::vector<double>(a.values().begin(), a.values().end()),
            std::vector<double>(b.values().begin(), b.values().end()));
  for (const auto& l : na.layers()) {
    const double bound = glorot_bound(l.in, l.out);
    for (std::size_t k = 0; k < l.in * l.out; ++k) EXPECT_LE(std::abs(a[l.weights + k]), bound);
    for (std::size_t k = 0; k < l.out; ++k) EXPECT_EQ(a[l.biases + k], 0.0);
  }
  EXPECT_DOUBLE_EQ(glorot_bound(3, 16), std::sqrt(6.0 / 19.0));
}

TEST(Nets, InvalidWidthsAreConfigErrors) {
  ParamVector pv;
  EXPECT_THROW(Ffnn({0, {4}, 1, Activation::softplus}, pv, "a"), ConfigError);
  EXPECT_THROW(Ffnn({2, {0}, 1, Activation::softplus}, pv, "b"), ConfigError);
  EXPECT_THROW(Ficnn({2, {4, 0}}, pv, "c"), ConfigError);
}

TEST(Nets, FicnnEffectiveWeightsAreNonNegative) {
  ParamVector pv;
  Ficnn net({3, {8, 8}}, pv, "f");
  std::mt19937_64 rng(2);
  net.init_glorot(pv, rng);
  // even strongly negative raw values map to non-negative effective U
  for (std::size_t k = 0; k < pv.size(); k += 3) pv[k] = -50.0;
  for (std::size_t l = 1; l < net.layers().size(); ++l) {
    for (double u : net.effective_u(pv, l)) EXPECT_GE(u, 0.0);
  }
}

TEST(Nets, FicnnMidpointConvexity) {
  ParamVector pv;
  Ficnn net({3, {16, 16}}, pv, "f");
  std::mt19937_64 rng(9);
  net.init_glorot(pv, rng);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  int violations = 0;
  for (int s = 0; s < 1000; ++s) {
    std::vector<double> a{d(rng), d(rng), d(rng)}, b{d(rng), d(rng), d(rng)}, m(3);
    for (int i = 0; i < 3; ++i) m[i] = 0.5 * (a[i] + b[i]);
    const double lhs = ficnn_forward(net, pv, m);
    const double rhs = 0.5 * (ficnn_forward(net, pv, a) + ficnn_forward(net, pv, b));
    if (lhs > rhs + 1e-10) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Nets, FicnnWrongInputDimensionThrows) {
  ParamVector pv;
  Ficnn net({2, {4}}, pv, "f");
  const std::vector<double> x{1.0, 2.0, 3.0};
  EXPECT_THROW(ficnn_forward(net, pv, x), Error);
}
