#include <gtest/gtest.h>

#include <random>

#include "sphnn/pod.hpp"

using namespace sphnn;

namespace {

Matrix random_rank(std::size_t rows, std::size_t cols, std::size_t rank, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Matrix a(rows, rank), b(rank, cols);
  for (auto& v : a.data()) v = d(rng);
  for (auto& v : b.data()) v = d(rng);
  return a * b;
}

std::vector<double> row(const Matrix& m, std::size_t i) {
  std::vector<double> r(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) r[j] = m(i, j);
  return r;
}

}  // namespace

TEST(Pod, RankExactReconstruction) {
  for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{30, 8}, {6, 20}}) {
    const Matrix a = random_rank(rows, cols, 3, rows);
    const auto basis = pod_fit(a, 3);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto x = row(a, i);
      EXPECT_LE(reconstruction_error(basis, x), 1e-9 * norm2(x));
    }
  }
}

TEST(Pod, ModesAreScaledOrthonormal) {
  const auto basis = pod_fit(random_rank(20, 10, 10, 1), 4);
  const Matrix g = basis.modes.transposed() * basis.modes;
  const double c2 = basis.scale * basis.scale;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g(i, k), i == k ? c2 : 0.0, 1e-10 * c2);
}

TEST(Pod, DiagonalSingularValues) {
  Matrix a(4, 4);
  a(0, 0) = 4;
  a(1, 1) = 3;
  a(2, 2) = 2;
  a(3, 3) = 1;
  const auto basis = pod_fit(a, 4);
  ASSERT_GE(basis.singular_values.size(), 4u);
  const double want[] = {4, 3, 2, 1};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(basis.singular_values[k], want[k], 1e-12);
}

TEST(Pod, EncodeDecodeIsIdentityOnLatents) {
  const auto basis = set_equilibrium(pod_fit(random_rank(25, 12, 12, 2), 5), row(random_rank(1, 12, 1, 9), 0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> z(5);
    for (auto& v : z) v = d(rng);
    const auto back = encode(basis, decode(basis, z));
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(back[k], z[k], 1e-10);
  }
}

TEST(Pod, EquilibriumEncodesToZero) {
  const Matrix a = random_rank(15, 6, 6, 4);
  const auto eq = row(a, 0);
  const auto basis = set_equilibrium(pod_fit(a, 3), eq);
  for (double v : encode(basis, eq)) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Pod, ReconstructionErrorNonIncreasingInModes) {
  const Matrix a = random_rank(40, 10, 10, 5);
  const auto x = row(random_rank(1, 10, 1, 6), 0);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n <= 10; ++n) {
    const double e = reconstruction_error(pod_fit(a, n), x);
    EXPECT_LE(e, prev + 1e-12);
    prev = e;
  }
  EXPECT_LE(prev, 1e-9 * norm2(x));
}

TEST(Pod, OrthogonalFieldEncodesToMinusShift) {
  Matrix a(3, 3);
  a(0, 0) = 2.0;
  a(1, 1) = 1.0;
  auto basis = pod_fit(a, 2);
  basis = set_equilibrium(basis, std::vector<double>{1.0, 1.0, 0.0});
  const auto z = encode(basis, std::vector<double>{0.0, 0.0, 5.0});
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(z[k], -basis.shift[k], 1e-12);
}

TEST(Pod, InvalidInputs) {
  const Matrix a = random_rank(5, 4, 2, 7);
  EXPECT_THROW(pod_fit(a, 0), ConfigError);
  EXPECT_THROW(pod_fit(a, 5), ConfigError);
  EXPECT_THROW(pod_fit(Matrix(3, 3), 1), ConfigError);
  Matrix bad = a;
  bad(0, 0) = std::nan("");
  EXPECT_THROW(pod_fit(bad, 1), ConfigError);
  const auto basis = pod_fit(a, 2);
  EXPECT_THROW(encode(basis, std::vector<double>(3)), Error);
}
