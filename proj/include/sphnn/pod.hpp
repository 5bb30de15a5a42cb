#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sphnn/errors.hpp"
#include "sphnn/linalg.hpp"

namespace sphnn {

// Truncated POD basis. modes = c·Ṽ (N×n) with orthonormal Ṽ, so
// modesᵀ·modes = c²·I. Latent coordinates are shifted so that a chosen
// equilibrium field encodes to zero.
struct PodBasis {
  Matrix modes;
  double scale = 1.0;
  std::vector<double> shift;
  std::vector<double> singular_values;  // leading singular values of the snapshot matrix

  std::size_t field_dim() const { return modes.rows(); }
  std::size_t latent_dim() const { return modes.cols(); }
};

namespace detail {

// Orthonormalizes column k of v against columns [0, k); falls back to unit
// vectors when the column is (numerically) in their span.
inline void complete_column(Matrix& v, std::size_t k) {
  const std::size_t rows = v.rows();
  auto project_out = [&](std::vector<double>& c) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < k; ++j) {
        double d = 0.0;
        for (std::size_t i = 0; i < rows; ++i) d += v(i, j) * c[i];
        for (std::size_t i = 0; i < rows; ++i) c[i] -= d * v(i, j);
      }
  };
  std::vector<double> c(rows);
  for (std::size_t i = 0; i < rows; ++i) c[i] = v(i, k);
  project_out(c);
  double nrm = norm2(c);
  for (std::size_t e = 0; nrm < 1e-8 && e < rows; ++e) {
    std::fill(c.begin(), c.end(), 0.0);
    c[e] = 1.0;
    project_out(c);
    nrm = norm2(c);
  }
  for (std::size_t i = 0; i < rows; ++i) v(i, k) = c[i] / nrm;
}

}  // namespace detail

// Fits an n-mode basis to M×N snapshots (one snapshot per row). The SVD comes
// from a Jacobi eigen-decomposition of the smaller Gram matrix.
inline PodBasis pod_fit(const Matrix& snapshots, std::size_t n) {
  const std::size_t rows = snapshots.rows();
  const std::size_t cols = snapshots.cols();
  if (n < 1 || n > std::min(rows, cols)) {
    throw ConfigError("pod: latent dimension " + std::to_string(n) + " outside [1, " +
                      std::to_string(std::min(rows, cols)) + "]");
  }
  for (double v : snapshots.data()) {
    if (!std::isfinite(v)) throw ConfigError("pod: snapshots contain non-finite values");
  }
  if (max_abs(snapshots.data()) == 0.0) throw ConfigError("pod: snapshot matrix is zero");

  const Matrix at = snapshots.transposed();
  Matrix v(cols, n);
  std::vector<double> sigma;
  if (cols <= rows) {
    const auto eig = jacobi_eigen(at * snapshots);
    for (double lam : eig.values) sigma.push_back(std::sqrt(std::max(lam, 0.0)));
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < cols; ++i) v(i, k) = eig.vectors(i, k);
  } else {
    // snapshot method: A Aᵀ u = σ² u, v = Aᵀ u / σ
    const auto eig = jacobi_eigen(snapshots * at);
    for (double lam : eig.values) sigma.push_back(std::sqrt(std::max(lam, 0.0)));
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> uk(rows);
      for (std::size_t i = 0; i < rows; ++i) uk[i] = eig.vectors(i, k);
      const auto col = matvec(at, uk);
      const double s = norm2(col);
      for (std::size_t i = 0; i < cols; ++i) v(i, k) = s > 0.0 ? col[i] / s : 0.0;
    }
  }
  for (std::size_t k = 0; k < n; ++k) detail::complete_column(v, k);

  // c = standard deviation of the entries of ŨΣ̃ = A Ṽ
  const Matrix us = snapshots * v;
  double mean = 0.0;
  for (double x : us.data()) mean += x;
  mean /= static_cast<double>(us.data().size());
  double var = 0.0;
  for (double x : us.data()) var += (x - mean) * (x - mean);
  var /= static_cast<double>(us.data().size());
  const double c = std::sqrt(var);
  if (!(c > 0.0)) throw ConfigError("pod: projected snapshots have zero spread");

  PodBasis b;
  b.modes = Matrix(cols, n);
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t k = 0; k < n; ++k) b.modes(i, k) = c * v(i, k);
  b.scale = c;
  b.shift.assign(n, 0.0);
  b.singular_values.assign(sigma.begin(), sigma.end());
  return b;
}

// (1/c²) Mᵀ X without the equilibrium shift.
inline std::vector<double> project(const PodBasis& b, std::span<const double> field) {
  require_dim(field.size(), b.field_dim(), "pod field");
  const double inv = 1.0 / (b.scale * b.scale);
  std::vector<double> x(b.latent_dim(), 0.0);
  for (std::size_t i = 0; i < b.field_dim(); ++i) {
    const double f = field[i];
    for (std::size_t k = 0; k < b.latent_dim(); ++k) x[k] += b.modes(i, k) * f;
  }
  for (auto& v : x) v *= inv;
  return x;
}

// Least-squares latent coordinates of a field, relative to the equilibrium.
inline std::vector<double> encode(const PodBasis& b, std::span<const double> field) {
  auto x = project(b, field);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] -= b.shift[k];
  return x;
}

// X = M (x + shift)
inline std::vector<double> decode(const PodBasis& b, std::span<const double> latent) {
  require_dim(latent.size(), b.latent_dim(), "pod latent");
  std::vector<double> z(latent.size());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = latent[k] + b.shift[k];
  return matvec(b.modes, z);
}

inline PodBasis set_equilibrium(PodBasis b, std::span<const double> equilibrium) {
  b.shift = project(b, equilibrium);
  return b;
}

inline double reconstruction_error(const PodBasis& b, std::span<const double> field) {
  const auto r = decode(b, encode(b, field));
  double s = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) s += (field[i] - r[i]) * (field[i] - r[i]);
  return std::sqrt(s);
}

}  // namespace sphnn
