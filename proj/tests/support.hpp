#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "spdsemg/geometry.hpp"
#include "spdsemg/linalg.hpp"
#include "spdsemg/random.hpp"

namespace spdsemg::testing {

inline Matrix random_matrix(Pcg32& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Vector random_vector(Pcg32& rng, int n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

inline SymMatrix random_sym(Pcg32& rng, int d) { return SymMatrix(random_matrix(rng, d, d)); }

/// A A^T / d + floor I.
inline SymMatrix random_spd(Pcg32& rng, int d, double floor = 0.1) {
  const Matrix a = random_matrix(rng, d, d);
  return SymMatrix(a * a.transpose() / d + floor * Matrix::Identity(d, d));
}

inline CholeskyPoint random_point(Pcg32& rng, int d, double scale = 0.5) {
  Matrix l = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) l(i, j) = scale * rng.normal();
    l(i, i) = std::exp(scale * rng.normal());
  }
  return CholeskyPoint(l);
}

/// Orthonormal columns via Householder QR, independent of gram_schmidt.
inline Matrix random_orthonormal(Pcg32& rng, int rows, int cols) {
  const Matrix a = random_matrix(rng, rows, cols);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

/// Central finite differences of f at x.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                               double h = 1e-5) {
  Vector g(x.size());
  Vector y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y(i) = x(i) + h;
    const double up = f(y);
    y(i) = x(i) - h;
    const double down = f(y);
    y(i) = x(i);
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double rel_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale < 1e-300 ? 0.0 : (a - b).norm() / scale;
}

inline Vector flat(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unflat(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

/// Symmetric perturbation parameterization: x holds the lower triangle.
inline Vector lower_entries(const Matrix& m) {
  Vector out(m.rows() * (m.rows() + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) out(k++) = m(i, j);
  }
  return out;
}

inline Matrix sym_from_lower_entries(const Vector& v, int d) {
  Matrix m(d, d);
  Eigen::Index k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      m(i, j) = v(k);
      m(j, i) = v(k);
      ++k;
    }
  }
  return m;
}

/// The gradient of a function of a symmetric matrix, expressed on the lower
/// triangle entries: off-diagonal entries count twice.
inline Vector lower_gradient(const SymMatrix& g) {
  Vector out = lower_entries(g.matrix());
  Eigen::Index k = 0;
  for (int i = 0; i < g.dim(); ++i) {
    for (int j = 0; j <= i; ++j) {
      if (i != j) out(k) *= 2.0;
      ++k;
    }
  }
  return out;
}

}  // namespace spdsemg::testing
