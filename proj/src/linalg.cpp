#include "spdsemg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "spdsemg/error.hpp"

namespace spdsemg {

SymMatrix::SymMatrix(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorCode::InvalidInput, "SymMatrix: matrix must be square");
  m_ = sym(m);
}

SymMatrix SymMatrix::identity(int dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

SymMatrix SymMatrix::zero(int dim) { return SymMatrix(Matrix::Zero(dim, dim)); }

SymMatrix SymMatrix::diagonal(const Vector& diag) { return SymMatrix(Matrix(diag.asDiagonal())); }

Matrix sym(const Matrix& g) { return (g + g.transpose()) * 0.5; }

EigPair sym_eig(const SymMatrix& m) {
  require(m.all_finite(), ErrorCode::InvalidInput, "sym_eig: non-finite entries");
  const int d = m.dim();
  // Householder tridiagonalization followed by implicit symmetric QR.
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix());
  require(solver.info() == Eigen::Success, ErrorCode::InvalidInput, "sym_eig: did not converge");

  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  const Vector& values = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values(a) > values(b); });

  EigPair out{Matrix(d, d), Vector(d)};
  for (int k = 0; k < d; ++k) {
    const int src = order[static_cast<std::size_t>(k)];
    out.sigma(k) = values(src);
    Vector v = solver.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0.0) v = -v;
    out.U.col(k) = v;
  }
  return out;
}

Matrix cholesky_lower(const SymMatrix& p) {
  require(p.all_finite(), ErrorCode::InvalidInput, "cholesky_lower: non-finite entries");
  const int d = p.dim();
  const Matrix& a = p.matrix();
  Matrix l = Matrix::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    double pivot = a(j, j);
    for (int k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0)) {
      fail(ErrorCode::NotPositiveDefinite,
           "cholesky_lower: non-positive pivot at column " + std::to_string(j));
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (int i = j + 1; i < d; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Matrix gram_schmidt(const Matrix& m) {
  require(m.allFinite(), ErrorCode::InvalidInput, "gram_schmidt: non-finite entries");
  require(m.cols() <= m.rows(), ErrorCode::InvalidInput,
          "gram_schmidt: more columns than rows");
  Matrix q = m;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    // Two modified passes; the second removes the residual introduced by
    // cancellation in the first so W^T W = I holds to ~1e-15.
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < j; ++k) {
        q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
      }
    }
    const double norm = q.col(j).norm();
    if (norm < 1e-12) {
      fail(ErrorCode::RankDeficient,
           "gram_schmidt: column " + std::to_string(j) + " is linearly dependent");
    }
    q.col(j) /= norm;
  }
  return q;
}

Vector lstsq(const Matrix& a, const Vector& b) {
  require(a.rows() >= 1 && a.cols() >= 1, ErrorCode::InvalidInput, "lstsq: empty matrix");
  require(a.rows() == b.size(), ErrorCode::InvalidInput, "lstsq: dimension mismatch");
  require(a.allFinite() && b.allFinite(), ErrorCode::InvalidInput, "lstsq: non-finite input");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  return cod.solve(b);
}

SymMatrix apply_matfun(const EigPair& pair, const ScalarFn& f) {
  Vector fs = pair.sigma.unaryExpr([&](double s) { return f(s); });
  return SymMatrix(pair.U * fs.asDiagonal() * pair.U.transpose());
}

SymMatrix matfun_backprop(const EigPair& pair, const ScalarFn& f, const ScalarFn& f_prime,
                          const SymMatrix& g_out) {
  const int d = static_cast<int>(pair.sigma.size());
  require(g_out.dim() == d, ErrorCode::InvalidInput, "matfun_backprop: dimension mismatch");
  const Vector& s = pair.sigma;
  const double scale = d > 0 ? s.cwiseAbs().maxCoeff() : 0.0;
  const double tol = 1e-12 * scale;

  Vector fs(d);
  for (int i = 0; i < d; ++i) fs(i) = f(s(i));

  Matrix loewner(d, d);
  for (int i = 0; i < d; ++i) {
    loewner(i, i) = f_prime(s(i));
    for (int j = 0; j < i; ++j) {
      const double gap = s(i) - s(j);
      double k = 0.0;
      if (std::abs(gap) < tol || gap == 0.0) {
        k = f_prime(0.5 * (s(i) + s(j)));
      } else {
        k = (fs(i) - fs(j)) / gap;
      }
      loewner(i, j) = k;
      loewner(j, i) = k;
    }
  }
  Matrix inner = pair.U.transpose() * g_out.matrix() * pair.U;
  return SymMatrix(pair.U * loewner.cwiseProduct(inner) * pair.U.transpose());
}

double orthogonality_error(const Matrix& w) {
  return max_abs(w.transpose() * w - Matrix::Identity(w.cols(), w.cols()));
}

}  // namespace spdsemg
