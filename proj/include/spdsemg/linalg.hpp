#pragma once

#include <Eigen/Dense>
#include <functional>

namespace spdsemg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Square symmetric matrix. The constructor symmetrizes its argument as
/// (A + A^T) / 2, so entries(i, j) == entries(j, i) holds bit-exactly and an
/// already-symmetric input is stored unchanged.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m);

  static SymMatrix identity(int dim);
  static SymMatrix zero(int dim);
  static SymMatrix diagonal(const Vector& diag);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }
  bool all_finite() const { return m_.allFinite(); }

 private:
  Matrix m_;
};

/// Eigendecomposition U diag(sigma) U^T with sigma non-increasing and each
/// eigenvector's largest-magnitude entry positive.
struct EigPair {
  Matrix U;
  Vector sigma;

  Matrix reconstruct() const { return U * sigma.asDiagonal() * U.transpose(); }
};

/// (G + G^T) / 2 for any square G.
Matrix sym(const Matrix& g);

EigPair sym_eig(const SymMatrix& m);

/// Lower-triangular L with strictly positive diagonal such that L L^T = P.
/// Throws NotPositiveDefinite when a pivot is not positive.
Matrix cholesky_lower(const SymMatrix& p);

/// Modified Gram-Schmidt on the columns of a d x k matrix (k <= d).
/// Throws RankDeficient when a column norm drops below 1e-12.
Matrix gram_schmidt(const Matrix& m);

/// Minimum-norm least-squares solution of A x = b.
Vector lstsq(const Matrix& a, const Vector& b);

using ScalarFn = std::function<double(double)>;

/// U f(Sigma) U^T for the given decomposition.
SymMatrix apply_matfun(const EigPair& pair, const ScalarFn& f);

/// Gradient of a loss with respect to M, given its gradient G_out with
/// respect to Y = U f(Sigma) U^T (Daleckii-Krein / Loewner matrix).
/// Eigenvalue pairs closer than 1e-12 * max|sigma| use f'((s_i + s_j) / 2).
SymMatrix matfun_backprop(const EigPair& pair, const ScalarFn& f, const ScalarFn& f_prime,
                          const SymMatrix& g_out);

/// Infinity norm (max absolute entry).
inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// max |W^T W - I|.
double orthogonality_error(const Matrix& w);

}  // namespace spdsemg
