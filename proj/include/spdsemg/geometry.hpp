#pragma once

#include <span>
#include <vector>

#include "spdsemg/linalg.hpp"

namespace spdsemg {

/// A point of Cholesky space: lower-triangular, strictly positive diagonal,
/// finite. Every SPD matrix has exactly one such factor.
class CholeskyPoint {
 public:
  CholeskyPoint() = default;
  /// Throws InvalidInput for a non-zero strict upper part or non-finite
  /// entries and InvalidDiagonal for a non-positive diagonal entry.
  explicit CholeskyPoint(Matrix lower);

  static CholeskyPoint identity(int dim);

  int dim() const { return static_cast<int>(l_.rows()); }
  const Matrix& factor() const { return l_; }

  friend bool operator==(const CholeskyPoint& a, const CholeskyPoint& b) {
    return a.l_.rows() == b.l_.rows() && a.l_ == b.l_;
  }

 private:
  Matrix l_;
};

/// Lower-triangular matrix with unconstrained diagonal; the chart image of a
/// CholeskyPoint.
class TriangularTangent {
 public:
  TriangularTangent() = default;
  explicit TriangularTangent(Matrix lower);

  static TriangularTangent zero(int dim) { return TriangularTangent(Matrix::Zero(dim, dim)); }

  int dim() const { return static_cast<int>(t_.rows()); }
  const Matrix& matrix() const { return t_; }

 private:
  Matrix t_;
};

/// Strictly lower part and diagonal of a Cholesky factor.
struct SplitPair {
  Matrix strict;
  Vector diag;
};

CholeskyPoint to_cholesky(const SymMatrix& spd);
SymMatrix from_cholesky(const CholeskyPoint& l);

SplitPair split(const CholeskyPoint& l);
/// Throws InvalidDiagonal if any diag entry is not positive.
CholeskyPoint combine(const SplitPair& parts);

/// floor(L) + floor(K) + D(L) D(K).
CholeskyPoint group_op(const CholeskyPoint& l, const CholeskyPoint& k);

/// (1/n) sum w_i floor(L_i) + exp((1/n) sum w_i log D(L_i)), with the 1/n
/// factor applied regardless of the weights. Each entry is accumulated over
/// its terms in ascending value order, which makes the result bit-identical
/// under any permutation of the inputs.
CholeskyPoint frechet_mean(std::span<const CholeskyPoint> points, std::span<const double> weights);
CholeskyPoint frechet_mean(std::span<const CholeskyPoint> points);

/// Log-Cholesky geodesic distance.
double geodesic_distance(const CholeskyPoint& l, const CholeskyPoint& k);

TriangularTangent chart_log(const CholeskyPoint& l);
CholeskyPoint chart_exp(const TriangularTangent& t);

// Flat coordinates of lower-triangular matrices: the strict lower entries in
// row-major order (i > j) followed by the diagonal.
inline int strict_size(int dim) { return dim * (dim - 1) / 2; }
inline int tri_size(int dim) { return dim * (dim + 1) / 2; }
/// Dimension d with tri_size(d) == n; throws InvalidInput if none exists.
int dim_from_tri_size(int n);

Vector strict_entries(const Matrix& lower);
Matrix strict_from_entries(const Vector& entries, int dim);
Vector flatten_tangent(const TriangularTangent& t);
TriangularTangent unflatten_tangent(const Vector& coords);

}  // namespace spdsemg
