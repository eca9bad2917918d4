#include "spdsemg/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "spdsemg/error.hpp"

namespace spdsemg {

namespace {

void check_lower(const Matrix& m, const char* who) {
  require(m.rows() == m.cols() && m.rows() > 0, ErrorCode::InvalidInput,
          std::string(who) + ": matrix must be square and non-empty");
  require(m.allFinite(), ErrorCode::InvalidInput, std::string(who) + ": non-finite entries");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
      require(m(i, j) == 0.0, ErrorCode::InvalidInput,
              std::string(who) + ": strict upper part must be zero");
    }
  }
}

void check_same_dim(int a, int b, const char* who) {
  require(a == b, ErrorCode::InvalidInput, std::string(who) + ": dimension mismatch");
}

Matrix strict_part(const Matrix& m) {
  Matrix out = m.triangularView<Eigen::StrictlyLower>();
  return out;
}

// Sum of values in ascending order; order-independent in its input.
double canonical_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace

CholeskyPoint::CholeskyPoint(Matrix lower) : l_(std::move(lower)) {
  check_lower(l_, "CholeskyPoint");
  for (Eigen::Index i = 0; i < l_.rows(); ++i) {
    require(l_(i, i) > 0.0, ErrorCode::InvalidDiagonal,
            "CholeskyPoint: diagonal entries must be positive");
  }
}

CholeskyPoint CholeskyPoint::identity(int dim) {
  return CholeskyPoint(Matrix::Identity(dim, dim));
}

TriangularTangent::TriangularTangent(Matrix lower) : t_(std::move(lower)) {
  check_lower(t_, "TriangularTangent");
}

CholeskyPoint to_cholesky(const SymMatrix& spd) { return CholeskyPoint(cholesky_lower(spd)); }

SymMatrix from_cholesky(const CholeskyPoint& l) {
  return SymMatrix(l.factor() * l.factor().transpose());
}

SplitPair split(const CholeskyPoint& l) {
  return SplitPair{strict_part(l.factor()), l.factor().diagonal()};
}

CholeskyPoint combine(const SplitPair& parts) {
  const auto d = parts.diag.size();
  require(parts.strict.rows() == d && parts.strict.cols() == d, ErrorCode::InvalidInput,
          "combine: shape mismatch");
  for (Eigen::Index i = 0; i < d; ++i) {
    require(parts.diag(i) > 0.0, ErrorCode::InvalidDiagonal,
            "combine: diagonal entries must be positive");
  }
  Matrix l = strict_part(parts.strict);
  l.diagonal() = parts.diag;
  return CholeskyPoint(std::move(l));
}

CholeskyPoint group_op(const CholeskyPoint& l, const CholeskyPoint& k) {
  check_same_dim(l.dim(), k.dim(), "group_op");
  Matrix out = strict_part(l.factor()) + strict_part(k.factor());
  out.diagonal() = l.factor().diagonal().cwiseProduct(k.factor().diagonal());
  return CholeskyPoint(std::move(out));
}

CholeskyPoint frechet_mean(std::span<const CholeskyPoint> points,
                           std::span<const double> weights) {
  require(!points.empty(), ErrorCode::InvalidInput, "frechet_mean: empty point list");
  require(weights.size() == points.size(), ErrorCode::InvalidInput,
          "frechet_mean: weights length must match points");
  for (double w : weights) {
    require(std::isfinite(w) && w > 0.0, ErrorCode::InvalidInput,
            "frechet_mean: weights must be positive");
  }
  const int d = points.front().dim();
  for (const auto& p : points) check_same_dim(p.dim(), d, "frechet_mean");

  const auto n = static_cast<double>(points.size());
  std::vector<double> terms(points.size());
  Matrix out = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      for (std::size_t p = 0; p < points.size(); ++p) {
        terms[p] = weights[p] * points[p].factor()(i, j);
      }
      out(i, j) = canonical_sum(terms) / n;
    }
    for (std::size_t p = 0; p < points.size(); ++p) {
      terms[p] = weights[p] * std::log(points[p].factor()(i, i));
    }
    out(i, i) = std::exp(canonical_sum(terms) / n);
  }
  return CholeskyPoint(std::move(out));
}

CholeskyPoint frechet_mean(std::span<const CholeskyPoint> points) {
  std::vector<double> unit(points.size(), 1.0);
  return frechet_mean(points, unit);
}

double geodesic_distance(const CholeskyPoint& l, const CholeskyPoint& k) {
  check_same_dim(l.dim(), k.dim(), "geodesic_distance");
  const Matrix& a = l.factor();
  const Matrix& b = k.factor();
  const int d = l.dim();
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      const double diff = a(i, j) - b(i, j);
      acc += diff * diff;
    }
    const double diff = std::log(a(i, i)) - std::log(b(i, i));
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

TriangularTangent chart_log(const CholeskyPoint& l) {
  Matrix t = strict_part(l.factor());
  t.diagonal() = l.factor().diagonal().array().log().matrix();
  return TriangularTangent(std::move(t));
}

CholeskyPoint chart_exp(const TriangularTangent& t) {
  Matrix l = strict_part(t.matrix());
  l.diagonal() = t.matrix().diagonal().array().exp().matrix();
  return CholeskyPoint(std::move(l));
}

int dim_from_tri_size(int n) {
  int d = 0;
  while (tri_size(d) < n) ++d;
  require(n > 0 && tri_size(d) == n, ErrorCode::InvalidInput,
          "coordinate length is not a triangular number");
  return d;
}

Vector strict_entries(const Matrix& lower) {
  const int d = static_cast<int>(lower.rows());
  Vector out(strict_size(d));
  int k = 0;
  for (int i = 1; i < d; ++i) {
    for (int j = 0; j < i; ++j) out(k++) = lower(i, j);
  }
  return out;
}

Matrix strict_from_entries(const Vector& entries, int dim) {
  require(entries.size() == strict_size(dim), ErrorCode::InvalidInput,
          "strict_from_entries: length mismatch");
  Matrix out = Matrix::Zero(dim, dim);
  int k = 0;
  for (int i = 1; i < dim; ++i) {
    for (int j = 0; j < i; ++j) out(i, j) = entries(k++);
  }
  return out;
}

Vector flatten_tangent(const TriangularTangent& t) {
  const int d = t.dim();
  Vector out(tri_size(d));
  out.head(strict_size(d)) = strict_entries(t.matrix());
  out.tail(d) = t.matrix().diagonal();
  return out;
}

TriangularTangent unflatten_tangent(const Vector& coords) {
  const int d = dim_from_tri_size(static_cast<int>(coords.size()));
  Matrix t = strict_from_entries(coords.head(strict_size(d)), d);
  t.diagonal() = coords.tail(d);
  return TriangularTangent(std::move(t));
}

}  // namespace spdsemg
