#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "spdsemg/geometry.hpp"

namespace spdsemg {

/// Minimum-distance-to-mean classifier; centroids are kept sorted by class id.
struct MdmModel {
  std::vector<int> class_ids;
  std::vector<CholeskyPoint> centroids;

  int dim() const { return centroids.empty() ? 0 : centroids.front().dim(); }
};

struct LabeledPoint {
  CholeskyPoint point;
  int class_id = 0;
};

/// One Frechet mean (unit weights) per class present in the training set.
MdmModel mdm_fit(std::span<const LabeledPoint> train);

/// Nearest centroid under the geodesic distance; ties go to the smallest id.
int mdm_predict(const MdmModel& model, const CholeskyPoint& x);

/// Negated distances to each centroid, in model.class_ids order. Usable as
/// logits for top-k scoring.
Vector mdm_scores(const MdmModel& model, const CholeskyPoint& x);

/// Symmetric n x n matrix of geodesic distances with a zero diagonal.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  /// Throws InvalidInput unless square, symmetric, non-negative, zero diagonal.
  explicit DistanceMatrix(Matrix d);

  int size() const { return static_cast<int>(d_.rows()); }
  double operator()(int i, int j) const { return d_(i, j); }
  const Matrix& matrix() const { return d_; }

 private:
  Matrix d_;
};

DistanceMatrix pairwise_distances(std::span<const CholeskyPoint> points);

struct KMedoidsResult {
  std::vector<int> assignments;    // cluster index in [0, k) per point
  std::vector<int> medoids;        // point index of each cluster's medoid
  std::vector<double> cost_trace;  // total cost after each assignment step
  int iterations = 0;

  double cost() const { return cost_trace.empty() ? 0.0 : cost_trace.back(); }
};

/// Voronoi-iteration k-medoids. Initial medoids are drawn without
/// replacement from the seed, each with probability proportional to its
/// squared distance to those already drawn; at most 100 iterations, stops
/// when the medoid set is stable.
KMedoidsResult k_medoids(const DistanceMatrix& d, int k, std::uint64_t seed);

/// Accuracy under the best one-to-one cluster -> label mapping. The number
/// of distinct clusters must equal the number of distinct labels.
double clustering_accuracy(std::span<const int> assignments, std::span<const int> labels);

/// Hubert-Arabie adjusted Rand index.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Maximum-weight perfect matching on a square matrix (Hungarian method).
/// Returns, for each row, the matched column.
std::vector<int> max_weight_assignment(const Matrix& weights);

}  // namespace spdsemg
