#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spdsemg/linalg.hpp"

namespace spdsemg {

/// Orthogonal d x d matrix, typically a trained first BiMap weight.
class BasisMatrix {
 public:
  BasisMatrix() = default;
  /// Throws InvalidInput unless square with max|Q^T Q - I| <= 1e-6.
  explicit BasisMatrix(Matrix q);

  int dim() const { return static_cast<int>(q_.rows()); }
  const Matrix& matrix() const { return q_; }

 private:
  Matrix q_;
};

/// Fraction of rows (trials x classes logits) whose label is among the k
/// largest entries; equal logits rank the lower class index first.
double topk_accuracy(const Matrix& logits, std::span<const int> labels, int k);
/// topk_accuracy for k = 1 .. k_max.
std::vector<double> topk_table(const Matrix& logits, std::span<const int> labels, int k_max);

/// counts(true, predicted).
Matrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int classes);
/// Row-wise accuracy of a confusion matrix; rows with no trials give 0.
std::vector<double> per_class_accuracy(const Matrix& confusion);

/// For M = Q^T E Q: max off-diagonal |M_ij| over max diagonal |M_ii|.
/// Throws DegenerateInput when the diagonal is all zero.
double diag_ratio(const SymMatrix& e, const BasisMatrix& q);

/// Angle between two bases under the trace inner product, in [0, pi].
double basis_angle(const Matrix& qi, const Matrix& qj);

/// Column of Q whose diagonal entry of Q^T E Q is largest (first on ties).
int dominant_column(const SymMatrix& e, const BasisMatrix& q);

/// Node indices sorted by |kappa| descending; ties go to the lower index.
std::vector<int> rank_by_magnitude(const Vector& kappa);

enum class ColumnSelection {
  MeanEdge,  // one column from the arithmetic mean of all edge matrices
  PerTrial,  // a column per trial from that trial's own edge matrix
};

struct ImportanceReport {
  std::vector<int> columns;            // selected column of Q, per trial
  std::vector<Vector> kappa;           // lstsq(E, q_column), per trial
  std::vector<std::vector<int>> rank;  // rank_by_magnitude(kappa), per trial
  std::vector<int> rank1_counts;       // per node: trials where it ranks first
  std::vector<int> top3_counts;        // per node: trials where it ranks in the top 3
};

ImportanceReport electrode_importance(std::span<const SymMatrix> edges, const BasisMatrix& q,
                                      ColumnSelection selection = ColumnSelection::MeanEdge);

/// Named label groups, disjoint.
class PhonemeGroups {
 public:
  PhonemeGroups() = default;
  /// Throws InvalidInput if a label appears in more than one group.
  explicit PhonemeGroups(std::vector<std::pair<std::string, std::vector<std::string>>> groups);

  /// The seven consonant place-of-articulation groups.
  static PhonemeGroups consonants();
  /// consonants() plus a singleton group for every other label in `labels`.
  static PhonemeGroups articulatory(std::span<const std::string> labels);

  const std::vector<std::pair<std::string, std::vector<std::string>>>& groups() const {
    return groups_;
  }
  /// Index of the group holding `label`, or -1.
  int group_of(const std::string& label) const;

 private:
  std::vector<std::pair<std::string, std::vector<std::string>>> groups_;
};

/// Accuracy of a confusion matrix when predictions inside the true label's
/// group count as correct. class_labels[i] names row/column i. Throws
/// InvalidInput for a label without a group.
double group_collapse(const Matrix& confusion, std::span<const std::string> class_labels,
                      const PhonemeGroups& groups);

/// Plain accuracy (trace over total) of a confusion matrix.
double confusion_accuracy(const Matrix& confusion);

}  // namespace spdsemg
