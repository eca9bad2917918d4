#include "spdsemg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "spdsemg/error.hpp"

namespace spdsemg {

BasisMatrix::BasisMatrix(Matrix q) : q_(std::move(q)) {
  require(q_.rows() == q_.cols() && q_.rows() > 0, ErrorCode::InvalidInput,
          "BasisMatrix: must be square and non-empty");
  require(q_.allFinite() && orthogonality_error(q_) <= 1e-6, ErrorCode::InvalidInput,
          "BasisMatrix: not orthogonal");
}

double topk_accuracy(const Matrix& logits, std::span<const int> labels, int k) {
  require(logits.rows() == static_cast<Eigen::Index>(labels.size()), ErrorCode::InvalidInput,
          "topk_accuracy: rows and labels differ in length");
  require(k >= 1, ErrorCode::InvalidInput, "topk_accuracy: k must be >= 1");
  require(k <= logits.cols(), ErrorCode::InvalidInput, "topk_accuracy: k exceeds class count");
  if (labels.empty()) return 0.0;
  int hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < logits.cols(), ErrorCode::InvalidInput, "topk_accuracy: label out of range");
    const double v = logits(i, y);
    int ahead = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (logits(i, c) > v || (logits(i, c) == v && c < y)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<double> topk_table(const Matrix& logits, std::span<const int> labels, int k_max) {
  std::vector<double> out;
  for (int k = 1; k <= k_max; ++k) out.push_back(topk_accuracy(logits, labels, k));
  return out;
}

Matrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int classes) {
  require(truth.size() == predicted.size(), ErrorCode::InvalidInput,
          "confusion_matrix: length mismatch");
  require(classes >= 1, ErrorCode::InvalidInput, "confusion_matrix: classes must be positive");
  Matrix c = Matrix::Zero(classes, classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && truth[i] < classes && predicted[i] >= 0 && predicted[i] < classes,
            ErrorCode::InvalidInput, "confusion_matrix: label out of range");
    c(truth[i], predicted[i]) += 1.0;
  }
  return c;
}

std::vector<double> per_class_accuracy(const Matrix& confusion) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < confusion.rows(); ++i) {
    const double total = confusion.row(i).sum();
    out.push_back(total > 0.0 ? confusion(i, i) / total : 0.0);
  }
  return out;
}

double confusion_accuracy(const Matrix& confusion) {
  const double total = confusion.sum();
  return total > 0.0 ? confusion.trace() / total : 0.0;
}

double diag_ratio(const SymMatrix& e, const BasisMatrix& q) {
  require(e.dim() == q.dim(), ErrorCode::InvalidInput, "diag_ratio: dimension mismatch");
  const Matrix m = q.matrix().transpose() * e.matrix() * q.matrix();
  double diag = 0.0;
  double off = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (i == j) {
        diag = std::max(diag, std::abs(m(i, j)));
      } else {
        off = std::max(off, std::abs(m(i, j)));
      }
    }
  }
  require(diag > 0.0, ErrorCode::DegenerateInput, "diag_ratio: zero diagonal");
  return off / diag;
}

double basis_angle(const Matrix& qi, const Matrix& qj) {
  require(qi.rows() == qj.rows() && qi.cols() == qj.cols(), ErrorCode::InvalidInput,
          "basis_angle: dimension mismatch");
  const double ni = std::sqrt((qi * qi.transpose()).trace());
  const double nj = std::sqrt((qj * qj.transpose()).trace());
  require(ni > 0.0 && nj > 0.0, ErrorCode::DegenerateInput, "basis_angle: zero matrix");
  // Same angle as acos(<qi, qj> / (|qi| |qj|)) under the trace inner product,
  // without the loss of precision near 0 and pi.
  const Matrix a = qi / ni;
  const Matrix b = qj / nj;
  const double theta = 2.0 * std::atan2((a - b).norm(), (a + b).norm());
  return std::clamp(theta, 0.0, std::numbers::pi);
}

int dominant_column(const SymMatrix& e, const BasisMatrix& q) {
  require(e.dim() == q.dim(), ErrorCode::InvalidInput, "dominant_column: dimension mismatch");
  const Vector diag = (q.matrix().transpose() * e.matrix() * q.matrix()).diagonal();
  int best = 0;
  for (int i = 1; i < diag.size(); ++i) {
    if (diag(i) > diag(best)) best = i;
  }
  return best;
}

std::vector<int> rank_by_magnitude(const Vector& kappa) {
  std::vector<int> order(static_cast<std::size_t>(kappa.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(kappa(a)) > std::abs(kappa(b)); });
  return order;
}

ImportanceReport electrode_importance(std::span<const SymMatrix> edges, const BasisMatrix& q,
                                      ColumnSelection selection) {
  require(!edges.empty(), ErrorCode::InvalidInput, "electrode_importance: no trials");
  const int d = q.dim();
  for (const auto& e : edges) {
    require(e.dim() == d, ErrorCode::InvalidInput, "electrode_importance: dimension mismatch");
  }
  int shared_column = 0;
  if (selection == ColumnSelection::MeanEdge) {
    Matrix mean = Matrix::Zero(d, d);
    for (const auto& e : edges) mean += e.matrix();
    mean /= static_cast<double>(edges.size());
    shared_column = dominant_column(SymMatrix(mean), q);
  }
  ImportanceReport report;
  report.rank1_counts.assign(static_cast<std::size_t>(d), 0);
  report.top3_counts.assign(static_cast<std::size_t>(d), 0);
  for (const auto& e : edges) {
    const int column =
        selection == ColumnSelection::MeanEdge ? shared_column : dominant_column(e, q);
    Vector kappa = lstsq(e.matrix(), q.matrix().col(column));
    std::vector<int> rank = rank_by_magnitude(kappa);
    ++report.rank1_counts[static_cast<std::size_t>(rank.front())];
    for (std::size_t r = 0; r < std::min<std::size_t>(3, rank.size()); ++r) {
      ++report.top3_counts[static_cast<std::size_t>(rank[r])];
    }
    report.columns.push_back(column);
    report.kappa.push_back(std::move(kappa));
    report.rank.push_back(std::move(rank));
  }
  return report;
}

PhonemeGroups::PhonemeGroups(std::vector<std::pair<std::string, std::vector<std::string>>> groups)
    : groups_(std::move(groups)) {
  std::set<std::string> seen;
  for (const auto& [name, members] : groups_) {
    require(!members.empty(), ErrorCode::InvalidInput, "PhonemeGroups: empty group " + name);
    for (const auto& m : members) {
      require(seen.insert(m).second, ErrorCode::InvalidInput,
              "PhonemeGroups: label in more than one group: " + m);
    }
  }
}

PhonemeGroups PhonemeGroups::consonants() {
  using Labels = std::vector<std::string>;
  std::vector<std::pair<std::string, Labels>> groups;
  groups.emplace_back("bilabial", Labels{"Baa", "Paa", "Maa"});
  groups.emplace_back("labiodental", Labels{"Faa", "Vaa"});
  groups.emplace_back("dental", Labels{"Thaa", "Dhaa"});
  groups.emplace_back("alveolar", Labels{"Taa", "Daa", "Naa", "Saa", "Zaa"});
  groups.emplace_back("post-velar", Labels{"Chaa", "Shaa", "Jhaa", "Zhaa"});
  groups.emplace_back("velar", Labels{"Kaa", "Gaa", "NGaa"});
  groups.emplace_back("approximant", Labels{"Yaa", "Raa", "Laa", "Waa"});
  return PhonemeGroups(std::move(groups));
}

PhonemeGroups PhonemeGroups::articulatory(std::span<const std::string> labels) {
  auto groups = consonants().groups_;
  std::set<std::string> covered;
  for (const auto& g : groups) covered.insert(g.second.begin(), g.second.end());
  for (const auto& label : labels) {
    if (covered.insert(label).second) groups.push_back({label, {label}});
  }
  return PhonemeGroups(std::move(groups));
}

int PhonemeGroups::group_of(const std::string& label) const {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto& m = groups_[g].second;
    if (std::find(m.begin(), m.end(), label) != m.end()) return static_cast<int>(g);
  }
  return -1;
}

double group_collapse(const Matrix& confusion, std::span<const std::string> class_labels,
                      const PhonemeGroups& groups) {
  require(confusion.rows() == confusion.cols() &&
              confusion.rows() == static_cast<Eigen::Index>(class_labels.size()),
          ErrorCode::InvalidInput, "group_collapse: confusion and labels disagree in size");
  std::vector<int> group(class_labels.size());
  for (std::size_t i = 0; i < class_labels.size(); ++i) {
    group[i] = groups.group_of(class_labels[i]);
    require(group[i] >= 0, ErrorCode::InvalidInput,
            "group_collapse: label without a group: " + class_labels[i]);
  }
  double correct = 0.0;
  for (Eigen::Index i = 0; i < confusion.rows(); ++i) {
    for (Eigen::Index j = 0; j < confusion.cols(); ++j) {
      if (group[static_cast<std::size_t>(i)] == group[static_cast<std::size_t>(j)]) {
        correct += confusion(i, j);
      }
    }
  }
  const double total = confusion.sum();
  return total > 0.0 ? correct / total : 0.0;
}

}  // namespace spdsemg
