#include "spdsemg/decoders.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "spdsemg/error.hpp"
#include "spdsemg/random.hpp"

namespace spdsemg {

MdmModel mdm_fit(std::span<const LabeledPoint> train) {
  require(!train.empty(), ErrorCode::InvalidInput, "mdm_fit: empty training set");
  std::map<int, std::vector<CholeskyPoint>> by_class;
  const int d = train.front().point.dim();
  for (const auto& sample : train) {
    require(sample.point.dim() == d, ErrorCode::InvalidInput, "mdm_fit: dimension mismatch");
    by_class[sample.class_id].push_back(sample.point);
  }
  MdmModel model;
  for (const auto& [id, points] : by_class) {
    model.class_ids.push_back(id);
    model.centroids.push_back(frechet_mean(points));
  }
  return model;
}

int mdm_predict(const MdmModel& model, const CholeskyPoint& x) {
  require(!model.centroids.empty(), ErrorCode::InvalidInput, "mdm_predict: empty model");
  require(x.dim() == model.dim(), ErrorCode::InvalidInput, "mdm_predict: dimension mismatch");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < model.centroids.size(); ++m) {
    const double dist = geodesic_distance(x, model.centroids[m]);
    // class_ids ascend, so strict < keeps the smallest id on ties.
    if (dist < best_dist) {
      best_dist = dist;
      best = m;
    }
  }
  return model.class_ids[best];
}

Vector mdm_scores(const MdmModel& model, const CholeskyPoint& x) {
  require(x.dim() == model.dim(), ErrorCode::InvalidInput, "mdm_scores: dimension mismatch");
  Vector out(static_cast<Eigen::Index>(model.centroids.size()));
  for (std::size_t m = 0; m < model.centroids.size(); ++m) {
    out(static_cast<Eigen::Index>(m)) = -geodesic_distance(x, model.centroids[m]);
  }
  return out;
}

DistanceMatrix::DistanceMatrix(Matrix d) : d_(std::move(d)) {
  require(d_.rows() == d_.cols(), ErrorCode::InvalidInput, "DistanceMatrix: must be square");
  for (Eigen::Index i = 0; i < d_.rows(); ++i) {
    require(d_(i, i) == 0.0, ErrorCode::InvalidInput, "DistanceMatrix: diagonal must be zero");
    for (Eigen::Index j = 0; j < i; ++j) {
      require(d_(i, j) == d_(j, i) && d_(i, j) >= 0.0, ErrorCode::InvalidInput,
              "DistanceMatrix: must be symmetric and non-negative");
    }
  }
}

DistanceMatrix pairwise_distances(std::span<const CholeskyPoint> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = geodesic_distance(points[static_cast<std::size_t>(i)],
                                         points[static_cast<std::size_t>(j)]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return DistanceMatrix(std::move(d));
}

namespace {

// D^2-weighted seeding: the first medoid is uniform, each further one is
// drawn with probability proportional to its squared distance to the chosen
// set. Chosen points have weight zero, so draws are without replacement.
std::vector<int> seed_medoids(const DistanceMatrix& d, int k, Pcg32& rng) {
  const int n = d.size();
  std::vector<int> medoids{static_cast<int>(rng.below(static_cast<std::uint32_t>(n)))};
  std::vector<double> nearest(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) nearest[static_cast<std::size_t>(p)] = d(p, medoids[0]);
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  chosen[static_cast<std::size_t>(medoids[0])] = true;
  while (static_cast<int>(medoids.size()) < k) {
    double total = 0.0;
    for (int p = 0; p < n; ++p) {
      if (!chosen[static_cast<std::size_t>(p)]) total += nearest[static_cast<std::size_t>(p)] * nearest[static_cast<std::size_t>(p)];
    }
    int pick = -1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (int p = 0; p < n; ++p) {
        if (chosen[static_cast<std::size_t>(p)]) continue;
        const double w = nearest[static_cast<std::size_t>(p)] * nearest[static_cast<std::size_t>(p)];
        if (w <= 0.0) continue;
        pick = p;
        acc += w;
        if (u < acc) break;
      }
    } else {
      std::vector<int> rest;
      for (int p = 0; p < n; ++p) {
        if (!chosen[static_cast<std::size_t>(p)]) rest.push_back(p);
      }
      pick = rest[rng.below(static_cast<std::uint32_t>(rest.size()))];
    }
    medoids.push_back(pick);
    chosen[static_cast<std::size_t>(pick)] = true;
    for (int p = 0; p < n; ++p) {
      nearest[static_cast<std::size_t>(p)] = std::min(nearest[static_cast<std::size_t>(p)], d(p, pick));
    }
  }
  return medoids;
}

}  // namespace

KMedoidsResult k_medoids(const DistanceMatrix& d, int k, std::uint64_t seed) {
  const int n = d.size();
  require(n >= 1, ErrorCode::InvalidInput, "k_medoids: empty distance matrix");
  require(k >= 1 && k <= n, ErrorCode::InvalidInput, "k_medoids: need 1 <= k <= n");

  Pcg32 rng(seed);
  KMedoidsResult result;
  result.medoids = seed_medoids(d, k, rng);
  result.assignments.assign(static_cast<std::size_t>(n), 0);

  auto assign = [&] {
    double total = 0.0;
    for (int p = 0; p < n; ++p) {
      int best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dist = d(p, result.medoids[static_cast<std::size_t>(c)]);
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      result.assignments[static_cast<std::size_t>(p)] = best;
      total += best_dist;
    }
    result.cost_trace.push_back(total);
  };

  constexpr int kMaxIterations = 100;
  assign();
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    result.iterations = iter + 1;
    std::vector<int> updated = result.medoids;
    for (int c = 0; c < k; ++c) {
      double best_cost = std::numeric_limits<double>::infinity();
      int best_point = result.medoids[static_cast<std::size_t>(c)];
      for (int candidate = 0; candidate < n; ++candidate) {
        if (result.assignments[static_cast<std::size_t>(candidate)] != c) continue;
        double cost = 0.0;
        for (int p = 0; p < n; ++p) {
          if (result.assignments[static_cast<std::size_t>(p)] == c) cost += d(candidate, p);
        }
        if (cost < best_cost) {
          best_cost = cost;
          best_point = candidate;
        }
      }
      updated[static_cast<std::size_t>(c)] = best_point;
    }
    if (updated == result.medoids) break;
    result.medoids = std::move(updated);
    assign();
  }
  return result;
}

std::vector<int> max_weight_assignment(const Matrix& weights) {
  require(weights.rows() == weights.cols(), ErrorCode::InvalidInput,
          "max_weight_assignment: matrix must be square");
  const int n = static_cast<int>(weights.rows());
  if (n == 0) return {};
  const double top = weights.maxCoeff();
  // Shortest augmenting path Hungarian algorithm on cost = top - weight,
  // 1-based with a sentinel column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (top - weights(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, 0);
  for (int j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

namespace {

// Dense relabeling of arbitrary ids, in ascending id order.
std::vector<int> densify(std::span<const int> ids, int& count) {
  std::map<int, int> index;
  for (int id : ids) index.emplace(id, 0);
  int next = 0;
  for (auto& [id, slot] : index) slot = next++;
  count = next;
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(index[id]);
  return out;
}

}  // namespace

double clustering_accuracy(std::span<const int> assignments, std::span<const int> labels) {
  require(assignments.size() == labels.size(), ErrorCode::InvalidInput,
          "clustering_accuracy: length mismatch");
  require(!labels.empty(), ErrorCode::InvalidInput, "clustering_accuracy: empty input");
  int n_clusters = 0;
  int n_labels = 0;
  const auto clusters = densify(assignments, n_clusters);
  const auto classes = densify(labels, n_labels);
  require(n_clusters == n_labels, ErrorCode::InvalidInput,
          "clustering_accuracy: cluster count differs from label count");
  Matrix contingency = Matrix::Zero(n_clusters, n_labels);
  for (std::size_t i = 0; i < clusters.size(); ++i) contingency(clusters[i], classes[i]) += 1.0;
  const auto mapping = max_weight_assignment(contingency);
  double correct = 0.0;
  for (int c = 0; c < n_clusters; ++c) correct += contingency(c, mapping[static_cast<std::size_t>(c)]);
  return correct / static_cast<double>(labels.size());
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::InvalidInput,
          "adjusted_rand_index: inputs must be non-empty and equally long");
  int na = 0;
  int nb = 0;
  const auto x = densify(a, na);
  const auto y = densify(b, nb);
  Matrix table = Matrix::Zero(na, nb);
  for (std::size_t i = 0; i < x.size(); ++i) table(x[i], y[i]) += 1.0;
  auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
  double sum_cells = 0.0;
  for (Eigen::Index i = 0; i < table.size(); ++i) sum_cells += pairs(table.data()[i]);
  double sum_rows = 0.0;
  for (Eigen::Index i = 0; i < na; ++i) sum_rows += pairs(table.row(i).sum());
  double sum_cols = 0.0;
  for (Eigen::Index j = 0; j < nb; ++j) sum_cols += pairs(table.col(j).sum());
  const double total = pairs(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sum_rows * sum_cols / total : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;  // both partitions trivial and identical
  return (sum_cells - expected) / (max_index - expected);
}

}  // namespace spdsemg
