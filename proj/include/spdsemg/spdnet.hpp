#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "spdsemg/linalg.hpp"
#include "spdsemg/training.hpp"

namespace spdsemg {

/// Semi-orthogonal c_in x c_out weight (c_out <= c_in).
class StiefelParameter {
 public:
  StiefelParameter() = default;
  /// Throws InvalidInput if max|W^T W - I| exceeds 1e-6.
  explicit StiefelParameter(Matrix w);

  /// Orthonormalizes the columns of an arbitrary full-rank matrix.
  static StiefelParameter from_matrix(const Matrix& m);

  const Matrix& matrix() const { return w_; }
  int rows() const { return static_cast<int>(w_.rows()); }
  int cols() const { return static_cast<int>(w_.cols()); }

 private:
  Matrix w_;
};

SymMatrix bimap_forward(const SymMatrix& e, const StiefelParameter& w);
SymMatrix reeig_forward(const SymMatrix& e, double eps);
/// Matrix logarithm; throws NotPositiveDefinite for a non-positive eigenvalue.
SymMatrix logeig_forward(const SymMatrix& e);

/// Riemannian gradient G - W G^T W.
Matrix stiefel_grad(const Matrix& g_eucl, const Matrix& w);

/// gram_schmidt(W - lr * grad). RankDeficient propagates.
StiefelParameter stiefel_step(const StiefelParameter& w, const Matrix& tangent_grad, double lr);

struct BiMapLayer {
  StiefelParameter weight;
};
struct ReEigLayer {
  double eps = 1e-4;
};
struct LogEigLayer {};

using SpdLayer = std::variant<BiMapLayer, ReEigLayer, LogEigLayer>;

struct LayerCache {
  SymMatrix input;
  std::optional<EigPair> eig;  // spectral layers only
};

struct LayerForward {
  SymMatrix output;
  LayerCache cache;
};

struct LayerGradient {
  SymMatrix input_grad;
  std::optional<Matrix> param_grad;  // Euclidean gradient, BiMap only
};

LayerForward layer_forward(const SpdLayer& layer, const SymMatrix& input);

/// BiMap: input grad W G W^T and weight grad 2 E W sym(G). ReEig and LogEig
/// go through matfun_backprop.
LayerGradient layer_backward(const SpdLayer& layer, const LayerCache& cache,
                             const SymMatrix& g_out);

/// Half-vectorization (row-major lower triangle) with off-diagonal entries
/// scaled by sqrt(2), so ||halfvec(M)||_2 = ||M||_F.
Vector halfvec(const SymMatrix& m);
/// Adjoint of halfvec with respect to the Frobenius pairing on symmetric
/// matrices.
SymMatrix halfvec_backward(const Vector& g, int dim);

Vector classify_forward(const SymMatrix& m, const LinearHead& head);

struct HeadGradient {
  SymMatrix input_grad;
  Matrix weight_grad;
  Vector bias_grad;
};

HeadGradient classify_backward(const SymMatrix& m, const LinearHead& head,
                               const Vector& g_logits);

struct SpdNetConfig {
  /// Matrix sizes along the BiMap chain: dims[0] is the input size and each
  /// following entry adds a BiMap + ReEig stage.
  std::vector<int> dims{22, 22};
  double eps = 1e-4;
  int classes = 36;
  double learning_rate = 1e-2;
  int epochs = 1000;
  int batch_size = 0;  // 0 = full batch
  double head_init_scale = 0.01;
  std::uint64_t seed = 0;

  int manifold_dim() const { return dims.back(); }
  int head_width() const { return manifold_dim() * (manifold_dim() + 1) / 2; }
  void validate() const;
};

struct LabeledSpd {
  SymMatrix matrix;
  int label = 0;
};

class SpdNetModel {
 public:
  struct Gradients {
    std::vector<Matrix> bimap;  // Euclidean, one per BiMap in layer order
    Matrix head_weight;
    Vector head_bias;
  };

  SpdNetModel() = default;
  SpdNetModel(SpdNetConfig config, std::vector<SpdLayer> layers, LinearHead head);

  /// BiMap(+ReEig) per stage, then LogEig; random semi-orthogonal weights and
  /// a Gaussian head, seeded from the config.
  static SpdNetModel initialize(const SpdNetConfig& config);

  const SpdNetConfig& config() const { return config_; }
  const std::vector<SpdLayer>& layers() const { return layers_; }
  std::vector<SpdLayer>& layers() { return layers_; }
  const LinearHead& head() const { return head_; }
  LinearHead& head() { return head_; }

  /// The first BiMap weight (square in the default architecture).
  const Matrix& first_bimap() const;

  Vector forward(const SymMatrix& input) const;
  /// Tangent features after LogEig.
  SymMatrix features(const SymMatrix& input) const;

  Gradients zero_gradients() const;
  /// Adds scale * d loss / d params to `accum` and returns the loss.
  double accumulate_gradients(const SymMatrix& input, int label, double scale,
                              Gradients& accum, Vector* logits_out = nullptr) const;

  /// Stiefel step on every BiMap, plain SGD on the head.
  void apply_gradients(const Gradients& grads, double learning_rate);

  std::int64_t parameter_count() const;

 private:
  SpdNetConfig config_;
  std::vector<SpdLayer> layers_;
  LinearHead head_;
};

struct SpdNetTrainResult {
  SpdNetModel model;  // weights with the best validation accuracy
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

/// Softmax cross-entropy training; throws TrainingDiverged on a non-finite
/// loss. Validation accuracy is measured on the weights each epoch's
/// gradients are computed from.
SpdNetTrainResult spdnet_train(const SpdNetConfig& config, std::span<const LabeledSpd> train,
                               std::span<const LabeledSpd> validation);

double accuracy(const SpdNetModel& model, std::span<const LabeledSpd> data);

}  // namespace spdsemg
