#include "spdsemg/spdnet.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "spdsemg/error.hpp"
#include "spdsemg/random.hpp"
#include "train_loop.hpp"

namespace spdsemg {

namespace {

constexpr double kStiefelTolerance = 1e-6;

double reeig_value(double s, double eps) { return s > eps ? s : eps; }

}  // namespace

StiefelParameter::StiefelParameter(Matrix w) : w_(std::move(w)) {
  require(w_.cols() >= 1 && w_.cols() <= w_.rows(), ErrorCode::InvalidInput,
          "StiefelParameter: need 1 <= cols <= rows");
  require(w_.allFinite() && orthogonality_error(w_) <= kStiefelTolerance,
          ErrorCode::InvalidInput, "StiefelParameter: columns are not orthonormal");
}

StiefelParameter StiefelParameter::from_matrix(const Matrix& m) {
  return StiefelParameter(gram_schmidt(m));
}

SymMatrix bimap_forward(const SymMatrix& e, const StiefelParameter& w) {
  require(e.dim() == w.rows(), ErrorCode::InvalidInput, "bimap_forward: dimension mismatch");
  return SymMatrix(w.matrix().transpose() * e.matrix() * w.matrix());
}

SymMatrix reeig_forward(const SymMatrix& e, double eps) {
  require(eps > 0.0, ErrorCode::InvalidInput, "reeig_forward: eps must be positive");
  return apply_matfun(sym_eig(e), [eps](double s) { return reeig_value(s, eps); });
}

SymMatrix logeig_forward(const SymMatrix& e) {
  const EigPair pair = sym_eig(e);
  require(pair.sigma.size() > 0 && pair.sigma.minCoeff() > 0.0, ErrorCode::NotPositiveDefinite,
          "logeig_forward: input is not positive definite");
  return apply_matfun(pair, [](double s) { return std::log(s); });
}

Matrix stiefel_grad(const Matrix& g_eucl, const Matrix& w) {
  require(g_eucl.rows() == w.rows() && g_eucl.cols() == w.cols(), ErrorCode::InvalidInput,
          "stiefel_grad: shape mismatch");
  return g_eucl - w * g_eucl.transpose() * w;
}

StiefelParameter stiefel_step(const StiefelParameter& w, const Matrix& tangent_grad, double lr) {
  require(lr > 0.0, ErrorCode::InvalidInput, "stiefel_step: learning rate must be positive");
  require(tangent_grad.rows() == w.rows() && tangent_grad.cols() == w.cols(),
          ErrorCode::InvalidInput, "stiefel_step: shape mismatch");
  return StiefelParameter(gram_schmidt(w.matrix() - lr * tangent_grad));
}

LayerForward layer_forward(const SpdLayer& layer, const SymMatrix& input) {
  return std::visit(
      [&](const auto& l) -> LayerForward {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, BiMapLayer>) {
          return {bimap_forward(input, l.weight), LayerCache{input, std::nullopt}};
        } else if constexpr (std::is_same_v<T, ReEigLayer>) {
          require(l.eps > 0.0, ErrorCode::InvalidInput, "ReEig: eps must be positive");
          EigPair pair = sym_eig(input);
          const double eps = l.eps;
          SymMatrix out = apply_matfun(pair, [eps](double s) { return reeig_value(s, eps); });
          return {std::move(out), LayerCache{input, std::move(pair)}};
        } else {
          EigPair pair = sym_eig(input);
          require(pair.sigma.minCoeff() > 0.0, ErrorCode::NotPositiveDefinite,
                  "LogEig: input is not positive definite");
          SymMatrix out = apply_matfun(pair, [](double s) { return std::log(s); });
          return {std::move(out), LayerCache{input, std::move(pair)}};
        }
      },
      layer);
}

LayerGradient layer_backward(const SpdLayer& layer, const LayerCache& cache,
                             const SymMatrix& g_out) {
  return std::visit(
      [&](const auto& l) -> LayerGradient {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, BiMapLayer>) {
          const Matrix& w = l.weight.matrix();
          require(g_out.dim() == w.cols(), ErrorCode::InvalidInput,
                  "BiMap backward: gradient shape mismatch");
          Matrix param = 2.0 * cache.input.matrix() * w * g_out.matrix();
          return {SymMatrix(w * g_out.matrix() * w.transpose()), std::move(param)};
        } else if constexpr (std::is_same_v<T, ReEigLayer>) {
          const double eps = l.eps;
          return {matfun_backprop(
                      *cache.eig, [eps](double s) { return reeig_value(s, eps); },
                      [eps](double s) { return s > eps ? 1.0 : 0.0; }, g_out),
                  std::nullopt};
        } else {
          return {matfun_backprop(
                      *cache.eig, [](double s) { return std::log(s); },
                      [](double s) { return 1.0 / s; }, g_out),
                  std::nullopt};
        }
      },
      layer);
}

Vector halfvec(const SymMatrix& m) {
  const int d = m.dim();
  Vector out(d * (d + 1) / 2);
  int k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) out(k++) = std::numbers::sqrt2 * m(i, j);
    out(k++) = m(i, i);
  }
  return out;
}

SymMatrix halfvec_backward(const Vector& g, int dim) {
  require(g.size() == dim * (dim + 1) / 2, ErrorCode::InvalidInput,
          "halfvec_backward: length mismatch");
  Matrix out(dim, dim);
  int k = 0;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < i; ++j) {
      const double v = g(k++) / std::numbers::sqrt2;
      out(i, j) = v;
      out(j, i) = v;
    }
    out(i, i) = g(k++);
  }
  return SymMatrix(out);
}

Vector classify_forward(const SymMatrix& m, const LinearHead& head) {
  const int d = m.dim();
  require(head.features() == d * (d + 1) / 2 && head.bias.size() == head.classes(),
          ErrorCode::InvalidInput, "classify_forward: head width mismatch");
  return head.weight * halfvec(m) + head.bias;
}

HeadGradient classify_backward(const SymMatrix& m, const LinearHead& head,
                               const Vector& g_logits) {
  require(g_logits.size() == head.classes(), ErrorCode::InvalidInput,
          "classify_backward: gradient length mismatch");
  const Vector features = halfvec(m);
  require(features.size() == head.features(), ErrorCode::InvalidInput,
          "classify_backward: head width mismatch");
  return HeadGradient{halfvec_backward(head.weight.transpose() * g_logits, m.dim()),
                      g_logits * features.transpose(), g_logits};
}

void SpdNetConfig::validate() const {
  require(dims.size() >= 2, ErrorCode::ConfigError,
          "SpdNetConfig: dims needs an input size and at least one BiMap output");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    require(dims[i] >= 1, ErrorCode::ConfigError, "SpdNetConfig: dims must be positive");
    if (i > 0) {
      require(dims[i] <= dims[i - 1], ErrorCode::ConfigError,
              "SpdNetConfig: BiMap dims must be non-increasing");
    }
  }
  require(eps > 0.0, ErrorCode::ConfigError, "SpdNetConfig: eps must be positive");
  require(classes >= 1, ErrorCode::ConfigError, "SpdNetConfig: classes must be positive");
  require(learning_rate > 0.0, ErrorCode::ConfigError, "SpdNetConfig: learning rate must be positive");
  require(epochs >= 1, ErrorCode::ConfigError, "SpdNetConfig: epochs must be positive");
  require(batch_size >= 0, ErrorCode::ConfigError, "SpdNetConfig: batch size must be >= 0");
}

SpdNetModel::SpdNetModel(SpdNetConfig config, std::vector<SpdLayer> layers, LinearHead head)
    : config_(std::move(config)), layers_(std::move(layers)), head_(std::move(head)) {
  config_.validate();
  // Layer chain must be (BiMap ReEig)+ LogEig with matching sizes.
  const std::size_t stages = config_.dims.size() - 1;
  require(layers_.size() == 2 * stages + 1, ErrorCode::InvalidInput,
          "SpdNetModel: layer count does not match config");
  for (std::size_t s = 0; s < stages; ++s) {
    const auto* bimap = std::get_if<BiMapLayer>(&layers_[2 * s]);
    require(bimap != nullptr && std::holds_alternative<ReEigLayer>(layers_[2 * s + 1]),
            ErrorCode::InvalidInput, "SpdNetModel: expected BiMap followed by ReEig");
    require(bimap->weight.rows() == config_.dims[s] && bimap->weight.cols() == config_.dims[s + 1],
            ErrorCode::InvalidInput, "SpdNetModel: BiMap shape does not match config");
  }
  require(std::holds_alternative<LogEigLayer>(layers_.back()), ErrorCode::InvalidInput,
          "SpdNetModel: last layer must be LogEig");
  require(head_.features() == config_.head_width() && head_.classes() == config_.classes &&
              head_.bias.size() == config_.classes,
          ErrorCode::InvalidInput, "SpdNetModel: head shape does not match config");
}

SpdNetModel SpdNetModel::initialize(const SpdNetConfig& config) {
  config.validate();
  Pcg32 rng(config.seed);
  std::vector<SpdLayer> layers;
  for (std::size_t s = 0; s + 1 < config.dims.size(); ++s) {
    Matrix m(config.dims[s], config.dims[s + 1]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
    }
    layers.emplace_back(BiMapLayer{StiefelParameter::from_matrix(m)});
    layers.emplace_back(ReEigLayer{config.eps});
  }
  layers.emplace_back(LogEigLayer{});
  LinearHead head{Matrix(config.classes, config.head_width()), Vector::Zero(config.classes)};
  for (Eigen::Index j = 0; j < head.weight.cols(); ++j) {
    for (Eigen::Index i = 0; i < head.weight.rows(); ++i) {
      head.weight(i, j) = config.head_init_scale * rng.normal();
    }
  }
  return SpdNetModel(config, std::move(layers), std::move(head));
}

const Matrix& SpdNetModel::first_bimap() const {
  return std::get<BiMapLayer>(layers_.front()).weight.matrix();
}

SymMatrix SpdNetModel::features(const SymMatrix& input) const {
  require(input.dim() == config_.dims.front(), ErrorCode::InvalidInput,
          "SpdNetModel: input dimension mismatch");
  SymMatrix x = input;
  for (const auto& layer : layers_) x = layer_forward(layer, x).output;
  return x;
}

Vector SpdNetModel::forward(const SymMatrix& input) const {
  return classify_forward(features(input), head_);
}

SpdNetModel::Gradients SpdNetModel::zero_gradients() const {
  Gradients g;
  for (const auto& layer : layers_) {
    if (const auto* bimap = std::get_if<BiMapLayer>(&layer)) {
      g.bimap.push_back(Matrix::Zero(bimap->weight.rows(), bimap->weight.cols()));
    }
  }
  g.head_weight = Matrix::Zero(head_.weight.rows(), head_.weight.cols());
  g.head_bias = Vector::Zero(head_.bias.size());
  return g;
}

double SpdNetModel::accumulate_gradients(const SymMatrix& input, int label, double scale,
                                         Gradients& accum, Vector* logits_out) const {
  require(input.dim() == config_.dims.front(), ErrorCode::InvalidInput,
          "SpdNetModel: input dimension mismatch");
  std::vector<LayerCache> caches;
  caches.reserve(layers_.size());
  SymMatrix x = input;
  for (const auto& layer : layers_) {
    LayerForward step = layer_forward(layer, x);
    caches.push_back(std::move(step.cache));
    x = std::move(step.output);
  }
  const Vector logits = classify_forward(x, head_);
  if (logits_out != nullptr) *logits_out = logits;
  const SoftmaxLoss loss = softmax_cross_entropy(logits, label);

  HeadGradient head_grad = classify_backward(x, head_, loss.grad);
  accum.head_weight += scale * head_grad.weight_grad;
  accum.head_bias += scale * head_grad.bias_grad;

  SymMatrix g = std::move(head_grad.input_grad);
  std::size_t bimap_index = accum.bimap.size();
  for (std::size_t i = layers_.size(); i-- > 0;) {
    LayerGradient lg = layer_backward(layers_[i], caches[i], g);
    if (lg.param_grad) accum.bimap[--bimap_index] += scale * *lg.param_grad;
    g = std::move(lg.input_grad);
  }
  return loss.loss;
}

void SpdNetModel::apply_gradients(const Gradients& grads, double learning_rate) {
  std::size_t bimap_index = 0;
  for (auto& layer : layers_) {
    if (auto* bimap = std::get_if<BiMapLayer>(&layer)) {
      const Matrix& g = grads.bimap[bimap_index++];
      bimap->weight =
          stiefel_step(bimap->weight, stiefel_grad(g, bimap->weight.matrix()), learning_rate);
    }
  }
  head_.weight -= learning_rate * grads.head_weight;
  head_.bias -= learning_rate * grads.head_bias;
}

std::int64_t SpdNetModel::parameter_count() const {
  std::int64_t count = head_.weight.size() + head_.bias.size();
  for (const auto& layer : layers_) {
    if (const auto* bimap = std::get_if<BiMapLayer>(&layer)) count += bimap->weight.matrix().size();
  }
  return count;
}

double accuracy(const SpdNetModel& model, std::span<const LabeledSpd> data) {
  return detail::model_accuracy(model, data, [](const LabeledSpd& s) -> const SymMatrix& {
    return s.matrix;
  });
}

SpdNetTrainResult spdnet_train(const SpdNetConfig& config, std::span<const LabeledSpd> train,
                               std::span<const LabeledSpd> validation) {
  config.validate();
  require(!train.empty() && !validation.empty(), ErrorCode::InvalidInput,
          "spdnet_train: training and validation sets must be non-empty");
  for (const auto* set : {&train, &validation}) {
    for (const auto& s : *set) {
      require(s.label >= 0 && s.label < config.classes, ErrorCode::InvalidInput,
              "spdnet_train: label outside class range");
    }
  }
  detail::LoopSettings settings{config.epochs, config.batch_size, config.learning_rate,
                                config.seed, "spdnet_train"};
  auto loop = detail::run_training(SpdNetModel::initialize(config), train, validation, settings,
                                   [](const LabeledSpd& s) -> const SymMatrix& { return s.matrix; });
  return SpdNetTrainResult{std::move(loop.best), std::move(loop.history), loop.best_epoch,
                           loop.best_val_accuracy};
}

}  // namespace spdsemg
