#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spdsemg/error.hpp"
#include "spdsemg/spdnet.hpp"
#include "support.hpp"

using namespace spdsemg;
using namespace spdsemg::testing;

namespace {

// Q diag(s) Q^T with a random orthogonal Q.
SymMatrix with_spectrum(Pcg32& rng, const Vector& s) {
  const int d = static_cast<int>(s.size());
  const Matrix q = random_orthonormal(rng, d, d);
  return SymMatrix(q * s.asDiagonal() * q.transpose());
}

// Eigenvalues 2^(d-1-i) * 0.05, spaced well apart from eps = 0.3.
Vector spread_spectrum(int d) {
  Vector s(d);
  for (int i = 0; i < d; ++i) s(i) = 0.05 * std::pow(2.0, d - 1 - i) + 0.01 * i;
  return s;
}

double pair(const SymMatrix& g, const SymMatrix& x) {
  return (g.matrix().array() * x.matrix().array()).sum();
}

// FD check of a symmetric-input layer against the loss <G, layer(X)>.
void check_layer_input_grad(const SpdLayer& layer, const SymMatrix& x, const SymMatrix& g) {
  const int d = x.dim();
  const LayerForward fwd = layer_forward(layer, x);
  const LayerGradient back = layer_backward(layer, fwd.cache, g);
  auto loss = [&](const Vector& v) {
    return pair(g, layer_forward(layer, SymMatrix(sym_from_lower_entries(v, d))).output);
  };
  const Vector fd = numeric_gradient(loss, lower_entries(x.matrix()));
  EXPECT_LE(rel_error(lower_gradient(back.input_grad), fd), 1e-4) << "d=" << d;
}

std::vector<LabeledSpd> clustered_set(Pcg32& rng, int dim, int classes, int per_class,
                                      double sigma) {
  std::vector<CholeskyPoint> centers;
  for (int c = 0; c < classes; ++c) centers.push_back(random_point(rng, dim, 1.0));
  std::vector<LabeledSpd> out;
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < classes; ++c) {
      Vector v = flatten_tangent(chart_log(centers[static_cast<std::size_t>(c)]));
      for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += sigma * rng.normal();
      out.push_back({from_cholesky(chart_exp(unflatten_tangent(v))), c});
    }
  }
  return out;
}

}  // namespace

TEST(Stiefel, ParameterValidation) {
  Pcg32 rng(50);
  EXPECT_NO_THROW(StiefelParameter(random_orthonormal(rng, 5, 3)));
  EXPECT_THROW(StiefelParameter(random_matrix(rng, 5, 3)), Error);
  EXPECT_THROW(StiefelParameter(Matrix::Identity(2, 3)), Error);
  const StiefelParameter p = StiefelParameter::from_matrix(random_matrix(rng, 6, 4));
  EXPECT_LE(orthogonality_error(p.matrix()), 1e-12);
}

TEST(BiMap, ForwardAndIdentityWeight) {
  Pcg32 rng(51);
  const SymMatrix e = random_spd(rng, 5);
  EXPECT_LE(max_abs(bimap_forward(e, StiefelParameter(Matrix::Identity(5, 5))).matrix() -
                    e.matrix()),
            1e-15);
  const Matrix w = random_orthonormal(rng, 5, 3);
  const SymMatrix out = bimap_forward(e, StiefelParameter(w));
  EXPECT_EQ(out.dim(), 3);
  EXPECT_LE(max_abs(out.matrix() - w.transpose() * e.matrix() * w), 1e-13);
  EXPECT_GT(sym_eig(out).sigma.minCoeff(), 0.0);
}

TEST(BiMap, GradientsMatchFiniteDifferences) {
  Pcg32 rng(52);
  for (int d : {4, 6}) {
    for (int out_dim : {d, d - 2}) {
      const SymMatrix e = random_spd(rng, d);
      const Matrix w = random_orthonormal(rng, d, out_dim);
      const SymMatrix g(random_matrix(rng, out_dim, out_dim));
      const SpdLayer layer = BiMapLayer{StiefelParameter(w)};
      check_layer_input_grad(layer, e, g);

      const LayerGradient back = layer_backward(layer, layer_forward(layer, e).cache, g);
      auto loss_w = [&](const Vector& v) {
        const Matrix wm = unflat(v, d, out_dim);
        return pair(g, SymMatrix(wm.transpose() * e.matrix() * wm));
      };
      const Vector fd = numeric_gradient(loss_w, flat(w));
      EXPECT_LE(rel_error(flat(*back.param_grad), fd), 1e-4);
    }
  }
}

TEST(ReEig, FloorsSmallEigenvalues) {
  Vector s(3);
  s << 2.0, 1e-6, -3.0;
  Pcg32 rng(53);
  const SymMatrix x = with_spectrum(rng, s);
  const EigPair p = sym_eig(reeig_forward(x, 1e-4));
  EXPECT_NEAR(p.sigma(0), 2.0, 1e-12);
  EXPECT_NEAR(p.sigma(1), 1e-4, 1e-12);
  EXPECT_NEAR(p.sigma(2), 1e-4, 1e-12);
  EXPECT_THROW(reeig_forward(x, 0.0), Error);
}

TEST(ReEig, MinimumEigenvalueOnRandomSymmetric) {
  Pcg32 rng(54);
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + t % 21;
    const double eps = 1e-4;
    const SymMatrix out = reeig_forward(random_sym(rng, d), eps);
    EXPECT_GE(sym_eig(out).sigma.minCoeff(), eps - 1e-12);
  }
}

TEST(ReEig, GradientMatchesFiniteDifferences) {
  Pcg32 rng(55);
  for (int d : {4, 6}) {
    for (int t = 0; t < 3; ++t) {
      const SymMatrix x = with_spectrum(rng, spread_spectrum(d));
      const SymMatrix g(random_matrix(rng, d, d));
      check_layer_input_grad(ReEigLayer{0.3}, x, g);
    }
  }
}

TEST(LogEig, ForwardKnownValuesAndErrors) {
  Vector s(2);
  s << std::numbers::e, 1.0;
  const SymMatrix out = logeig_forward(SymMatrix::diagonal(s));
  EXPECT_NEAR(out(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(out(1, 1), 0.0, 1e-15);
  Vector bad(2);
  bad << 1.0, -1.0;
  try {
    logeig_forward(SymMatrix::diagonal(bad));
    FAIL() << "expected NotPositiveDefinite";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPositiveDefinite);
  }
}

TEST(LogEig, GradientMatchesFiniteDifferences) {
  Pcg32 rng(56);
  for (int d : {4, 6}) {
    for (int t = 0; t < 3; ++t) {
      const SymMatrix x = random_spd(rng, d, 0.5);
      const SymMatrix g(random_matrix(rng, d, d));
      check_layer_input_grad(LogEigLayer{}, x, g);
    }
  }
}

TEST(Halfvec, NormAndLayout) {
  Matrix m(3, 3);
  m << 1, 2, 4, 2, 3, 5, 4, 5, 6;
  const Vector v = halfvec(SymMatrix(m));
  const double r = std::numbers::sqrt2;
  Vector expected(6);
  expected << 1, 2 * r, 3, 4 * r, 5 * r, 6;
  EXPECT_LE((v - expected).norm(), 1e-14);
  EXPECT_NEAR(v.norm(), m.norm(), 1e-13);
  const SymMatrix back = halfvec_backward(v, 3);
  // <halfvec(M), v> equals <M, halfvec_backward(v)>.
  EXPECT_NEAR(v.dot(v), pair(SymMatrix(m), back), 1e-12);
}

TEST(Head, GradientsMatchFiniteDifferences) {
  Pcg32 rng(57);
  for (int d : {4, 6}) {
    const int width = d * (d + 1) / 2;
    const SymMatrix m = random_sym(rng, d);
    LinearHead head{random_matrix(rng, 5, width, 0.3), random_vector(rng, 5, 0.3)};
    const int label = 2;
    const SoftmaxLoss base = softmax_cross_entropy(classify_forward(m, head), label);
    const HeadGradient g = classify_backward(m, head, base.grad);

    auto loss_m = [&](const Vector& v) {
      return softmax_cross_entropy(classify_forward(SymMatrix(sym_from_lower_entries(v, d)), head),
                                   label)
          .loss;
    };
    EXPECT_LE(rel_error(lower_gradient(g.input_grad),
                        numeric_gradient(loss_m, lower_entries(m.matrix()))),
              1e-4);

    auto loss_w = [&](const Vector& v) {
      LinearHead h = head;
      h.weight = unflat(v, 5, width);
      return softmax_cross_entropy(classify_forward(m, h), label).loss;
    };
    EXPECT_LE(rel_error(flat(g.weight_grad), numeric_gradient(loss_w, flat(head.weight))), 1e-4);

    auto loss_b = [&](const Vector& v) {
      LinearHead h = head;
      h.bias = v;
      return softmax_cross_entropy(classify_forward(m, h), label).loss;
    };
    EXPECT_LE(rel_error(g.bias_grad, numeric_gradient(loss_b, head.bias)), 1e-4);
  }
}

TEST(SoftmaxCrossEntropy, StableForLargeLogits) {
  Vector logits(3);
  logits << 1000.0, 0.0, -1000.0;
  const SoftmaxLoss l = softmax_cross_entropy(logits, 0);
  EXPECT_NEAR(l.loss, 0.0, 1e-12);
  EXPECT_TRUE(l.grad.allFinite());
  EXPECT_NEAR(softmax_cross_entropy(logits, 1).loss, 1000.0, 1e-9);
  Vector tie = Vector::Zero(4);
  EXPECT_EQ(argmax(tie), 0);
}

TEST(Model, FullGradientMatchesFiniteDifferences) {
  Pcg32 rng(58);
  for (int d : {4, 6}) {
    SpdNetConfig cfg;
    cfg.dims = {d, d - 1, d - 2};
    cfg.classes = 3;
    cfg.eps = 1e-4;
    cfg.head_init_scale = 0.5;
    cfg.seed = 5;
    const SpdNetModel model = SpdNetModel::initialize(cfg);
    const SymMatrix x = random_spd(rng, d, 0.5);
    auto grads = model.zero_gradients();
    model.accumulate_gradients(x, 1, 1.0, grads);

    for (std::size_t b = 0; b < 2; ++b) {
      const Matrix w0 = std::get<BiMapLayer>(model.layers()[2 * b]).weight.matrix();
      auto loss = [&](const Vector& v) {
        // Evaluate with an unconstrained weight: the Euclidean gradient.
        SymMatrix h = x;
        for (std::size_t i = 0; i < model.layers().size(); ++i) {
          if (i == 2 * b) {
            const Matrix w = unflat(v, w0.rows(), w0.cols());
            h = SymMatrix(w.transpose() * h.matrix() * w);
          } else {
            h = layer_forward(model.layers()[i], h).output;
          }
        }
        return softmax_cross_entropy(classify_forward(h, model.head()), 1).loss;
      };
      EXPECT_LE(rel_error(flat(grads.bimap[b]), numeric_gradient(loss, flat(w0))), 1e-4)
          << "d=" << d << " bimap " << b;
    }
  }
}

TEST(Stiefel, GradientIsTangentAndStepsStayOrthonormal) {
  Pcg32 rng(59);
  for (int t = 0; t < 5; ++t) {
    StiefelParameter w(random_orthonormal(rng, 8, 5));
    const Matrix target = random_matrix(rng, 8, 5);
    for (int step = 0; step < 100; ++step) {
      // Random quadratic loss ||W - T||^2 with a fresh perturbation each step.
      const Matrix g = 2.0 * (w.matrix() - target) + 0.1 * random_matrix(rng, 8, 5);
      const Matrix r = stiefel_grad(g, w.matrix());
      const Matrix sym_part = w.matrix().transpose() * r + r.transpose() * w.matrix();
      EXPECT_LE(max_abs(sym_part), 1e-10);
      w = stiefel_step(w, r, 0.05);
      ASSERT_LE(max_abs(w.matrix().transpose() * w.matrix() - Matrix::Identity(5, 5)), 1e-6);
    }
  }
}

TEST(Model, DefaultParameterCount) {
  const SpdNetModel model = SpdNetModel::initialize(SpdNetConfig{});
  // 22x22 BiMap, 36 x 253 head weight, 36 biases.
  EXPECT_EQ(model.parameter_count(), 22 * 22 + 36 * 253 + 36);
  EXPECT_GE(model.parameter_count(), 5000);
  EXPECT_LE(model.parameter_count(), 11000);
}

TEST(Model, OverfitsSeparableSet) {
  Pcg32 rng(60);
  const std::vector<LabeledSpd> data = clustered_set(rng, 6, 5, 10, 0.1);
  ASSERT_EQ(data.size(), 50u);
  SpdNetConfig cfg;
  cfg.dims = {6, 6};
  cfg.classes = 5;
  cfg.learning_rate = 0.05;
  cfg.epochs = 300;
  cfg.head_init_scale = 0.01;
  cfg.seed = 1;
  const SpdNetTrainResult r = spdnet_train(cfg, data, data);
  int first_perfect = -1;
  for (const auto& m : r.history) {
    if (m.train_accuracy == 1.0) {
      first_perfect = m.epoch;
      break;
    }
  }
  EXPECT_GE(first_perfect, 0);
  EXPECT_EQ(accuracy(r.model, data), 1.0);
  for (const auto& layer : r.model.layers()) {
    if (const auto* b = std::get_if<BiMapLayer>(&layer)) {
      EXPECT_LE(orthogonality_error(b->weight.matrix()), 1e-6);
    }
  }
}

TEST(Model, DeterministicForSeed) {
  Pcg32 rng(61);
  const std::vector<LabeledSpd> data = clustered_set(rng, 4, 3, 5, 0.2);
  SpdNetConfig cfg;
  cfg.dims = {4, 3};
  cfg.classes = 3;
  cfg.epochs = 20;
  cfg.batch_size = 4;
  cfg.seed = 9;
  const SpdNetTrainResult a = spdnet_train(cfg, data, data);
  const SpdNetTrainResult b = spdnet_train(cfg, data, data);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].loss, b.history[i].loss);
  EXPECT_EQ(a.model.head().weight, b.model.head().weight);
}

TEST(Model, ConfigValidation) {
  SpdNetConfig cfg;
  cfg.dims = {4, 5};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.dims = {4};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.dims = {4, 4};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}
