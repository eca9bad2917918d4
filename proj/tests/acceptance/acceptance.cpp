#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "spdsemg/analysis.hpp"
#include "spdsemg/decoders.hpp"
#include "spdsemg/error.hpp"
#include "spdsemg/gru.hpp"
#include "spdsemg/pipeline.hpp"
#include "spdsemg/signal_graph.hpp"
#include "spdsemg/spdnet.hpp"
#include "support.hpp"

using namespace spdsemg;
using namespace spdsemg::testing;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

Outcome verdict(bool ok, std::string detail) {
  return Outcome{ok ? Status::Pass : Status::Fail, std::move(detail)};
}

// Chart coordinates computed directly from the factor entries.
Vector coords_of(const Matrix& l) {
  const auto d = l.rows();
  Vector out(d * (d + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) out(k++) = l(i, j);
  }
  for (Eigen::Index i = 0; i < d; ++i) out(k++) = std::log(l(i, i));
  return out;
}

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

CholeskyPoint shifted(Pcg32& rng, const CholeskyPoint& center, double sigma) {
  Vector v = flatten_tangent(chart_log(center));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += sigma * rng.normal();
  return chart_exp(unflatten_tangent(v));
}

template <typename P>
Vector pack(const P& p) {
  std::vector<double> v;
  visit_tensors(p, [&](auto s) { v.insert(v.end(), s.begin(), s.end()); });
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <typename P>
P unpacked(P p, const Vector& v) {
  Eigen::Index k = 0;
  visit_tensors(p, [&](auto s) {
    for (auto& x : s) x = v(k++);
  });
  return p;
}

double pair(const SymMatrix& g, const SymMatrix& x) {
  return (g.matrix().array() * x.matrix().array()).sum();
}

Vector tri_flat(const TriGate& g) {
  Vector out(g.strict.size() + g.diag.size());
  out << g.strict, g.diag;
  return out;
}

TriGate tri_from_flat(const Vector& v, int d) { return TriGate{v.head(strict_size(d)), v.tail(d)}; }

// ---- criteria ------------------------------------------------------------------

Outcome geometry_axioms() {
  Pcg32 rng(1001);
  double worst_self = 0.0;
  double worst_triangle = -1e300;
  bool symmetric = true;
  for (int t = 0; t < 1000; ++t) {
    const int d = 2 + static_cast<int>(rng.below(21));
    const CholeskyPoint x = random_point(rng, d);
    const CholeskyPoint y = random_point(rng, d);
    const CholeskyPoint z = random_point(rng, d);
    symmetric = symmetric && geodesic_distance(x, y) == geodesic_distance(y, x);
    worst_self = std::max(worst_self, geodesic_distance(x, x));
    worst_triangle = std::max(worst_triangle, geodesic_distance(x, z) - geodesic_distance(x, y) -
                                                  geodesic_distance(y, z));
  }
  return verdict(symmetric && worst_self <= 1e-12 && worst_triangle <= 1e-12,
                 std::string("symmetric=") + (symmetric ? "yes" : "no") + " max d(x,x)=" +
                     fmt("%.2e", worst_self) + " max triangle excess=" + fmt("%.2e", worst_triangle));
}

Outcome frechet_mean_minimizes() {
  Pcg32 rng(1002);
  double worst_gap = 0.0;
  for (int s = 0; s < 10; ++s) {
    const int d = 2 + static_cast<int>(rng.below(21));
    const int n = 3 + static_cast<int>(rng.below(28));
    std::vector<CholeskyPoint> pts;
    std::vector<Vector> coords;
    for (int i = 0; i < n; ++i) {
      pts.push_back(random_point(rng, d));
      coords.push_back(coords_of(pts.back().factor()));
    }
    auto objective = [&](const Vector& x) {
      double f = 0.0;
      for (const Vector& c : coords) f += (x - c).squaredNorm();
      return f;
    };
    Vector x = coords.front();
    const double step = 0.1 / n;
    for (int it = 0; it < 100000; ++it) {
      Vector grad = Vector::Zero(x.size());
      for (const Vector& c : coords) grad += 2.0 * (x - c);
      if (grad.norm() < 1e-12) break;
      x -= step * grad;
    }
    const double f_gd = objective(x);
    const double f_closed = objective(coords_of(frechet_mean(pts).factor()));
    worst_gap = std::max(worst_gap, (f_closed - f_gd) / f_gd);
  }
  return verdict(worst_gap <= 1e-6, "max relative objective gap " + fmt("%.2e", worst_gap));
}

Outcome regularization() {
  Pcg32 rng(1003);
  double worst_min = 1e300;
  double worst_formula = 0.0;
  bool exact = true;
  for (int t = 0; t < 100; ++t) {
    const int d = 3 + static_cast<int>(rng.below(20));
    const int k = 2 + static_cast<int>(rng.below(static_cast<std::uint32_t>(d - 2)));
    const SymMatrix e = edge_matrix(random_matrix(rng, d, k), false);
    exact = exact && regularize(e, 0.0).matrix() == e.matrix();
    for (double eta : {0.1, 0.15, 0.2}) {
      const Matrix r = regularize(e, eta).matrix();
      const Matrix expected = (1.0 - eta) * e.matrix() + eta * e.matrix().trace() * Matrix::Identity(d, d);
      worst_min = std::min(worst_min, min_eigenvalue(r));
      worst_formula = std::max(worst_formula, max_abs(r - expected) / max_abs(expected));
    }
  }
  return verdict(exact && worst_min > 0.0 && worst_formula <= 1e-14,
                 std::string("eta=0 bit-exact=") + (exact ? "yes" : "no") + " min eigenvalue " +
                     fmt("%.3e", worst_min) + " formula rel err " + fmt("%.1e", worst_formula));
}

Outcome gradient_checks() {
  Pcg32 rng(1004);
  double worst = 0.0;
  std::string worst_name = "none";
  auto record = [&](const std::string& name, const Vector& analytic, const Vector& numeric) {
    const double e = rel_error(analytic, numeric);
    if (e > worst || !std::isfinite(e)) {
      worst = std::isfinite(e) ? e : 1e300;
      worst_name = name;
    }
  };
  auto input_check = [&](const std::string& name, const SpdLayer& layer, const SymMatrix& x) {
    const int d = x.dim();
    const SymMatrix g(random_matrix(rng, layer_forward(layer, x).output.dim(),
                                    layer_forward(layer, x).output.dim()));
    const LayerGradient back = layer_backward(layer, layer_forward(layer, x).cache, g);
    const Vector fd = numeric_gradient(
        [&](const Vector& v) { return pair(g, layer_forward(layer, SymMatrix(sym_from_lower_entries(v, d))).output); },
        lower_entries(x.matrix()));
    record(name, lower_gradient(back.input_grad), fd);
    return back;
  };

  for (int d : {4, 6}) {
    const std::string tag = " d=" + std::to_string(d);
    // BiMap, input and weight.
    const SymMatrix e = random_spd(rng, d);
    const Matrix w = random_orthonormal(rng, d, d - 2);
    const SpdLayer bimap = BiMapLayer{StiefelParameter(w)};
    const SymMatrix gw(random_matrix(rng, d - 2, d - 2));
    input_check("bimap input" + tag, bimap, e);
    const LayerGradient bb = layer_backward(bimap, layer_forward(bimap, e).cache, gw);
    record("bimap weight" + tag, flat(*bb.param_grad),
           numeric_gradient(
               [&](const Vector& v) {
                 const Matrix wm = unflat(v, d, d - 2);
                 return pair(gw, SymMatrix(wm.transpose() * e.matrix() * wm));
               },
               flat(w)));

    // ReEig on a spectrum that straddles eps and keeps eigenvalues apart.
    Vector s(d);
    for (int i = 0; i < d; ++i) s(i) = 0.05 * std::pow(2.0, d - 1 - i) + 0.01 * i;
    const Matrix q = random_orthonormal(rng, d, d);
    input_check("reeig" + tag, ReEigLayer{0.3}, SymMatrix(q * s.asDiagonal() * q.transpose()));
    input_check("logeig" + tag, LogEigLayer{}, random_spd(rng, d, 0.5));

    // Classifier head.
    const int width = d * (d + 1) / 2;
    const SymMatrix m = random_sym(rng, d);
    const LinearHead head{random_matrix(rng, 5, width, 0.3), random_vector(rng, 5, 0.3)};
    const HeadGradient hg = classify_backward(m, head, softmax_cross_entropy(classify_forward(m, head), 2).grad);
    auto head_loss = [&](const SymMatrix& mm, const LinearHead& hh) {
      return softmax_cross_entropy(classify_forward(mm, hh), 2).loss;
    };
    record("head input" + tag, lower_gradient(hg.input_grad),
           numeric_gradient([&](const Vector& v) { return head_loss(SymMatrix(sym_from_lower_entries(v, d)), head); },
                            lower_entries(m.matrix())));
    record("head weight" + tag, flat(hg.weight_grad), numeric_gradient(
                                                          [&](const Vector& v) {
                                                            LinearHead h = head;
                                                            h.weight = unflat(v, 5, width);
                                                            return head_loss(m, h);
                                                          },
                                                          flat(head.weight)));
    record("head bias" + tag, hg.bias_grad, numeric_gradient(
                                                [&](const Vector& v) {
                                                  LinearHead h = head;
                                                  h.bias = v;
                                                  return head_loss(m, h);
                                                },
                                                head.bias));

    // GRU gates (update, reset) and candidate.
    GruParams params = GruParams::zeros(d);
    params.z = unpacked(params.z, random_vector(rng, static_cast<int>(pack(params.z).size()), 0.5));
    params.r = unpacked(params.r, random_vector(rng, static_cast<int>(pack(params.r).size()), 0.5));
    params.h = unpacked(params.h, random_vector(rng, static_cast<int>(pack(params.h).size()), 0.5));
    const ChartParts l = ChartParts::from_flat(random_vector(rng, tri_size(d), 0.5));
    const ChartParts h = ChartParts::from_flat(random_vector(rng, tri_size(d), 0.5));
    TriGate probe{Vector(strict_size(d)), Vector(d)};
    for (Eigen::Index i = 0; i < probe.strict.size(); ++i) probe.strict(i) = rng.uniform(0.1, 0.9);
    for (Eigen::Index i = 0; i < probe.diag.size(); ++i) probe.diag(i) = rng.uniform(0.1, 0.9);
    for (const auto& [name, gate] : {std::pair<std::string, const GateParams*>{"gate z", &params.z},
                                     std::pair<std::string, const GateParams*>{"gate r", &params.r}}) {
      GateTrace trace;
      gate_forward(*gate, l, h, &trace);
      const GateBackward back = gate_backward(*gate, trace, probe);
      auto loss = [&](const GateParams& pp, const ChartParts& ll, const ChartParts& hh) {
        return tri_flat(gate_forward(pp, ll, hh)).dot(tri_flat(probe));
      };
      record(name + " params" + tag, pack(back.param_grad),
             numeric_gradient([&](const Vector& v) { return loss(unpacked(*gate, v), l, h); }, pack(*gate)));
      record(name + " input" + tag, back.l_grad.flat(),
             numeric_gradient([&](const Vector& v) { return loss(*gate, ChartParts::from_flat(v), h); }, l.flat()));
      record(name + " hidden" + tag, back.h_grad.flat(),
             numeric_gradient([&](const Vector& v) { return loss(*gate, l, ChartParts::from_flat(v)); }, h.flat()));
    }
    const ChartParts gc = ChartParts::from_flat(random_vector(rng, tri_size(d)));
    {
      CandidateTrace trace;
      candidate_forward(params.h, l, probe, h, &trace);
      const CandidateBackward back = candidate_backward(params.h, trace, gc);
      auto loss = [&](const GateParams& pp, const ChartParts& ll, const TriGate& rr, const ChartParts& hh) {
        return candidate_forward(pp, ll, rr, hh).flat().dot(gc.flat());
      };
      record("candidate params" + tag, pack(back.param_grad),
             numeric_gradient([&](const Vector& v) { return loss(unpacked(params.h, v), l, probe, h); },
                              pack(params.h)));
      record("candidate reset" + tag, tri_flat(back.r_grad),
             numeric_gradient([&](const Vector& v) { return loss(params.h, l, tri_from_flat(v, d), h); },
                              tri_flat(probe)));
      record("candidate hidden" + tag, back.h_grad.flat(),
             numeric_gradient([&](const Vector& v) { return loss(params.h, l, probe, ChartParts::from_flat(v)); },
                              h.flat()));
    }

    // output_combine.
    const ChartParts cand = ChartParts::from_flat(random_vector(rng, tri_size(d), 0.5));
    const CombineBackward cb = output_combine_backward(probe, cand, h, gc);
    auto combine_loss = [&](const TriGate& z, const ChartParts& c, const ChartParts& hh) {
      return output_combine_coords(z, c, hh).flat().dot(gc.flat());
    };
    record("output_combine gate" + tag, tri_flat(cb.z_grad),
           numeric_gradient([&](const Vector& v) { return combine_loss(tri_from_flat(v, d), cand, h); },
                            tri_flat(probe)));
    record("output_combine candidate" + tag, cb.candidate_grad.flat(),
           numeric_gradient([&](const Vector& v) { return combine_loss(probe, ChartParts::from_flat(v), h); },
                            cand.flat()));
    record("output_combine hidden" + tag, cb.h_grad.flat(),
           numeric_gradient([&](const Vector& v) { return combine_loss(probe, cand, ChartParts::from_flat(v)); },
                            h.flat()));

    // ode_evolve: state through chart_exp / chart_log, and field parameters.
    const int n = tri_size(d);
    const OdeField field{random_matrix(rng, 8, n, 0.4), random_vector(rng, 8, 0.4),
                         random_matrix(rng, n, 8, 0.4), random_vector(rng, n, 0.4)};
    const Vector x0 = random_vector(rng, n);
    const Vector go = random_vector(rng, n);
    OdeTrace trace;
    ode_solve(field, x0, 0.0, 1.0, 5, &trace);
    const OdeBackward ob = ode_backward(field, trace, go);
    auto evolve = [&](const OdeField& f, const Vector& v) {
      return flatten_tangent(chart_log(ode_evolve(chart_exp(unflatten_tangent(v)), f, 0.0, 1.0, 5))).dot(go);
    };
    record("ode_evolve state" + tag, ob.x_grad,
           numeric_gradient([&](const Vector& v) { return evolve(field, v); }, x0));
    record("ode_evolve field" + tag, pack(ob.param_grad),
           numeric_gradient([&](const Vector& v) { return evolve(unpacked(field, v), x0); }, pack(field)));
  }
  return verdict(worst <= 1e-4, "max relative error " + fmt("%.2e", worst) + " (" + worst_name + ")");
}

Outcome stiefel_invariant() {
  Pcg32 rng(1005);
  SpdNetConfig cfg;
  cfg.dims = {10, 8, 5};
  cfg.classes = 4;
  cfg.seed = 3;
  SpdNetModel model = SpdNetModel::initialize(cfg);
  double worst = 0.0;
  for (int step = 0; step < 100; ++step) {
    auto grads = model.zero_gradients();
    model.accumulate_gradients(random_spd(rng, 10), static_cast<int>(rng.below(4)), 1.0, grads);
    model.apply_gradients(grads, 0.5);
    for (const auto& layer : model.layers()) {
      if (const auto* b = std::get_if<BiMapLayer>(&layer)) {
        const Matrix& w = b->weight.matrix();
        const Matrix err = w.transpose() * w - Matrix::Identity(w.cols(), w.cols());
        worst = std::max(worst, err.cwiseAbs().maxCoeff());
      }
    }
  }
  return verdict(worst <= 1e-6, "max |W^T W - I| " + fmt("%.2e", worst) + " after 100 steps");
}

Outcome reeig_floor() {
  Pcg32 rng(1006);
  const double eps = 1e-4;
  double worst = 1e300;
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + static_cast<int>(rng.below(21));
    worst = std::min(worst, min_eigenvalue(reeig_forward(random_sym(rng, d), eps).matrix()));
  }
  return verdict(worst >= eps - 1e-12, "min output eigenvalue " + fmt("%.15g", worst));
}

Outcome mdm_synthetic() {
  double worst = 1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Pcg32 rng(2000 + seed);
    std::vector<CholeskyPoint> centers;
    for (int c = 0; c < 3; ++c) centers.push_back(random_point(rng, 6, 1.0));
    std::vector<LabeledPoint> train;
    for (int i = 0; i < 20; ++i) {
      for (int c = 0; c < 3; ++c) train.push_back({shifted(rng, centers[static_cast<std::size_t>(c)], 0.15), c});
    }
    const MdmModel model = mdm_fit(train);
    int correct = 0;
    const int per_class = 50;
    for (int i = 0; i < per_class; ++i) {
      for (int c = 0; c < 3; ++c) {
        correct += mdm_predict(model, shifted(rng, centers[static_cast<std::size_t>(c)], 0.15)) == c;
      }
    }
    worst = std::min(worst, correct / (3.0 * per_class));
  }
  return verdict(worst >= 0.95, "min held-out accuracy " + fmt("%.3f", worst) + " over 5 seeds");
}

Outcome kmedoids_synthetic() {
  double worst = 1.0;
  bool brute_ok = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Pcg32 rng(3000 + seed);
    std::vector<CholeskyPoint> centers;
    for (int c = 0; c < 3; ++c) centers.push_back(random_point(rng, 4, 3.0));
    std::vector<CholeskyPoint> pts;
    std::vector<int> labels;
    for (int i = 0; i < 90; ++i) {
      pts.push_back(shifted(rng, centers[static_cast<std::size_t>(i % 3)], 0.1));
      labels.push_back(i % 3);
    }
    const DistanceMatrix dist = pairwise_distances(pts);
    worst = std::min(worst, adjusted_rand_index(k_medoids(dist, 3, seed).assignments, labels));

    int best = 0;
    double best_cost = 1e300;
    for (int c = 0; c < 90; ++c) {
      double cost = 0.0;
      for (int i = 0; i < 90; ++i) {
        cost += geodesic_distance(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(c)]);
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    brute_ok = brute_ok && k_medoids(dist, 1, seed).medoids.front() == best;
  }
  return verdict(worst >= 0.9 && brute_ok, "min ARI " + fmt("%.3f", worst) + ", k=1 brute force " +
                                               (brute_ok ? "matches" : "differs"));
}

Outcome spdnet_overfit() {
  Pcg32 rng(1009);
  std::vector<CholeskyPoint> centers;
  for (int c = 0; c < 5; ++c) centers.push_back(random_point(rng, 6, 1.0));
  std::vector<LabeledSpd> data;
  for (int i = 0; i < 10; ++i) {
    for (int c = 0; c < 5; ++c) {
      data.push_back({from_cholesky(shifted(rng, centers[static_cast<std::size_t>(c)], 0.1)), c});
    }
  }
  SpdNetConfig cfg;
  cfg.dims = {6, 6};
  cfg.classes = 5;
  cfg.learning_rate = 0.05;
  cfg.epochs = 300;
  cfg.head_init_scale = 0.01;
  cfg.seed = 1;
  const SpdNetTrainResult r = spdnet_train(cfg, data, data);
  int first = -1;
  for (const auto& m : r.history) {
    if (m.train_accuracy == 1.0) {
      first = m.epoch;
      break;
    }
  }
  const std::int64_t count = SpdNetModel::initialize(SpdNetConfig{}).parameter_count();
  const bool ok = first >= 0 && count >= 5000 && count <= 11000;
  return verdict(ok, "train accuracy 1.0 at epoch " + std::to_string(first) + ", default parameter count " +
                         std::to_string(count));
}

SymMatrix drift_point(Pcg32& rng, int cls, int t) {
  const int d = 3;
  Vector coords = Vector::Zero(tri_size(d));
  for (Eigen::Index i = 0; i < coords.size(); ++i) coords(i) = 0.2 * rng.normal();
  coords(strict_size(d) + cls) += 0.3 * t;
  return from_cholesky(chart_exp(unflatten_tangent(coords)));
}

std::vector<LabeledSequence> drift_set(Pcg32& rng, int per_class) {
  std::vector<LabeledSequence> out;
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < 3; ++c) {
      LabeledSequence s;
      s.label = c;
      for (int t = 0; t < 5; ++t) s.sequence.push_back(drift_point(rng, c, t));
      out.push_back(std::move(s));
    }
  }
  return out;
}

Outcome manifold_gru() {
  double worst = 1.0;
  bool valid = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Pcg32 rng(4000 + seed);
    const auto train = drift_set(rng, 15);
    const auto test = drift_set(rng, 10);
    GruModelConfig cfg;
    cfg.frontend_dims = {3, 3};
    cfg.ode_hidden = 12;
    cfg.ode_steps = 4;
    cfg.classes = 3;
    cfg.learning_rate = 0.1;
    cfg.epochs = 100;
    cfg.seed = seed;
    const GruTrainResult r = gru_train(cfg, train, train);
    worst = std::min(worst, accuracy(r.model, test));
    for (const auto& s : test) {
      for (const CholeskyPoint& h : r.model.hidden_states(s.sequence)) {
        const Matrix& f = h.factor();
        valid = valid && f.allFinite() && f.diagonal().minCoeff() > 0.0 &&
                Matrix(f.triangularView<Eigen::StrictlyUpper>()).isZero(0.0);
      }
    }
  }

  const VectorField decay = [](const Vector& x) { return Vector(-x); };
  const Vector x0 = Vector::Ones(3);
  const Vector exact = std::exp(-1.0) * x0;
  double prev = 0.0;
  double min_ratio = 1e300;
  double max_ratio = 0.0;
  for (int steps : {5, 10, 20, 40}) {
    const double err = (ode_solve(decay, x0, 0.0, 1.0, steps) - exact).norm();
    if (prev > 0.0) {
      min_ratio = std::min(min_ratio, prev / err);
      max_ratio = std::max(max_ratio, prev / err);
    }
    prev = err;
  }
  const bool order4 = min_ratio > 14.0 && max_ratio < 18.0;
  return verdict(worst >= 0.9 && valid && order4,
                 "min held-out accuracy " + fmt("%.3f", worst) + ", hidden states " +
                     (valid ? "valid" : "INVALID") + ", RK4 error ratios per halving in [" +
                     fmt("%.2f", min_ratio) + ", " + fmt("%.2f", max_ratio) + "]");
}

Matrix householder(int d, bool reversed) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = reversed ? d - i : i + 1;
  return Matrix::Identity(d, d) - 2.0 * v * v.transpose() / v.squaredNorm();
}

SymMatrix edge_with_dominant(const Matrix& q, int dominant, Pcg32& rng) {
  Vector lambda(q.rows());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = rng.uniform(0.5, 1.5);
  lambda(dominant) = 10.0 + rng.uniform();
  return SymMatrix(q * lambda.asDiagonal() * q.transpose());
}

Outcome importance_recovery() {
  Pcg32 rng(1011);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const SymMatrix e = random_spd(rng, 22);
    const Vector kappa = random_vector(rng, 22);
    worst = std::max(worst, (lstsq(e.matrix(), e.matrix() * kappa) - kappa).norm());
  }
  // Through the importance path: E = Q diag(lambda) Q^T, so E (q_0 / lambda_0) = q_0.
  const Matrix q5 = householder(5, false);
  const SymMatrix e5 = edge_with_dominant(q5, 0, rng);
  const std::vector<SymMatrix> one{e5};
  const ImportanceReport r5 = electrode_importance(one, BasisMatrix(q5));
  const double lambda0 = q5.col(0).dot(e5.matrix() * q5.col(0));
  worst = std::max(worst, (r5.kappa[0] - q5.col(0) / lambda0).norm());

  // Per-trial counts on a hand-ranked Householder(4) basis.
  const Matrix q4 = householder(4, false);
  std::vector<SymMatrix> edges;
  for (int c : {0, 1, 1, 3, 0}) edges.push_back(edge_with_dominant(q4, c, rng));
  const ImportanceReport per = electrode_importance(edges, BasisMatrix(q4), ColumnSelection::PerTrial);
  bool counts = per.rank1_counts == std::vector<int>{2, 2, 1, 0} && per.top3_counts == std::vector<int>{3, 3, 5, 4};

  // Mean-edge selection with a single dominant column of a reversed Householder(6).
  const Matrix q6 = householder(6, true);
  std::vector<SymMatrix> edges6;
  for (int t = 0; t < 10; ++t) edges6.push_back(edge_with_dominant(q6, 5, rng));
  const ImportanceReport mean = electrode_importance(edges6, BasisMatrix(q6));
  counts = counts && mean.rank1_counts == std::vector<int>{0, 0, 0, 0, 0, 10} &&
           mean.top3_counts == std::vector<int>{10, 10, 0, 0, 0, 10};
  return verdict(worst <= 1e-8 && counts, "max kappa error " + fmt("%.2e", worst) + ", fixture counts " +
                                              (counts ? "match" : "differ"));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Outcome determinism() {
  const fs::path data = SPDSEMG_TEST_DATA_DIR;
  const fs::path cli = SPDSEMG_CLI_PATH;
  const fs::path tmp = fs::temp_directory_path() /
                       ("spdsemg-acceptance-" +
                        std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  fs::create_directories(tmp);
  bool same = true;
  int compared = 0;
  std::string detail;
  for (const char* name : {"mdm", "kmedoids", "spdnet", "gru"}) {
    const fs::path config = data / (std::string(name) + ".json");
    std::string outputs[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = tmp / (std::string(name) + "-" + std::to_string(run) + ".json");
      const std::string cmd = "\"" + cli.string() + "\" run --config \"" + config.string() + "\" --metrics \"" +
                              out.string() + "\" > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        same = false;
        detail += std::string(" ") + name + ": run failed;";
        continue;
      }
      outputs[run] = read_file(out);
    }
    const bool eq = !outputs[0].empty() && outputs[0] == outputs[1];
    same = same && eq;
    ++compared;
    if (!eq) detail += std::string(" ") + name + " differs;";
  }
  fs::remove_all(tmp);
  return verdict(same, std::to_string(compared) + " configs run twice through the CLI, metrics " +
                           (same ? "byte-identical" : "differ:" + detail));
}

Outcome dataset_smoke() {
  const char* root = std::getenv("SPDSEMG_DATA_ROOT");
  if (root == nullptr || *root == '\0') return {Status::Skip, "SPDSEMG_DATA_ROOT not set"};
  const fs::path config_path = fs::path(SPDSEMG_CONFIG_DIR) / "words-1.5s.json";
  ExperimentConfig config = load_config(config_path);
  for (const auto& m : config.manifests) {
    if (!fs::exists(m)) return {Status::Skip, "manifest not found: " + m.string()};
  }
  config.metrics_path.reset();
  config.checkpoint_path.reset();
  const Dataset data = build_dataset(config);
  const ExperimentResult r = run_experiment(config);
  const int classes = static_cast<int>(data.vocabulary.size());
  return verdict(r.accuracy >= 0.2, "accuracy " + fmt("%.3f", r.accuracy) + " on " + std::to_string(classes) +
                                        " classes (chance " + fmt("%.3f", 1.0 / classes) + ")");
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "geometry axioms", 10.0, geometry_axioms},
      {2, "Frechet mean minimizes squared distances", 30.0, frechet_mean_minimizes},
      {3, "regularization", 0.0, regularization},
      {4, "gradient checks", 120.0, gradient_checks},
      {5, "Stiefel invariant", 0.0, stiefel_invariant},
      {6, "ReEig floor", 0.0, reeig_floor},
      {7, "MDM synthetic", 0.0, mdm_synthetic},
      {8, "k-medoids synthetic", 0.0, kmedoids_synthetic},
      {9, "SPDNet overfit and size", 0.0, spdnet_overfit},
      {10, "manifold GRU", 0.0, manifold_gru},
      {11, "importance recovery", 0.0, importance_recovery},
      {12, "determinism", 0.0, determinism},
      {13, "dataset smoke test", 600.0, dataset_smoke},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = Outcome{Status::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.status == Status::Pass && c.budget_s > 0.0 && secs > c.budget_s) {
      out.status = Status::Fail;
      out.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    const char* tag = out.status == Status::Pass ? "PASS" : out.status == Status::Skip ? "SKIP" : "FAIL";
    failures += out.status == Status::Fail;
    std::printf("%s criterion %2d %s: %s (%.2f s)\n", tag, c.id, c.name, out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
