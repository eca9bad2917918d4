#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spdsemg/geometry.hpp"
#include "spdsemg/spdnet.hpp"
#include "spdsemg/training.hpp"

namespace spdsemg {

// Manifold GRU in log-Cholesky chart coordinates. A Cholesky point L of size
// d is carried as ChartParts{strict entries of L, log of its diagonal}; the
// flat form is flatten_tangent(chart_log(L)). All coefficients act
// elementwise (Hadamard) on the strict part and on the diagonal.

struct ChartParts {
  Vector strict;    // d(d-1)/2 entries, row-major below the diagonal
  Vector log_diag;  // d entries

  static ChartParts from_point(const CholeskyPoint& l);
  static ChartParts from_flat(const Vector& coords);
  static ChartParts zero(int dim);

  int dim() const { return static_cast<int>(log_diag.size()); }
  Vector flat() const;
  CholeskyPoint to_point() const;
};

/// Lower-triangular gate with entries in (0, 1): strict part and diagonal.
struct TriGate {
  Vector strict;
  Vector diag;

  int dim() const { return static_cast<int>(diag.size()); }
  Matrix matrix() const;
};

/// Coefficients of one gate. The strict-part arrays have d(d-1)/2 entries,
/// the diagonal arrays d entries. The positive diagonal scale is
/// softplus(scale_raw).
struct GateParams {
  Vector w, u, b;
  Vector w_diag, u_diag, scale_raw;

  static GateParams zeros(int dim);
  int dim() const { return static_cast<int>(w_diag.size()); }
  Vector scale() const;
};

struct GruParams {
  GateParams z, r, h;

  static GruParams zeros(int dim);
  int dim() const { return z.dim(); }
};

/// Two-layer tanh perceptron on flat chart coordinates:
/// f(x) = w2 tanh(w1 x + b1) + b2.
struct OdeField {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  static OdeField zeros(int width, int hidden);
  int width() const { return static_cast<int>(w1.cols()); }
  int hidden() const { return static_cast<int>(w1.rows()); }
  Vector operator()(const Vector& x) const;
};

// Visit every parameter tensor as a contiguous span, in declaration order.
template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn);

// ---- gates -----------------------------------------------------------------

struct GateTrace {
  ChartParts l, h;
  Vector expo;   // exp(w_diag l_q + u_diag h_q)
  Vector scale;  // softplus(scale_raw)
  TriGate value;
};

struct GateBackward {
  ChartParts l_grad, h_grad;
  GateParams param_grad;
};

/// strict = sigmoid(w l_s + u h_s + b);
/// diag = sigmoid(scale * exp(w_diag l_q + u_diag h_q)).
TriGate gate_forward(const GateParams& p, const ChartParts& l, const ChartParts& h,
                     GateTrace* trace = nullptr);
GateBackward gate_backward(const GateParams& p, const GateTrace& trace, const TriGate& g_out);

/// Update and reset gates on Cholesky points.
TriGate gate_z(const CholeskyPoint& l, const CholeskyPoint& h_prev, const GruParams& params);
TriGate gate_r(const CholeskyPoint& l, const CholeskyPoint& h_prev, const GruParams& params);

// ---- candidate ---------------------------------------------------------------

struct CandidateTrace {
  ChartParts l, h;
  TriGate r;
  Vector strict_value;  // tanh(...)
  Vector expo;
  Vector scale;
  Vector pre_softplus;  // scale * expo
  Vector diag_value;    // softplus(pre_softplus)
};

struct CandidateBackward {
  ChartParts l_grad, h_grad;
  TriGate r_grad;
  GateParams param_grad;
};

/// strict = tanh(w l_s + u (r_s * h_s) + b);
/// diag = softplus(scale * exp(w_diag l_q + u_diag log(r_d * D(h)))).
ChartParts candidate_forward(const GateParams& p, const ChartParts& l, const TriGate& r,
                             const ChartParts& h, CandidateTrace* trace = nullptr);
CandidateBackward candidate_backward(const GateParams& p, const CandidateTrace& trace,
                                     const ChartParts& g_out);

CholeskyPoint candidate(const CholeskyPoint& l, const TriGate& r, const CholeskyPoint& h_prev,
                        const GruParams& params);

// ---- output ------------------------------------------------------------------

struct CombineBackward {
  TriGate z_grad;
  ChartParts candidate_grad, h_grad;
};

/// strict = (1 - z_s) h_s + z_s c_s; log diag = (1 - z_d) h_q + z_d c_q.
ChartParts output_combine_coords(const TriGate& z, const ChartParts& cand, const ChartParts& h);
CombineBackward output_combine_backward(const TriGate& z, const ChartParts& cand,
                                        const ChartParts& h, const ChartParts& g_out);

/// Same map on Cholesky points; the diagonal is D(h)^(1-z) D(c)^z, which
/// returns h or c bit-exactly at z = 0 or z = 1.
CholeskyPoint output_combine(const TriGate& z, const CholeskyPoint& cand,
                             const CholeskyPoint& h_prev);

// ---- full cell -----------------------------------------------------------------

struct CellTrace {
  GateTrace z, r;
  CandidateTrace cand;
  ChartParts cand_value, h;
};

struct CellBackward {
  ChartParts l_grad, h_grad;
  GruParams param_grad;
};

ChartParts cell_forward(const GruParams& p, const ChartParts& l, const ChartParts& h,
                        CellTrace* trace = nullptr);
CellBackward cell_backward(const GruParams& p, const CellTrace& trace, const ChartParts& g_out);

// ---- ODE -------------------------------------------------------------------------

struct OdeTrace {
  double step = 0.0;
  std::vector<std::array<Vector, 4>> stage_inputs;  // per RK4 step
};

struct OdeBackward {
  Vector x_grad;
  OdeField param_grad;
};

/// Classic fixed-step RK4 from t0 to t1. Throws OdeDiverged if the field
/// produces a non-finite value.
Vector ode_solve(const OdeField& field, const Vector& x0, double t0, double t1, int steps,
                 OdeTrace* trace = nullptr);
/// RK4 on an arbitrary vector field.
using VectorField = std::function<Vector(const Vector&)>;
Vector ode_solve(const VectorField& field, const Vector& x0, double t0, double t1, int steps);

OdeBackward ode_backward(const OdeField& field, const OdeTrace& trace, const Vector& g_out);

/// Integrates the field on chart_log(h) and maps the result back with chart_exp.
CholeskyPoint ode_evolve(const CholeskyPoint& h, const OdeField& field, double t0, double t1,
                         int steps);
CholeskyPoint ode_evolve(const CholeskyPoint& h, const VectorField& field, double t0, double t1,
                         int steps);

/// Gradient of a loss through the Cholesky factorization: given P = L L^T and
/// dLoss/dL (lower triangular), returns the symmetric dLoss/dP.
SymMatrix cholesky_backprop(const Matrix& lower, const Matrix& g_lower);

// ---- model ---------------------------------------------------------------------

struct GruModelConfig {
  /// BiMap front-end sizes; frontend_dims[0] is the input size and the last
  /// entry is the hidden SPD size. A single entry means no front-end.
  std::vector<int> frontend_dims{22, 22};
  double eps = 1e-4;
  int ode_hidden = 280;
  int ode_steps = 10;
  int classes = 26;
  double learning_rate = 1e-2;
  int epochs = 150;
  int batch_size = 0;
  double init_scale = 0.1;
  std::uint64_t seed = 0;

  int hidden_dim() const { return frontend_dims.back(); }
  void validate() const;
};

struct LabeledSequence {
  std::vector<SymMatrix> sequence;
  int label = 0;
};

class GruModel {
 public:
  struct Gradients {
    std::vector<Matrix> bimap;
    GruParams cell;
    OdeField field;
    Matrix head_weight;
    Vector head_bias;
  };

  GruModel() = default;
  GruModel(GruModelConfig config, std::vector<SpdLayer> frontend, GruParams cell, OdeField field,
           LinearHead head);

  static GruModel initialize(const GruModelConfig& config);

  const GruModelConfig& config() const { return config_; }
  const std::vector<SpdLayer>& frontend() const { return frontend_; }
  std::vector<SpdLayer>& frontend() { return frontend_; }
  const GruParams& cell() const { return cell_; }
  GruParams& cell() { return cell_; }
  const OdeField& field() const { return field_; }
  OdeField& field() { return field_; }
  const LinearHead& head() const { return head_; }
  LinearHead& head() { return head_; }

  /// Per step: front-end, Cholesky factor, ODE evolution of the hidden state
  /// over (t-1, t), then the gated update. The head reads halfvec of the
  /// symmetric completion of chart_log(h_T). h_0 is the identity.
  Vector forward(std::span<const SymMatrix> sequence) const;
  /// h_1 ... h_T.
  std::vector<CholeskyPoint> hidden_states(std::span<const SymMatrix> sequence) const;

  Gradients zero_gradients() const;
  double accumulate_gradients(std::span<const SymMatrix> sequence, int label, double scale,
                              Gradients& accum, Vector* logits_out = nullptr) const;
  void apply_gradients(const Gradients& grads, double learning_rate);

  std::int64_t parameter_count() const;

 private:
  ChartParts input_point(const SymMatrix& e) const;

  GruModelConfig config_;
  std::vector<SpdLayer> frontend_;
  GruParams cell_;
  OdeField field_;
  LinearHead head_;
};

/// Alias matching the pipeline vocabulary.
inline Vector gru_model_forward(std::span<const SymMatrix> sequence, const GruModel& model) {
  return model.forward(sequence);
}

struct GruTrainResult {
  GruModel model;
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

GruTrainResult gru_train(const GruModelConfig& config, std::span<const LabeledSequence> train,
                         std::span<const LabeledSequence> validation);

double accuracy(const GruModel& model, std::span<const LabeledSequence> data);

// ---- tensor visitation -------------------------------------------------------

template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
  using Plain = std::remove_const_t<Params>;
  auto span_of = [](auto& t) { return std::span(t.data(), static_cast<std::size_t>(t.size())); };
  if constexpr (std::is_same_v<Plain, GateParams>) {
    for (auto* t : {&p.w, &p.u, &p.b, &p.w_diag, &p.u_diag, &p.scale_raw}) fn(span_of(*t));
  } else if constexpr (std::is_same_v<Plain, GruParams>) {
    visit_tensors(p.z, fn);
    visit_tensors(p.r, fn);
    visit_tensors(p.h, fn);
  } else if constexpr (std::is_same_v<Plain, OdeField>) {
    fn(span_of(p.w1));
    fn(span_of(p.b1));
    fn(span_of(p.w2));
    fn(span_of(p.b2));
  } else {
    static_assert(sizeof(Plain) == 0, "visit_tensors: unsupported parameter type");
  }
}

}  // namespace spdsemg
