#include "spdsemg/gru.hpp"

#include <cmath>
#include <numbers>

#include "spdsemg/error.hpp"
#include "spdsemg/random.hpp"
#include "train_loop.hpp"

namespace spdsemg {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 20.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Vector sigmoid(const Vector& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }
Vector softplus(const Vector& x) { return x.unaryExpr([](double v) { return softplus(v); }); }

void check_dims(int a, int b, const char* who) {
  require(a == b, ErrorCode::InvalidInput, std::string(who) + ": dimension mismatch");
}

void check_gate_shapes(const GateParams& p, int d, const char* who) {
  const auto m = strict_size(d);
  require(p.w.size() == m && p.u.size() == m && p.b.size() == m && p.w_diag.size() == d &&
              p.u_diag.size() == d && p.scale_raw.size() == d,
          ErrorCode::InvalidInput, std::string(who) + ": parameter shape mismatch");
}

void add_scaled(ChartParts& dst, const ChartParts& src) {
  dst.strict += src.strict;
  dst.log_diag += src.log_diag;
}

template <typename Params>
void add_scaled(Params& dst, const Params& src, double scale) {
  std::vector<std::span<const double>> from;
  visit_tensors(src, [&](std::span<const double> s) { from.push_back(s); });
  std::size_t k = 0;
  visit_tensors(dst, [&](std::span<double> d) {
    const auto& s = from[k++];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  });
}

// Vector-Jacobian product of the field at y with cotangent v; accumulates
// parameter gradients into grad and returns the input cotangent.
Vector field_vjp(const OdeField& f, const Vector& y, const Vector& v, OdeField& grad) {
  const Vector a = (f.w1 * y + f.b1).array().tanh().matrix();
  grad.w2 += v * a.transpose();
  grad.b2 += v;
  const Vector dz = (f.w2.transpose() * v).cwiseProduct((1.0 - a.array().square()).matrix());
  grad.w1 += dz * y.transpose();
  grad.b1 += dz;
  return f.w1.transpose() * dz;
}

// halfvec of the symmetric completion of chart_log(h): row-major lower
// triangle, off-diagonal entries scaled by sqrt(2).
Vector head_features(const ChartParts& h) {
  const int d = h.dim();
  Vector out(tri_size(d));
  int k = 0;
  int s = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) out(k++) = std::numbers::sqrt2 * h.strict(s++);
    out(k++) = h.log_diag(i);
  }
  return out;
}

ChartParts head_features_backward(const Vector& g, int d) {
  ChartParts out = ChartParts::zero(d);
  int k = 0;
  int s = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) out.strict(s++) = std::numbers::sqrt2 * g(k++);
    out.log_diag(i) = g(k++);
  }
  return out;
}

}  // namespace

// ---- value types -------------------------------------------------------------

ChartParts ChartParts::from_point(const CholeskyPoint& l) {
  return ChartParts{strict_entries(l.factor()), l.factor().diagonal().array().log().matrix()};
}

ChartParts ChartParts::from_flat(const Vector& coords) {
  const int d = dim_from_tri_size(static_cast<int>(coords.size()));
  return ChartParts{coords.head(strict_size(d)), coords.tail(d)};
}

ChartParts ChartParts::zero(int dim) {
  return ChartParts{Vector::Zero(strict_size(dim)), Vector::Zero(dim)};
}

Vector ChartParts::flat() const {
  Vector out(strict.size() + log_diag.size());
  out << strict, log_diag;
  return out;
}

CholeskyPoint ChartParts::to_point() const {
  Matrix l = strict_from_entries(strict, dim());
  l.diagonal() = log_diag.array().exp().matrix();
  return CholeskyPoint(std::move(l));
}

Matrix TriGate::matrix() const {
  Matrix m = strict_from_entries(strict, dim());
  m.diagonal() = diag;
  return m;
}

GateParams GateParams::zeros(int dim) {
  const int m = strict_size(dim);
  return GateParams{Vector::Zero(m),   Vector::Zero(m),   Vector::Zero(m),
                    Vector::Zero(dim), Vector::Zero(dim), Vector::Zero(dim)};
}

Vector GateParams::scale() const { return softplus(scale_raw); }

GruParams GruParams::zeros(int dim) {
  return GruParams{GateParams::zeros(dim), GateParams::zeros(dim), GateParams::zeros(dim)};
}

OdeField OdeField::zeros(int width, int hidden) {
  return OdeField{Matrix::Zero(hidden, width), Vector::Zero(hidden), Matrix::Zero(width, hidden),
                  Vector::Zero(width)};
}

Vector OdeField::operator()(const Vector& x) const {
  return w2 * (w1 * x + b1).array().tanh().matrix() + b2;
}

// ---- gates -----------------------------------------------------------------

TriGate gate_forward(const GateParams& p, const ChartParts& l, const ChartParts& h,
                     GateTrace* trace) {
  check_dims(l.dim(), h.dim(), "gate");
  check_gate_shapes(p, l.dim(), "gate");
  const Vector pre =
      p.w.cwiseProduct(l.strict) + p.u.cwiseProduct(h.strict) + p.b;
  const Vector expo = (p.w_diag.cwiseProduct(l.log_diag) + p.u_diag.cwiseProduct(h.log_diag))
                          .array()
                          .exp()
                          .matrix();
  const Vector scale = p.scale();
  TriGate value{sigmoid(pre), sigmoid(scale.cwiseProduct(expo))};
  if (trace != nullptr) *trace = GateTrace{l, h, expo, scale, value};
  return value;
}

GateBackward gate_backward(const GateParams& p, const GateTrace& t, const TriGate& g_out) {
  const TriGate& v = t.value;
  const Vector da = g_out.strict.cwiseProduct(v.strict.cwiseProduct((1.0 - v.strict.array()).matrix()));
  const Vector dc = g_out.diag.cwiseProduct(v.diag.cwiseProduct((1.0 - v.diag.array()).matrix()));
  const Vector dp = dc.cwiseProduct(t.scale).cwiseProduct(t.expo);

  GateBackward out;
  out.param_grad.w = da.cwiseProduct(t.l.strict);
  out.param_grad.u = da.cwiseProduct(t.h.strict);
  out.param_grad.b = da;
  out.param_grad.w_diag = dp.cwiseProduct(t.l.log_diag);
  out.param_grad.u_diag = dp.cwiseProduct(t.h.log_diag);
  out.param_grad.scale_raw = dc.cwiseProduct(t.expo).cwiseProduct(sigmoid(p.scale_raw));
  out.l_grad = ChartParts{da.cwiseProduct(p.w), dp.cwiseProduct(p.w_diag)};
  out.h_grad = ChartParts{da.cwiseProduct(p.u), dp.cwiseProduct(p.u_diag)};
  return out;
}

TriGate gate_z(const CholeskyPoint& l, const CholeskyPoint& h_prev, const GruParams& params) {
  return gate_forward(params.z, ChartParts::from_point(l), ChartParts::from_point(h_prev));
}

TriGate gate_r(const CholeskyPoint& l, const CholeskyPoint& h_prev, const GruParams& params) {
  return gate_forward(params.r, ChartParts::from_point(l), ChartParts::from_point(h_prev));
}

// ---- candidate ---------------------------------------------------------------

ChartParts candidate_forward(const GateParams& p, const ChartParts& l, const TriGate& r,
                             const ChartParts& h, CandidateTrace* trace) {
  check_dims(l.dim(), h.dim(), "candidate");
  check_dims(r.dim(), h.dim(), "candidate");
  check_gate_shapes(p, l.dim(), "candidate");
  const Vector strict_value =
      (p.w.cwiseProduct(l.strict) + p.u.cwiseProduct(r.strict.cwiseProduct(h.strict)) + p.b)
          .array()
          .tanh()
          .matrix();
  const Vector log_rh = r.diag.array().log().matrix() + h.log_diag;
  const Vector expo =
      (p.w_diag.cwiseProduct(l.log_diag) + p.u_diag.cwiseProduct(log_rh)).array().exp().matrix();
  const Vector scale = p.scale();
  const Vector pre = scale.cwiseProduct(expo);
  const Vector diag_value = softplus(pre);
  ChartParts out{strict_value, diag_value.array().log().matrix()};
  if (trace != nullptr) {
    *trace = CandidateTrace{l, h, r, strict_value, expo, scale, pre, diag_value};
  }
  return out;
}

CandidateBackward candidate_backward(const GateParams& p, const CandidateTrace& t,
                                     const ChartParts& g_out) {
  const Vector da = g_out.strict.cwiseProduct((1.0 - t.strict_value.array().square()).matrix());
  const Vector rh = t.r.strict.cwiseProduct(t.h.strict);
  // d log(softplus(c)) / dc = sigmoid(c) / softplus(c)
  const Vector dc = g_out.log_diag.cwiseProduct(sigmoid(t.pre_softplus))
                        .cwiseQuotient(t.diag_value);
  const Vector dp = dc.cwiseProduct(t.scale).cwiseProduct(t.expo);
  const Vector log_rh = t.r.diag.array().log().matrix() + t.h.log_diag;
  const Vector d_log_rh = dp.cwiseProduct(p.u_diag);

  CandidateBackward out;
  out.param_grad.w = da.cwiseProduct(t.l.strict);
  out.param_grad.u = da.cwiseProduct(rh);
  out.param_grad.b = da;
  out.param_grad.w_diag = dp.cwiseProduct(t.l.log_diag);
  out.param_grad.u_diag = dp.cwiseProduct(log_rh);
  out.param_grad.scale_raw = dc.cwiseProduct(t.expo).cwiseProduct(sigmoid(p.scale_raw));
  out.l_grad = ChartParts{da.cwiseProduct(p.w), dp.cwiseProduct(p.w_diag)};
  out.h_grad = ChartParts{da.cwiseProduct(p.u).cwiseProduct(t.r.strict), d_log_rh};
  out.r_grad = TriGate{da.cwiseProduct(p.u).cwiseProduct(t.h.strict),
                       d_log_rh.cwiseQuotient(t.r.diag)};
  return out;
}

CholeskyPoint candidate(const CholeskyPoint& l, const TriGate& r, const CholeskyPoint& h_prev,
                        const GruParams& params) {
  CandidateTrace trace;
  const ChartParts c = candidate_forward(params.h, ChartParts::from_point(l), r,
                                         ChartParts::from_point(h_prev), &trace);
  Matrix out = strict_from_entries(c.strict, c.dim());
  out.diagonal() = trace.diag_value;
  return CholeskyPoint(std::move(out));
}

// ---- output ------------------------------------------------------------------

ChartParts output_combine_coords(const TriGate& z, const ChartParts& cand, const ChartParts& h) {
  check_dims(z.dim(), h.dim(), "output_combine");
  check_dims(cand.dim(), h.dim(), "output_combine");
  return ChartParts{
      (1.0 - z.strict.array()).matrix().cwiseProduct(h.strict) + z.strict.cwiseProduct(cand.strict),
      (1.0 - z.diag.array()).matrix().cwiseProduct(h.log_diag) + z.diag.cwiseProduct(cand.log_diag)};
}

CombineBackward output_combine_backward(const TriGate& z, const ChartParts& cand,
                                        const ChartParts& h, const ChartParts& g_out) {
  CombineBackward out;
  out.z_grad = TriGate{g_out.strict.cwiseProduct(cand.strict - h.strict),
                       g_out.log_diag.cwiseProduct(cand.log_diag - h.log_diag)};
  out.candidate_grad =
      ChartParts{g_out.strict.cwiseProduct(z.strict), g_out.log_diag.cwiseProduct(z.diag)};
  out.h_grad = ChartParts{g_out.strict.cwiseProduct((1.0 - z.strict.array()).matrix()),
                          g_out.log_diag.cwiseProduct((1.0 - z.diag.array()).matrix())};
  return out;
}

CholeskyPoint output_combine(const TriGate& z, const CholeskyPoint& cand,
                             const CholeskyPoint& h_prev) {
  const int d = h_prev.dim();
  check_dims(z.dim(), d, "output_combine");
  check_dims(cand.dim(), d, "output_combine");
  const Vector hs = strict_entries(h_prev.factor());
  const Vector cs = strict_entries(cand.factor());
  const Vector strict =
      (1.0 - z.strict.array()).matrix().cwiseProduct(hs) + z.strict.cwiseProduct(cs);
  Matrix out = strict_from_entries(strict, d);
  for (int i = 0; i < d; ++i) {
    out(i, i) = std::pow(h_prev.factor()(i, i), 1.0 - z.diag(i)) *
                std::pow(cand.factor()(i, i), z.diag(i));
  }
  return CholeskyPoint(std::move(out));
}

// ---- full cell -----------------------------------------------------------------

ChartParts cell_forward(const GruParams& p, const ChartParts& l, const ChartParts& h,
                        CellTrace* trace) {
  if (trace == nullptr) {
    const TriGate z = gate_forward(p.z, l, h);
    const TriGate r = gate_forward(p.r, l, h);
    return output_combine_coords(z, candidate_forward(p.h, l, r, h), h);
  }
  const TriGate z = gate_forward(p.z, l, h, &trace->z);
  const TriGate r = gate_forward(p.r, l, h, &trace->r);
  trace->cand_value = candidate_forward(p.h, l, r, h, &trace->cand);
  trace->h = h;
  return output_combine_coords(z, trace->cand_value, h);
}

CellBackward cell_backward(const GruParams& p, const CellTrace& t, const ChartParts& g_out) {
  const CombineBackward comb = output_combine_backward(t.z.value, t.cand_value, t.h, g_out);
  const CandidateBackward cand = candidate_backward(p.h, t.cand, comb.candidate_grad);
  const GateBackward rb = gate_backward(p.r, t.r, cand.r_grad);
  const GateBackward zb = gate_backward(p.z, t.z, comb.z_grad);

  CellBackward out;
  out.param_grad = GruParams{zb.param_grad, rb.param_grad, cand.param_grad};
  out.l_grad = cand.l_grad;
  add_scaled(out.l_grad, rb.l_grad);
  add_scaled(out.l_grad, zb.l_grad);
  out.h_grad = comb.h_grad;
  add_scaled(out.h_grad, cand.h_grad);
  add_scaled(out.h_grad, rb.h_grad);
  add_scaled(out.h_grad, zb.h_grad);
  return out;
}

// ---- ODE -------------------------------------------------------------------------

namespace {

template <typename Field, typename OnStep>
Vector rk4_run(const Field& field, const Vector& x0, double t0, double t1, int steps,
               OnStep on_step) {
  require(steps >= 1, ErrorCode::InvalidInput, "ode_solve: steps must be >= 1");
  const double h = (t1 - t0) / steps;
  Vector x = x0;
  for (int s = 0; s < steps; ++s) {
    const Vector y1 = x;
    const Vector k1 = field(y1);
    const Vector y2 = x + 0.5 * h * k1;
    const Vector k2 = field(y2);
    const Vector y3 = x + 0.5 * h * k2;
    const Vector k3 = field(y3);
    const Vector y4 = x + h * k3;
    const Vector k4 = field(y4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) {
      fail(ErrorCode::OdeDiverged, "ode_solve: non-finite state at step " + std::to_string(s));
    }
    on_step(y1, y2, y3, y4);
  }
  return x;
}

}  // namespace

Vector ode_solve(const OdeField& field, const Vector& x0, double t0, double t1, int steps,
                 OdeTrace* trace) {
  require(x0.size() == field.width(), ErrorCode::InvalidInput, "ode_solve: width mismatch");
  if (trace != nullptr) {
    trace->step = (t1 - t0) / std::max(steps, 1);
    trace->stage_inputs.clear();
    trace->stage_inputs.reserve(static_cast<std::size_t>(std::max(steps, 0)));
  }
  return rk4_run(field, x0, t0, t1, steps,
                 [trace](const Vector& y1, const Vector& y2, const Vector& y3, const Vector& y4) {
                   if (trace != nullptr) trace->stage_inputs.push_back({y1, y2, y3, y4});
                 });
}

Vector ode_solve(const VectorField& field, const Vector& x0, double t0, double t1, int steps) {
  return rk4_run(field, x0, t0, t1, steps,
                 [](const Vector&, const Vector&, const Vector&, const Vector&) {});
}

OdeBackward ode_backward(const OdeField& field, const OdeTrace& trace, const Vector& g_out) {
  OdeBackward out{g_out, OdeField::zeros(field.width(), field.hidden())};
  const double h = trace.step;
  for (auto it = trace.stage_inputs.rbegin(); it != trace.stage_inputs.rend(); ++it) {
    const auto& [y1, y2, y3, y4] = *it;
    const Vector gx = out.x_grad;
    Vector gk4 = (h / 6.0) * gx;
    Vector gk3 = (h / 3.0) * gx;
    Vector gk2 = (h / 3.0) * gx;
    Vector gk1 = (h / 6.0) * gx;
    Vector g_prev = gx;

    const Vector gy4 = field_vjp(field, y4, gk4, out.param_grad);
    g_prev += gy4;
    gk3 += h * gy4;
    const Vector gy3 = field_vjp(field, y3, gk3, out.param_grad);
    g_prev += gy3;
    gk2 += 0.5 * h * gy3;
    const Vector gy2 = field_vjp(field, y2, gk2, out.param_grad);
    g_prev += gy2;
    gk1 += 0.5 * h * gy2;
    g_prev += field_vjp(field, y1, gk1, out.param_grad);
    out.x_grad = std::move(g_prev);
  }
  return out;
}

CholeskyPoint ode_evolve(const CholeskyPoint& h, const OdeField& field, double t0, double t1,
                         int steps) {
  const Vector x = ode_solve(field, flatten_tangent(chart_log(h)), t0, t1, steps);
  return chart_exp(unflatten_tangent(x));
}

CholeskyPoint ode_evolve(const CholeskyPoint& h, const VectorField& field, double t0, double t1,
                         int steps) {
  const Vector x = ode_solve(field, flatten_tangent(chart_log(h)), t0, t1, steps);
  return chart_exp(unflatten_tangent(x));
}

SymMatrix cholesky_backprop(const Matrix& lower, const Matrix& g_lower) {
  const auto d = lower.rows();
  require(lower.cols() == d && g_lower.rows() == d && g_lower.cols() == d, ErrorCode::InvalidInput,
          "cholesky_backprop: shape mismatch");
  // Phi(L^T G): lower triangle with the diagonal halved.
  Matrix phi = (lower.transpose() * g_lower).triangularView<Eigen::Lower>();
  phi.diagonal() *= 0.5;
  const auto tri = lower.triangularView<Eigen::Lower>();
  // L^{-T} phi L^{-1}
  const Matrix right = tri.solve<Eigen::OnTheRight>(phi);  // phi L^{-1}
  const Matrix full = tri.transpose().solve(right);
  return SymMatrix(full);
}

// ---- model ---------------------------------------------------------------------

void GruModelConfig::validate() const {
  require(!frontend_dims.empty(), ErrorCode::ConfigError, "GruModelConfig: frontend_dims is empty");
  for (std::size_t i = 0; i < frontend_dims.size(); ++i) {
    require(frontend_dims[i] >= 1, ErrorCode::ConfigError, "GruModelConfig: dims must be positive");
    if (i > 0) {
      require(frontend_dims[i] <= frontend_dims[i - 1], ErrorCode::ConfigError,
              "GruModelConfig: BiMap dims must be non-increasing");
    }
  }
  require(eps > 0.0, ErrorCode::ConfigError, "GruModelConfig: eps must be positive");
  require(ode_hidden >= 1, ErrorCode::ConfigError, "GruModelConfig: ode_hidden must be positive");
  require(ode_steps >= 1, ErrorCode::ConfigError, "GruModelConfig: ode_steps must be >= 1");
  require(classes >= 1, ErrorCode::ConfigError, "GruModelConfig: classes must be positive");
  require(learning_rate > 0.0, ErrorCode::ConfigError, "GruModelConfig: learning rate must be positive");
  require(epochs >= 1, ErrorCode::ConfigError, "GruModelConfig: epochs must be positive");
  require(batch_size >= 0, ErrorCode::ConfigError, "GruModelConfig: batch size must be >= 0");
}

GruModel::GruModel(GruModelConfig config, std::vector<SpdLayer> frontend, GruParams cell,
                   OdeField field, LinearHead head)
    : config_(std::move(config)),
      frontend_(std::move(frontend)),
      cell_(std::move(cell)),
      field_(std::move(field)),
      head_(std::move(head)) {
  config_.validate();
  const std::size_t stages = config_.frontend_dims.size() - 1;
  require(frontend_.size() == 2 * stages, ErrorCode::InvalidInput,
          "GruModel: front-end layer count does not match config");
  for (std::size_t s = 0; s < stages; ++s) {
    const auto* bimap = std::get_if<BiMapLayer>(&frontend_[2 * s]);
    require(bimap != nullptr && std::holds_alternative<ReEigLayer>(frontend_[2 * s + 1]),
            ErrorCode::InvalidInput, "GruModel: expected BiMap followed by ReEig");
    require(bimap->weight.rows() == config_.frontend_dims[s] &&
                bimap->weight.cols() == config_.frontend_dims[s + 1],
            ErrorCode::InvalidInput, "GruModel: BiMap shape does not match config");
  }
  const int d = config_.hidden_dim();
  check_gate_shapes(cell_.z, d, "GruModel");
  check_gate_shapes(cell_.r, d, "GruModel");
  check_gate_shapes(cell_.h, d, "GruModel");
  require(field_.width() == tri_size(d) && field_.hidden() == config_.ode_hidden &&
              field_.w2.rows() == tri_size(d) && field_.b1.size() == config_.ode_hidden &&
              field_.b2.size() == tri_size(d),
          ErrorCode::InvalidInput, "GruModel: ODE field shape does not match config");
  require(head_.features() == tri_size(d) && head_.classes() == config_.classes &&
              head_.bias.size() == config_.classes,
          ErrorCode::InvalidInput, "GruModel: head shape does not match config");
}

GruModel GruModel::initialize(const GruModelConfig& config) {
  config.validate();
  Pcg32 rng(config.seed);
  auto fill = [&](auto& t, double stddev) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = stddev * rng.normal();
  };
  std::vector<SpdLayer> frontend;
  for (std::size_t s = 0; s + 1 < config.frontend_dims.size(); ++s) {
    Matrix m(config.frontend_dims[s], config.frontend_dims[s + 1]);
    fill(m, 1.0);
    frontend.emplace_back(BiMapLayer{StiefelParameter::from_matrix(m)});
    frontend.emplace_back(ReEigLayer{config.eps});
  }
  const int d = config.hidden_dim();
  const int n = tri_size(d);
  GruParams cell = GruParams::zeros(d);
  for (GateParams* g : {&cell.z, &cell.r, &cell.h}) {
    fill(g->w, config.init_scale);
    fill(g->u, config.init_scale);
    fill(g->w_diag, config.init_scale);
    fill(g->u_diag, config.init_scale);
  }
  OdeField field = OdeField::zeros(n, config.ode_hidden);
  fill(field.w1, 1.0 / std::sqrt(static_cast<double>(n)));
  fill(field.w2, config.init_scale / std::sqrt(static_cast<double>(config.ode_hidden)));
  LinearHead head{Matrix(config.classes, n), Vector::Zero(config.classes)};
  fill(head.weight, config.init_scale);
  return GruModel(config, std::move(frontend), std::move(cell), std::move(field), std::move(head));
}

ChartParts GruModel::input_point(const SymMatrix& e) const {
  SymMatrix x = e;
  for (const auto& layer : frontend_) x = layer_forward(layer, x).output;
  return ChartParts::from_point(CholeskyPoint(cholesky_lower(x)));
}

Vector GruModel::forward(std::span<const SymMatrix> sequence) const {
  require(!sequence.empty(), ErrorCode::InvalidInput, "GruModel: empty sequence");
  ChartParts h = ChartParts::zero(config_.hidden_dim());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    require(sequence[t].dim() == config_.frontend_dims.front(), ErrorCode::InvalidInput,
            "GruModel: input dimension mismatch");
    const ChartParts l = input_point(sequence[t]);
    const auto t1 = static_cast<double>(t + 1);
    const ChartParts evolved =
        ChartParts::from_flat(ode_solve(field_, h.flat(), t1 - 1.0, t1, config_.ode_steps));
    h = cell_forward(cell_, l, evolved);
  }
  return head_.weight * head_features(h) + head_.bias;
}

std::vector<CholeskyPoint> GruModel::hidden_states(std::span<const SymMatrix> sequence) const {
  std::vector<CholeskyPoint> states;
  ChartParts h = ChartParts::zero(config_.hidden_dim());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const ChartParts l = input_point(sequence[t]);
    const auto t1 = static_cast<double>(t + 1);
    const ChartParts evolved =
        ChartParts::from_flat(ode_solve(field_, h.flat(), t1 - 1.0, t1, config_.ode_steps));
    h = cell_forward(cell_, l, evolved);
    states.push_back(h.to_point());
  }
  return states;
}

GruModel::Gradients GruModel::zero_gradients() const {
  Gradients g;
  for (const auto& layer : frontend_) {
    if (const auto* bimap = std::get_if<BiMapLayer>(&layer)) {
      g.bimap.push_back(Matrix::Zero(bimap->weight.rows(), bimap->weight.cols()));
    }
  }
  g.cell = GruParams::zeros(config_.hidden_dim());
  g.field = OdeField::zeros(field_.width(), field_.hidden());
  g.head_weight = Matrix::Zero(head_.weight.rows(), head_.weight.cols());
  g.head_bias = Vector::Zero(head_.bias.size());
  return g;
}

double GruModel::accumulate_gradients(std::span<const SymMatrix> sequence, int label, double scale,
                                      Gradients& accum, Vector* logits_out) const {
  require(!sequence.empty(), ErrorCode::InvalidInput, "GruModel: empty sequence");
  struct StepRecord {
    std::vector<LayerCache> frontend;
    Matrix factor;
    OdeTrace ode;
    CellTrace cell;
  };
  std::vector<StepRecord> steps(sequence.size());
  ChartParts h = ChartParts::zero(config_.hidden_dim());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    require(sequence[t].dim() == config_.frontend_dims.front(), ErrorCode::InvalidInput,
            "GruModel: input dimension mismatch");
    StepRecord& rec = steps[t];
    SymMatrix x = sequence[t];
    for (const auto& layer : frontend_) {
      LayerForward f = layer_forward(layer, x);
      rec.frontend.push_back(std::move(f.cache));
      x = std::move(f.output);
    }
    rec.factor = cholesky_lower(x);
    const ChartParts l = ChartParts::from_point(CholeskyPoint(rec.factor));
    const auto t1 = static_cast<double>(t + 1);
    const ChartParts evolved = ChartParts::from_flat(
        ode_solve(field_, h.flat(), t1 - 1.0, t1, config_.ode_steps, &rec.ode));
    h = cell_forward(cell_, l, evolved, &rec.cell);
  }
  const Vector features = head_features(h);
  const Vector logits = head_.weight * features + head_.bias;
  if (logits_out != nullptr) *logits_out = logits;
  const SoftmaxLoss loss = softmax_cross_entropy(logits, label);

  accum.head_weight += scale * loss.grad * features.transpose();
  accum.head_bias += scale * loss.grad;
  Vector g_h = head_features_backward(head_.weight.transpose() * loss.grad, h.dim()).flat();

  for (std::size_t t = sequence.size(); t-- > 0;) {
    StepRecord& rec = steps[t];
    const CellBackward cb = cell_backward(cell_, rec.cell, ChartParts::from_flat(g_h));
    add_scaled(accum.cell, cb.param_grad, scale);
    const OdeBackward ob = ode_backward(field_, rec.ode, cb.h_grad.flat());
    add_scaled(accum.field, ob.param_grad, scale);
    g_h = ob.x_grad;

    if (frontend_.empty()) continue;
    const int d = config_.hidden_dim();
    Matrix g_factor = strict_from_entries(cb.l_grad.strict, d);
    g_factor.diagonal() = cb.l_grad.log_diag.cwiseQuotient(rec.factor.diagonal());
    SymMatrix g = cholesky_backprop(rec.factor, g_factor);
    std::size_t bimap_index = accum.bimap.size();
    for (std::size_t i = frontend_.size(); i-- > 0;) {
      LayerGradient lg = layer_backward(frontend_[i], rec.frontend[i], g);
      if (lg.param_grad) accum.bimap[--bimap_index] += scale * *lg.param_grad;
      g = std::move(lg.input_grad);
    }
  }
  return loss.loss;
}

void GruModel::apply_gradients(const Gradients& grads, double learning_rate) {
  std::size_t bimap_index = 0;
  for (auto& layer : frontend_) {
    if (auto* bimap = std::get_if<BiMapLayer>(&layer)) {
      const Matrix& g = grads.bimap[bimap_index++];
      bimap->weight =
          stiefel_step(bimap->weight, stiefel_grad(g, bimap->weight.matrix()), learning_rate);
    }
  }
  add_scaled(cell_, grads.cell, -learning_rate);
  add_scaled(field_, grads.field, -learning_rate);
  head_.weight -= learning_rate * grads.head_weight;
  head_.bias -= learning_rate * grads.head_bias;
}

std::int64_t GruModel::parameter_count() const {
  std::int64_t count = head_.weight.size() + head_.bias.size();
  for (const auto& layer : frontend_) {
    if (const auto* bimap = std::get_if<BiMapLayer>(&layer)) count += bimap->weight.matrix().size();
  }
  visit_tensors(cell_, [&](std::span<const double> s) { count += static_cast<std::int64_t>(s.size()); });
  visit_tensors(field_, [&](std::span<const double> s) { count += static_cast<std::int64_t>(s.size()); });
  return count;
}

double accuracy(const GruModel& model, std::span<const LabeledSequence> data) {
  return detail::model_accuracy(model, data, [](const LabeledSequence& s) {
    return std::span<const SymMatrix>(s.sequence);
  });
}

GruTrainResult gru_train(const GruModelConfig& config, std::span<const LabeledSequence> train,
                         std::span<const LabeledSequence> validation) {
  config.validate();
  require(!train.empty() && !validation.empty(), ErrorCode::InvalidInput,
          "gru_train: training and validation sets must be non-empty");
  for (const auto* set : {&train, &validation}) {
    for (const auto& s : *set) {
      require(s.label >= 0 && s.label < config.classes, ErrorCode::InvalidInput,
              "gru_train: label outside class range");
      require(!s.sequence.empty(), ErrorCode::InvalidInput, "gru_train: empty sequence");
    }
  }
  detail::LoopSettings settings{config.epochs, config.batch_size, config.learning_rate, config.seed,
                                "gru_train"};
  auto loop = detail::run_training(GruModel::initialize(config), train, validation, settings,
                                   [](const LabeledSequence& s) {
                                     return std::span<const SymMatrix>(s.sequence);
                                   });
  return GruTrainResult{std::move(loop.best), std::move(loop.history), loop.best_epoch,
                        loop.best_val_accuracy};
}

}  // namespace spdsemg
