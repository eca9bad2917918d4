#include "spdsemg/signal_graph.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "spdsemg/error.hpp"

namespace spdsemg {

void Recording::validate() const {
  require(sample_rate > 0.0 && std::isfinite(sample_rate), ErrorCode::InvalidInput,
          "Recording: sample rate must be positive");
  require(channels() >= 1 && n_samples() >= 1, ErrorCode::InvalidInput,
          "Recording: needs at least one channel and one sample");
  require(samples.allFinite(), ErrorCode::InvalidInput, "Recording: non-finite samples");
}

void WindowSpec::validate() const {
  if (mode == WindowMode::Sliding) {
    require(context_s > 0.0, ErrorCode::InvalidInput, "WindowSpec: context must be positive");
    require(step_s > 0.0 && step_s <= context_s, ErrorCode::InvalidInput,
            "WindowSpec: sliding mode needs 0 < step <= context");
  }
}

std::int64_t seconds_to_samples(double seconds, double sample_rate) {
  return static_cast<std::int64_t>(std::llround(seconds * sample_rate));
}

std::vector<Matrix> extract_windows(const Recording& rec, const TrialSpec& trial,
                                    const WindowSpec& spec) {
  spec.validate();
  require(trial.start_sample >= 0 && trial.start_sample < trial.end_sample &&
              trial.end_sample <= rec.n_samples(),
          ErrorCode::InvalidInput, "extract_windows: trial outside recording");
  const std::int64_t length = trial.length();
  const auto channels = rec.samples.rows();

  std::vector<Matrix> blocks;
  if (spec.mode == WindowMode::WholeTrial) {
    blocks.emplace_back(rec.samples.block(0, trial.start_sample, channels, length));
    return blocks;
  }

  const std::int64_t context = seconds_to_samples(spec.context_s, rec.sample_rate);
  const std::int64_t step = seconds_to_samples(spec.step_s, rec.sample_rate);
  require(context >= 1 && step >= 1, ErrorCode::InvalidInput,
          "extract_windows: window shorter than one sample");
  if (length < context) {
    fail(ErrorCode::WindowTooLong, "extract_windows: trial of " + std::to_string(length) +
                                       " samples is shorter than the context window of " +
                                       std::to_string(context));
  }
  const std::int64_t count = (length - context) / step + 1;
  blocks.reserve(static_cast<std::size_t>(count));
  for (std::int64_t w = 0; w < count; ++w) {
    blocks.emplace_back(rec.samples.block(0, trial.start_sample + w * step, channels, context));
  }
  return blocks;
}

SymMatrix edge_matrix(const Matrix& block, bool center) {
  require(block.cols() >= 2, ErrorCode::InvalidInput, "edge_matrix: window needs >= 2 samples");
  if (!center) return SymMatrix(block * block.transpose());
  Matrix centered = block.colwise() - block.rowwise().mean();
  return SymMatrix(centered * centered.transpose());
}

SymMatrix regularize(const SymMatrix& e, double eta) {
  require(eta >= 0.0 && eta < 1.0, ErrorCode::InvalidInput, "regularize: eta must be in [0, 1)");
  if (eta == 0.0) return e;  // also keeps signed zeros intact
  const int d = e.dim();
  return SymMatrix((1.0 - eta) * e.matrix() + eta * e.trace() * Matrix::Identity(d, d));
}

namespace {

// Direct form I biquad, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;

  void run(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> x) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (Eigen::Index n = 0; n < x.size(); ++n) {
      const double in = x(n);
      const double out = b0 * in + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = in;
      y2 = y1;
      y1 = out;
      x(n) = out;
    }
  }
};

enum class Kind { LowPass, HighPass, Notch };

// Bilinear-transform second-order sections (RBJ audio-EQ cookbook forms).
Biquad make_biquad(Kind kind, double freq, double q, double fs) {
  const double w0 = 2.0 * std::numbers::pi * freq / fs;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  double b0 = 0, b1 = 0, b2 = 0;
  switch (kind) {
    case Kind::LowPass:
      b0 = (1.0 - cw) / 2.0;
      b1 = 1.0 - cw;
      b2 = b0;
      break;
    case Kind::HighPass:
      b0 = (1.0 + cw) / 2.0;
      b1 = -(1.0 + cw);
      b2 = b0;
      break;
    case Kind::Notch:
      b0 = 1.0;
      b1 = -2.0 * cw;
      b2 = 1.0;
      break;
  }
  return Biquad{b0 / a0, b1 / a0, b2 / a0, (-2.0 * cw) / a0, (1.0 - alpha) / a0};
}

// Section Q factors of a 4th-order Butterworth response.
constexpr std::array<double, 2> kButterworth4Q{0.54119610014619698, 1.3065629648763766};

}  // namespace

Recording apply_filters(const Recording& rec, const FilterOptions& options) {
  rec.validate();
  std::vector<Biquad> chain;
  const double nyquist = rec.sample_rate / 2.0;
  if (options.bandpass) {
    if (options.band_low_hz > 0.0 && options.band_low_hz < nyquist) {
      for (double q : kButterworth4Q) {
        chain.push_back(make_biquad(Kind::HighPass, options.band_low_hz, q, rec.sample_rate));
      }
    }
    if (options.band_high_hz > 0.0 && options.band_high_hz < nyquist) {
      for (double q : kButterworth4Q) {
        chain.push_back(make_biquad(Kind::LowPass, options.band_high_hz, q, rec.sample_rate));
      }
    }
  }
  if (options.notch && options.notch_hz > 0.0 && options.notch_hz < nyquist) {
    chain.push_back(make_biquad(Kind::Notch, options.notch_hz, options.notch_q, rec.sample_rate));
  }
  Recording out = rec;
  for (Eigen::Index c = 0; c < out.samples.rows(); ++c) {
    for (const auto& section : chain) section.run(out.samples.row(c));
  }
  return out;
}

}  // namespace spdsemg
