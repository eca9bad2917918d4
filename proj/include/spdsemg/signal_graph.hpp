#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spdsemg/linalg.hpp"

namespace spdsemg {

/// Multichannel signal, one row per channel (graph vertex).
struct Recording {
  double sample_rate = 0.0;
  Matrix samples;  // channels x n_samples

  int channels() const { return static_cast<int>(samples.rows()); }
  std::int64_t n_samples() const { return samples.cols(); }

  /// Throws InvalidInput unless rate > 0, at least one channel and sample,
  /// and every value is finite.
  void validate() const;
};

struct TrialSpec {
  std::string label;
  int class_id = 0;
  std::int64_t start_sample = 0;
  std::int64_t end_sample = 0;  // exclusive
  std::string session;
  int repetition = 0;

  std::int64_t length() const { return end_sample - start_sample; }
};

enum class WindowMode { WholeTrial, Sliding };

struct WindowSpec {
  WindowMode mode = WindowMode::WholeTrial;
  double context_s = 1.5;
  double step_s = 0.0;

  void validate() const;
};

/// Window length in samples: round(seconds * sample_rate).
std::int64_t seconds_to_samples(double seconds, double sample_rate);

/// Whole-trial mode yields the trial itself; sliding mode yields
/// floor((T - context) / step) + 1 left-aligned blocks with no padding.
/// Throws WindowTooLong when the trial is shorter than one context window.
std::vector<Matrix> extract_windows(const Recording& rec, const TrialSpec& trial,
                                    const WindowSpec& spec);

/// Gram matrix e_ij = f_i^T f_j over the block, optionally after removing
/// each channel's mean within the window.
SymMatrix edge_matrix(const Matrix& block, bool center = true);

/// (1 - eta) E + eta trace(E) I, for eta in [0, 1).
SymMatrix regularize(const SymMatrix& e, double eta);

struct FilterOptions {
  bool bandpass = false;  // 4th-order Butterworth, 10-1000 Hz
  double band_low_hz = 10.0;
  double band_high_hz = 1000.0;
  bool notch = false;  // second-order notch at notch_hz
  double notch_hz = 60.0;
  double notch_q = 30.0;
};

/// Causal IIR filtering of each channel; returns the input unchanged when no
/// filter is enabled. Cutoffs at or above Nyquist are skipped.
Recording apply_filters(const Recording& rec, const FilterOptions& options);

}  // namespace spdsemg
