#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spdsemg/gru.hpp"
#include "spdsemg/io.hpp"
#include "spdsemg/signal_graph.hpp"
#include "spdsemg/spdnet.hpp"

namespace spdsemg {

enum class ModelKind { Mdm, KMedoids, SpdNet, Gru };
enum class SplitRule { ByRepetitionIndex, BySession };
enum class ValidationSource { Test, Train };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct SplitConfig {
  SplitRule rule = SplitRule::ByRepetitionIndex;
  /// By repetition index: trials whose rank within (session, label) is below
  /// this go to training.
  int train_repetitions = 3;
  /// By session: these sessions form the test set.
  std::vector<std::string> test_sessions;
};

struct ExperimentConfig {
  std::vector<std::filesystem::path> manifests;
  WindowSpec window;
  double eta = 0.0;
  bool center = true;
  FilterOptions filter;
  ModelKind model = ModelKind::Mdm;
  SpdNetConfig spdnet;  // dims[0] and classes are filled from the data when unset
  GruModelConfig gru;
  bool dims_from_data = true;
  int clusters = 0;  // k-medoids; 0 = number of classes
  SplitConfig split;
  ValidationSource validation = ValidationSource::Test;
  std::uint64_t seed = 0;
  int topk = 5;
  std::optional<std::filesystem::path> metrics_path;
  std::optional<std::filesystem::path> checkpoint_path;

  /// Throws ConfigError for out-of-range settings.
  void validate() const;
};

/// Named protocol presets: "words-1.5s", "gru-150ms-30ms",
/// "sentences-400ms-100ms", "passage-100ms".
std::vector<std::string> preset_names();
void apply_preset(ExperimentConfig& config, const std::string& name);

/// Parses a JSON config; relative paths resolve against base_dir. Throws
/// ConfigError on schema problems.
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// One trial after windowing: its edge matrices in window order.
struct Sample {
  int label = 0;
  std::string session;
  int repetition = 0;
  int rank = 0;  // order of this trial among same-label trials of its session
  std::string source;  // "<manifest>#<trial index>"
  std::vector<SymMatrix> windows;
};

struct Dataset {
  std::vector<std::string> vocabulary;
  int channels = 0;
  std::vector<Sample> samples;
};

/// Loads every manifest, filters, windows and builds regularized edge
/// matrices. All manifests must share one vocabulary and channel count.
Dataset build_dataset(const std::vector<Manifest>& manifests, const WindowSpec& window, double eta,
                      bool center, const FilterOptions& filter);
Dataset build_dataset(const ExperimentConfig& config);

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};

Split split_dataset(const Dataset& data, const SplitConfig& split);

struct ExperimentResult {
  std::string metrics_json;
  double accuracy = 0.0;
  std::vector<double> topk;
};

/// Runs the configured pipeline; writes metrics and an optional checkpoint
/// when paths are configured. The metrics JSON has no timing fields, so a
/// fixed config and seed give identical bytes.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Scores a saved model on the test split of the configured data.
ExperimentResult evaluate_checkpoint(const ExperimentConfig& config, const Checkpoint& ck);

/// Pairwise geodesic distances between the Cholesky factors of every window
/// in manifest order. Writes `path` (CSV, no header) and `path.labels.csv`.
DistanceMatrix export_distances(const std::vector<Manifest>& manifests, const WindowSpec& window,
                                double eta, bool center, const std::filesystem::path& path);

struct SyntheticSpec {
  int channels = 4;
  double sample_rate = 200.0;
  std::vector<std::string> labels{"Alfa", "Bravo", "Charlie"};
  int repetitions = 5;
  std::vector<std::string> sessions{"s1", "s2"};
  double trial_seconds = 1.6;
  double gap_seconds = 0.2;
  double noise = 0.05;
  std::uint64_t seed = 7;
};

/// Writes one recording and manifest per session into dir, and returns the
/// manifest paths. Each class mixes white noise through its own random
/// channel-mixing matrix, so classes differ in covariance.
std::vector<std::filesystem::path> write_synthetic_bundle(const SyntheticSpec& spec,
                                                          const std::filesystem::path& dir);

}  // namespace spdsemg
