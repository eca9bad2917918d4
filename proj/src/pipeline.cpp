#include "spdsemg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "spdsemg/analysis.hpp"
#include "spdsemg/decoders.hpp"
#include "spdsemg/error.hpp"
#include "spdsemg/random.hpp"

namespace spdsemg {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

[[noreturn]] void config_error(const std::string& what) { fail(ErrorCode::ConfigError, what); }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) config_error(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (allowed.count(key) == 0) config_error(where + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(where + ": bad value for \"" + key + "\"");
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Flat {
  std::vector<SymMatrix> matrices;
  std::vector<int> labels;
};

Flat flatten(const Dataset& data, const std::vector<int>& index) {
  Flat out;
  for (int i : index) {
    const Sample& s = data.samples[static_cast<std::size_t>(i)];
    for (const auto& w : s.windows) {
      out.matrices.push_back(w);
      out.labels.push_back(s.label);
    }
  }
  return out;
}

std::vector<LabeledSpd> labeled_spd(const Flat& f) {
  std::vector<LabeledSpd> out;
  for (std::size_t i = 0; i < f.matrices.size(); ++i) out.push_back({f.matrices[i], f.labels[i]});
  return out;
}

std::vector<LabeledSequence> labeled_sequences(const Dataset& data, const std::vector<int>& index) {
  std::vector<LabeledSequence> out;
  for (int i : index) {
    const Sample& s = data.samples[static_cast<std::size_t>(i)];
    out.push_back({s.windows, s.label});
  }
  return out;
}

Vector full_scores(const MdmModel& model, const CholeskyPoint& x, int classes) {
  Vector scores = Vector::Constant(classes, -std::numeric_limits<double>::infinity());
  const Vector s = mdm_scores(model, x);
  for (std::size_t c = 0; c < model.class_ids.size(); ++c) scores(model.class_ids[c]) = s(static_cast<Eigen::Index>(c));
  return scores;
}

json history_json(const std::vector<EpochMetrics>& history) {
  json out = json::array();
  for (const auto& m : history) {
    out.push_back({{"epoch", m.epoch},
                   {"loss", m.loss},
                   {"train_accuracy", m.train_accuracy},
                   {"val_accuracy", m.val_accuracy}});
  }
  return out;
}

// Fills the classification part of the report from test logits.
ExperimentResult classification_report(json& report, const Dataset& data, const Matrix& logits,
                                       const std::vector<int>& labels, int topk) {
  const int classes = static_cast<int>(data.vocabulary.size());
  std::vector<int> predicted;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) predicted.push_back(argmax(logits.row(i).transpose()));
  const Matrix confusion = confusion_matrix(labels, predicted, classes);
  ExperimentResult result;
  result.accuracy = confusion_accuracy(confusion);
  result.topk = topk_table(logits, labels, std::min(topk, classes));
  report["accuracy"] = result.accuracy;
  report["topk"] = result.topk;
  json per_class = json::object();
  const auto pc = per_class_accuracy(confusion);
  for (int c = 0; c < classes; ++c) per_class[data.vocabulary[static_cast<std::size_t>(c)]] = pc[static_cast<std::size_t>(c)];
  report["per_class_accuracy"] = per_class;
  json rows = json::array();
  for (Eigen::Index i = 0; i < confusion.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < confusion.cols(); ++j) row.push_back(static_cast<std::int64_t>(confusion(i, j)));
    rows.push_back(row);
  }
  report["confusion"] = rows;
  return result;
}

json report_header(const ExperimentConfig& config, const Dataset& data, std::size_t n_train,
                   std::size_t n_test) {
  json report;
  report["model"] = to_string(config.model);
  report["seed"] = config.seed;
  report["validation"] = config.validation == ValidationSource::Test ? "test" : "train";
  report["vocabulary"] = data.vocabulary;
  report["channels"] = data.channels;
  report["n_train"] = n_train;
  report["n_test"] = n_test;
  return report;
}

void fill_model_dims(ExperimentConfig& config, const Dataset& data) {
  const int classes = static_cast<int>(data.vocabulary.size());
  config.spdnet.classes = classes;
  config.gru.classes = classes;
  config.spdnet.seed = config.seed;
  config.gru.seed = config.seed;
  if (config.dims_from_data) {
    config.spdnet.dims = {data.channels, data.channels};
    config.gru.frontend_dims = {data.channels, data.channels};
  }
  require(config.spdnet.dims.front() == data.channels &&
              config.gru.frontend_dims.front() == data.channels,
          ErrorCode::ConfigError, "model input size does not match the channel count");
}

ExperimentResult finish(const ExperimentConfig& config, json& report, ExperimentResult result) {
  result.metrics_json = report.dump(2) + "\n";
  if (config.metrics_path) write_file(*config.metrics_path, result.metrics_json);
  return result;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mdm: return "mdm";
    case ModelKind::KMedoids: return "kmedoids";
    case ModelKind::SpdNet: return "spdnet";
    case ModelKind::Gru: return "gru";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "mdm") return ModelKind::Mdm;
  if (name == "kmedoids") return ModelKind::KMedoids;
  if (name == "spdnet") return ModelKind::SpdNet;
  if (name == "gru") return ModelKind::Gru;
  config_error("unknown model kind \"" + name + "\"");
}

void ExperimentConfig::validate() const {
  if (manifests.empty()) config_error("config: no manifests");
  try {
    window.validate();
  } catch (const Error& e) {
    config_error(std::string("config: ") + e.what());
  }
  if (!(eta >= 0.0 && eta < 1.0)) config_error("config: eta must be in [0, 1)");
  if (split.rule == SplitRule::ByRepetitionIndex && split.train_repetitions < 1) {
    config_error("config: train_repetitions must be >= 1");
  }
  if (split.rule == SplitRule::BySession && split.test_sessions.empty()) {
    config_error("config: by-session split needs test_sessions");
  }
  if (clusters < 0) config_error("config: clusters must be >= 0");
  if (topk < 1) config_error("config: topk must be >= 1");
  if (model == ModelKind::KMedoids && checkpoint_path) {
    config_error("config: k-medoids has no checkpoint");
  }
  if (model == ModelKind::Gru && window.mode != WindowMode::Sliding) {
    config_error("config: the GRU model needs a sliding window");
  }
  if (!dims_from_data) {
    spdnet.validate();
    gru.validate();
  }
}

std::vector<std::string> preset_names() {
  return {"words-1.5s", "gru-150ms-30ms", "sentences-400ms-100ms", "passage-100ms"};
}

void apply_preset(ExperimentConfig& config, const std::string& name) {
  auto sliding = [&](double context, double step) {
    config.window = WindowSpec{WindowMode::Sliding, context, step};
  };
  if (name == "words-1.5s") {
    sliding(1.5, 1.5);
    config.model = ModelKind::Mdm;
    config.split = SplitConfig{SplitRule::ByRepetitionIndex, 3, {}};
  } else if (name == "gru-150ms-30ms") {
    sliding(0.15, 0.03);
    config.model = ModelKind::Gru;
  } else if (name == "sentences-400ms-100ms") {
    sliding(0.4, 0.1);
    config.model = ModelKind::SpdNet;
  } else if (name == "passage-100ms") {
    sliding(0.1, 0.1);
    config.model = ModelKind::Mdm;
  } else {
    config_error("unknown preset \"" + name + "\"");
  }
}

ExperimentConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    config_error(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j,
             {"preset", "manifests", "window", "eta", "center", "filter", "model", "split",
              "validation", "seed", "topk", "output"},
             "config");
  ExperimentConfig c;
  if (j.contains("preset")) apply_preset(c, j.at("preset").get<std::string>());

  std::vector<std::string> manifests;
  read_opt(j, "manifests", manifests, "config");
  for (const auto& m : manifests) c.manifests.push_back(resolve_path(m, base_dir));

  if (j.contains("window")) {
    const json& w = j.at("window");
    check_keys(w, {"mode", "context_s", "step_s"}, "window");
    std::string mode = c.window.mode == WindowMode::Sliding ? "sliding" : "whole-trial";
    read_opt(w, "mode", mode, "window");
    if (mode == "sliding") {
      c.window.mode = WindowMode::Sliding;
    } else if (mode == "whole-trial") {
      c.window.mode = WindowMode::WholeTrial;
    } else {
      config_error("window: mode must be \"sliding\" or \"whole-trial\"");
    }
    read_opt(w, "context_s", c.window.context_s, "window");
    read_opt(w, "step_s", c.window.step_s, "window");
  }
  read_opt(j, "eta", c.eta, "config");
  read_opt(j, "center", c.center, "config");
  if (j.contains("filter")) {
    const json& f = j.at("filter");
    check_keys(f, {"bandpass", "band_low_hz", "band_high_hz", "notch", "notch_hz", "notch_q"}, "filter");
    read_opt(f, "bandpass", c.filter.bandpass, "filter");
    read_opt(f, "band_low_hz", c.filter.band_low_hz, "filter");
    read_opt(f, "band_high_hz", c.filter.band_high_hz, "filter");
    read_opt(f, "notch", c.filter.notch, "filter");
    read_opt(f, "notch_hz", c.filter.notch_hz, "filter");
    read_opt(f, "notch_q", c.filter.notch_q, "filter");
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m,
               {"kind", "dims", "eps", "learning_rate", "epochs", "batch_size", "head_init_scale",
                "ode_hidden", "ode_steps", "init_scale", "clusters"},
               "model");
    if (m.contains("kind")) c.model = model_kind_from_string(m.at("kind").get<std::string>());
    if (m.contains("dims")) {
      std::vector<int> dims;
      read_opt(m, "dims", dims, "model");
      c.spdnet.dims = dims;
      c.gru.frontend_dims = dims;
      c.dims_from_data = false;
    }
    double eps = c.spdnet.eps;
    read_opt(m, "eps", eps, "model");
    c.spdnet.eps = c.gru.eps = eps;
    double lr = c.spdnet.learning_rate;
    read_opt(m, "learning_rate", lr, "model");
    c.spdnet.learning_rate = c.gru.learning_rate = lr;
    if (m.contains("epochs")) {
      int epochs = 0;
      read_opt(m, "epochs", epochs, "model");
      c.spdnet.epochs = c.gru.epochs = epochs;
    }
    int batch = 0;
    read_opt(m, "batch_size", batch, "model");
    c.spdnet.batch_size = c.gru.batch_size = batch;
    read_opt(m, "head_init_scale", c.spdnet.head_init_scale, "model");
    read_opt(m, "ode_hidden", c.gru.ode_hidden, "model");
    read_opt(m, "ode_steps", c.gru.ode_steps, "model");
    read_opt(m, "init_scale", c.gru.init_scale, "model");
    read_opt(m, "clusters", c.clusters, "model");
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, {"rule", "train_repetitions", "test_sessions"}, "split");
    std::string rule = "by-repetition-index";
    read_opt(s, "rule", rule, "split");
    if (rule == "by-repetition-index") {
      c.split.rule = SplitRule::ByRepetitionIndex;
    } else if (rule == "by-session") {
      c.split.rule = SplitRule::BySession;
    } else {
      config_error("split: rule must be \"by-repetition-index\" or \"by-session\"");
    }
    read_opt(s, "train_repetitions", c.split.train_repetitions, "split");
    read_opt(s, "test_sessions", c.split.test_sessions, "split");
  }
  if (j.contains("validation")) {
    std::string v;
    read_opt(j, "validation", v, "config");
    if (v == "test") {
      c.validation = ValidationSource::Test;
    } else if (v == "train") {
      c.validation = ValidationSource::Train;
    } else {
      config_error("config: validation must be \"test\" or \"train\"");
    }
  }
  read_opt(j, "seed", c.seed, "config");
  read_opt(j, "topk", c.topk, "config");
  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, {"metrics", "checkpoint"}, "output");
    if (o.contains("metrics")) c.metrics_path = resolve_path(o.at("metrics").get<std::string>(), base_dir);
    if (o.contains("checkpoint")) {
      c.checkpoint_path = resolve_path(o.at("checkpoint").get<std::string>(), base_dir);
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

// ---- data ------------------------------------------------------------------------

Dataset build_dataset(const std::vector<Manifest>& manifests, const WindowSpec& window, double eta,
                      bool center, const FilterOptions& filter) {
  require(!manifests.empty(), ErrorCode::InvalidInput, "build_dataset: no manifests");
  Dataset data;
  data.vocabulary = manifests.front().vocabulary;
  for (const Manifest& m : manifests) {
    require(m.vocabulary == data.vocabulary, ErrorCode::InvalidInput,
            "build_dataset: manifests disagree on the vocabulary");
    const Recording rec = apply_filters(load_recording(m.recording), filter);
    if (data.channels == 0) data.channels = rec.channels();
    require(rec.channels() == data.channels, ErrorCode::InvalidInput,
            "build_dataset: recordings disagree on the channel count");
    std::map<std::pair<std::string, int>, int> seen;
    const std::string stem = m.recording.stem().string();
    for (std::size_t t = 0; t < m.trials.size(); ++t) {
      const TrialSpec& spec = m.trials[t];
      Sample s;
      s.label = spec.class_id;
      s.session = spec.session;
      s.repetition = spec.repetition;
      s.rank = seen[{spec.session, spec.class_id}]++;
      s.source = stem + "#" + std::to_string(t);
      for (const Matrix& block : extract_windows(rec, spec, window)) {
        s.windows.push_back(regularize(edge_matrix(block, center), eta));
      }
      data.samples.push_back(std::move(s));
    }
  }
  return data;
}

Dataset build_dataset(const ExperimentConfig& config) {
  std::vector<Manifest> manifests;
  for (const auto& p : config.manifests) manifests.push_back(load_manifest(p));
  return build_dataset(manifests, config.window, config.eta, config.center, config.filter);
}

Split split_dataset(const Dataset& data, const SplitConfig& split) {
  Split out;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    bool train = false;
    if (split.rule == SplitRule::ByRepetitionIndex) {
      train = s.rank < split.train_repetitions;
    } else {
      train = std::find(split.test_sessions.begin(), split.test_sessions.end(), s.session) ==
              split.test_sessions.end();
    }
    (train ? out.train : out.test).push_back(static_cast<int>(i));
  }
  return out;
}

// ---- experiments -----------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentConfig& config_in) {
  config_in.validate();
  ExperimentConfig config = config_in;
  const Dataset data = build_dataset(config);
  fill_model_dims(config, data);
  const int classes = static_cast<int>(data.vocabulary.size());

  if (config.model == ModelKind::KMedoids) {
    std::vector<int> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    const Flat flat = flatten(data, all);
    std::vector<CholeskyPoint> points;
    for (const auto& m : flat.matrices) points.push_back(to_cholesky(m));
    const int k = config.clusters > 0 ? config.clusters : classes;
    const KMedoidsResult km = k_medoids(pairwise_distances(points), k, config.seed);
    json report = report_header(config, data, 0, points.size());
    ExperimentResult result;
    const std::set<int> distinct(flat.labels.begin(), flat.labels.end());
    const std::set<int> used(km.assignments.begin(), km.assignments.end());
    if (distinct.size() == used.size()) {
      result.accuracy = clustering_accuracy(km.assignments, flat.labels);
      report["accuracy"] = result.accuracy;
    } else {
      report["accuracy"] = nullptr;
    }
    report["clusters"] = k;
    report["adjusted_rand_index"] = adjusted_rand_index(km.assignments, flat.labels);
    report["assignments"] = km.assignments;
    report["medoids"] = km.medoids;
    report["cost_trace"] = km.cost_trace;
    report["iterations"] = km.iterations;
    return finish(config, report, std::move(result));
  }

  const Split split = split_dataset(data, config.split);
  require(!split.train.empty() && !split.test.empty(), ErrorCode::InvalidInput,
          "run_experiment: split leaves the training or test set empty");

  if (config.model == ModelKind::Mdm) {
    const Flat train = flatten(data, split.train);
    const Flat test = flatten(data, split.test);
    std::vector<LabeledPoint> points;
    for (std::size_t i = 0; i < train.matrices.size(); ++i) {
      points.push_back({to_cholesky(train.matrices[i]), train.labels[i]});
    }
    const MdmModel model = mdm_fit(points);
    Matrix logits(static_cast<Eigen::Index>(test.matrices.size()), classes);
    for (std::size_t i = 0; i < test.matrices.size(); ++i) {
      logits.row(static_cast<Eigen::Index>(i)) =
          full_scores(model, to_cholesky(test.matrices[i]), classes).transpose();
    }
    json report = report_header(config, data, train.matrices.size(), test.matrices.size());
    ExperimentResult result = classification_report(report, data, logits, test.labels, config.topk);
    if (config.checkpoint_path) save_checkpoint(to_checkpoint(model, data.vocabulary), *config.checkpoint_path);
    return finish(config, report, std::move(result));
  }

  if (config.model == ModelKind::SpdNet) {
    const Flat train_flat = flatten(data, split.train);
    const Flat test_flat = flatten(data, split.test);
    const auto train = labeled_spd(train_flat);
    const auto test = labeled_spd(test_flat);
    const auto& validation = config.validation == ValidationSource::Test ? test : train;
    const SpdNetTrainResult trained = spdnet_train(config.spdnet, train, validation);
    Matrix logits(static_cast<Eigen::Index>(test.size()), classes);
    for (std::size_t i = 0; i < test.size(); ++i) {
      logits.row(static_cast<Eigen::Index>(i)) = trained.model.forward(test[i].matrix).transpose();
    }
    json report = report_header(config, data, train.size(), test.size());
    ExperimentResult result = classification_report(report, data, logits, test_flat.labels, config.topk);
    report["training"] = {{"parameter_count", trained.model.parameter_count()},
                          {"best_epoch", trained.best_epoch},
                          {"best_val_accuracy", trained.best_val_accuracy},
                          {"history", history_json(trained.history)}};
    if (config.checkpoint_path) {
      save_checkpoint(to_checkpoint(trained.model, data.vocabulary), *config.checkpoint_path);
    }
    return finish(config, report, std::move(result));
  }

  const auto train = labeled_sequences(data, split.train);
  const auto test = labeled_sequences(data, split.test);
  const auto& validation = config.validation == ValidationSource::Test ? test : train;
  const GruTrainResult trained = gru_train(config.gru, train, validation);
  Matrix logits(static_cast<Eigen::Index>(test.size()), classes);
  std::vector<int> labels;
  for (std::size_t i = 0; i < test.size(); ++i) {
    logits.row(static_cast<Eigen::Index>(i)) = trained.model.forward(test[i].sequence).transpose();
    labels.push_back(test[i].label);
  }
  json report = report_header(config, data, train.size(), test.size());
  ExperimentResult result = classification_report(report, data, logits, labels, config.topk);
  report["training"] = {{"parameter_count", trained.model.parameter_count()},
                        {"best_epoch", trained.best_epoch},
                        {"best_val_accuracy", trained.best_val_accuracy},
                        {"history", history_json(trained.history)}};
  if (config.checkpoint_path) {
    save_checkpoint(to_checkpoint(trained.model, data.vocabulary), *config.checkpoint_path);
  }
  return finish(config, report, std::move(result));
}

ExperimentResult evaluate_checkpoint(const ExperimentConfig& config_in, const Checkpoint& ck) {
  config_in.validate();
  ExperimentConfig config = config_in;
  config.model = model_kind_from_string(ck.kind);
  config.checkpoint_path.reset();
  const Dataset data = build_dataset(config);
  require(checkpoint_vocabulary(ck) == data.vocabulary, ErrorCode::InvalidInput,
          "eval: checkpoint vocabulary does not match the data");
  const int classes = static_cast<int>(data.vocabulary.size());
  const Split split = split_dataset(data, config.split);
  require(!split.test.empty(), ErrorCode::InvalidInput, "eval: the test split is empty");

  Matrix logits;
  std::vector<int> labels;
  if (config.model == ModelKind::Gru) {
    const GruModel model = gru_from_checkpoint(ck);
    const auto test = labeled_sequences(data, split.test);
    logits.resize(static_cast<Eigen::Index>(test.size()), classes);
    for (std::size_t i = 0; i < test.size(); ++i) {
      logits.row(static_cast<Eigen::Index>(i)) = model.forward(test[i].sequence).transpose();
      labels.push_back(test[i].label);
    }
  } else {
    const Flat test = flatten(data, split.test);
    labels = test.labels;
    logits.resize(static_cast<Eigen::Index>(test.matrices.size()), classes);
    if (config.model == ModelKind::Mdm) {
      const MdmModel model = mdm_from_checkpoint(ck);
      for (std::size_t i = 0; i < test.matrices.size(); ++i) {
        logits.row(static_cast<Eigen::Index>(i)) =
            full_scores(model, to_cholesky(test.matrices[i]), classes).transpose();
      }
    } else {
      const SpdNetModel model = spdnet_from_checkpoint(ck);
      for (std::size_t i = 0; i < test.matrices.size(); ++i) {
        logits.row(static_cast<Eigen::Index>(i)) = model.forward(test.matrices[i]).transpose();
      }
    }
  }
  json report = report_header(config, data, 0, labels.size());
  ExperimentResult result = classification_report(report, data, logits, labels, config.topk);
  return finish(config, report, std::move(result));
}

DistanceMatrix export_distances(const std::vector<Manifest>& manifests, const WindowSpec& window,
                                double eta, bool center, const fs::path& path) {
  const Dataset data = build_dataset(manifests, window, eta, center, FilterOptions{});
  std::vector<CholeskyPoint> points;
  std::string labels = "index,label,session,repetition,source,window\n";
  for (const Sample& s : data.samples) {
    for (std::size_t w = 0; w < s.windows.size(); ++w) {
      labels += std::to_string(points.size()) + "," + data.vocabulary[static_cast<std::size_t>(s.label)] +
                "," + s.session + "," + std::to_string(s.repetition) + "," + s.source + "," +
                std::to_string(w) + "\n";
      points.push_back(to_cholesky(s.windows[w]));
    }
  }
  DistanceMatrix d = pairwise_distances(points);
  std::string csv;
  for (int i = 0; i < d.size(); ++i) {
    for (int j = 0; j < d.size(); ++j) {
      if (j > 0) csv += ",";
      csv += format_double(d(i, j));
    }
    csv += "\n";
  }
  write_file(path, csv);
  write_file(fs::path(path.string() + ".labels.csv"), labels);
  return d;
}

std::vector<fs::path> write_synthetic_bundle(const SyntheticSpec& spec, const fs::path& dir) {
  require(spec.channels >= 1 && spec.sample_rate > 0.0 && !spec.labels.empty() &&
              spec.repetitions >= 1 && !spec.sessions.empty(),
          ErrorCode::InvalidInput, "write_synthetic_bundle: bad spec");
  Pcg32 rng(spec.seed);
  const int c = spec.channels;
  std::vector<Matrix> mixing;
  for (std::size_t k = 0; k < spec.labels.size(); ++k) {
    Matrix a = Matrix::Identity(c, c);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] += 0.8 * rng.normal();
    mixing.push_back(std::move(a));
  }
  const auto trial_len = seconds_to_samples(spec.trial_seconds, spec.sample_rate);
  const auto gap_len = seconds_to_samples(spec.gap_seconds, spec.sample_rate);
  const auto n_trials = static_cast<std::int64_t>(spec.labels.size()) * spec.repetitions;
  const std::int64_t total = gap_len + n_trials * (trial_len + gap_len);

  std::vector<fs::path> out;
  for (const std::string& session : spec.sessions) {
    Recording rec;
    rec.sample_rate = spec.sample_rate;
    rec.samples.resize(c, total);
    for (Eigen::Index i = 0; i < rec.samples.size(); ++i) rec.samples.data()[i] = spec.noise * rng.normal();
    Manifest m;
    m.session = session;
    m.vocabulary = spec.labels;
    std::int64_t pos = gap_len;
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      for (std::size_t k = 0; k < spec.labels.size(); ++k) {
        for (std::int64_t t = 0; t < trial_len; ++t) {
          Vector z(c);
          for (int i = 0; i < c; ++i) z(i) = rng.normal();
          rec.samples.col(pos + t) += mixing[k] * z;
        }
        m.trials.push_back(TrialSpec{spec.labels[k], static_cast<int>(k), pos, pos + trial_len,
                                     session, rep});
        pos += trial_len + gap_len;
      }
    }
    // Store what the float32 file will hold so the manifest matches the data.
    rec.samples = rec.samples.cast<float>().cast<double>();
    const fs::path rec_path = dir / (session + ".semg");
    const fs::path manifest_path = dir / (session + ".json");
    write_recording(rec, rec_path);
    m.recording = rec_path;
    save_manifest(m, manifest_path);
    out.push_back(manifest_path);
  }
  return out;
}

}  // namespace spdsemg
