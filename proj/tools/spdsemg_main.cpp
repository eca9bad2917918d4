#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "spdsemg/analysis.hpp"
#include "spdsemg/error.hpp"
#include "spdsemg/io.hpp"
#include "spdsemg/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace spdsemg;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    require(used == s.size(), ErrorCode::FormatError, where + ": not a number: " + s);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorCode::FormatError, where + ": not a number: " + s);
  }
}

// Signal CSV: a header row, then one row per sample with one column per channel.
Recording read_signal_csv(const fs::path& path, double rate) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::InvalidInput, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::FormatError, "signal CSV is empty");
  const std::size_t channels = split_csv_line(line).size();
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == channels, ErrorCode::FormatError,
            "signal CSV: row " + std::to_string(rows.size() + 2) + " has the wrong column count");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_number(c, "signal CSV"));
    rows.push_back(std::move(row));
  }
  Recording rec;
  rec.sample_rate = rate;
  rec.samples.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      rec.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = rows[t][c];
    }
  }
  rec.validate();
  return rec;
}

// Trials CSV: header "label,start_s,end_s[,repetition]"; times in seconds.
std::vector<TrialSpec> read_trials_csv(const fs::path& path, double rate, const std::string& session,
                                       std::vector<std::string>& vocabulary) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::InvalidInput, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<TrialSpec> trials;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == 3 || cells.size() == 4, ErrorCode::FormatError,
            "trials CSV: expected label,start_s,end_s[,repetition]");
    TrialSpec t;
    t.label = cells[0];
    t.start_sample = seconds_to_samples(parse_number(cells[1], "trials CSV"), rate);
    t.end_sample = seconds_to_samples(parse_number(cells[2], "trials CSV"), rate);
    t.session = session;
    t.repetition = cells.size() == 4 ? static_cast<int>(parse_number(cells[3], "trials CSV")) : 0;
    auto it = std::find(vocabulary.begin(), vocabulary.end(), t.label);
    if (it == vocabulary.end()) {
      vocabulary.push_back(t.label);
      it = vocabulary.end() - 1;
    }
    t.class_id = static_cast<int>(it - vocabulary.begin());
    trials.push_back(std::move(t));
  }
  std::stable_sort(trials.begin(), trials.end(),
                   [](const TrialSpec& a, const TrialSpec& b) { return a.start_sample < b.start_sample; });
  return trials;
}

ExperimentConfig config_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
  ExperimentConfig c = load_config(path);
  if (seed) c.seed = *seed;
  return c;
}

BasisMatrix basis_from_checkpoint(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.kind == "spdnet") return BasisMatrix(spdnet_from_checkpoint(ck).first_bimap());
  if (ck.kind == "gru") {
    const auto& front = gru_from_checkpoint(ck).frontend();
    require(!front.empty(), ErrorCode::InvalidInput, "checkpoint has no BiMap layer");
    return BasisMatrix(std::get<BiMapLayer>(front.front()).weight.matrix());
  }
  fail(ErrorCode::InvalidInput, "checkpoint " + path + " has no BiMap weight");
}

std::vector<SymMatrix> all_windows(const Dataset& data) {
  std::vector<SymMatrix> out;
  for (const auto& s : data.samples) out.insert(out.end(), s.windows.begin(), s.windows.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariance-graph decoding of multichannel sEMG"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert signal and trial CSV files to a recording and manifest");
  std::string signal_csv, trials_csv, session = "s1", out_recording, out_manifest;
  double rate = 0.0;
  ingest->add_option("--signal", signal_csv, "Signal CSV (header, one column per channel)")->required();
  ingest->add_option("--trials", trials_csv, "Trials CSV (label,start_s,end_s[,repetition])")->required();
  ingest->add_option("--rate", rate, "Sample rate in Hz")->required();
  ingest->add_option("--session", session, "Session id");
  ingest->add_option("--out-recording", out_recording, "Output recording path")->required();
  ingest->add_option("--out-manifest", out_manifest, "Output manifest path")->required();

  // validate
  auto* validate = app.add_subcommand("validate", "Check a recording, manifest or config file");
  std::string validate_path;
  validate->add_option("path", validate_path, "File to check")->required();

  // run / train
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  auto* train = app.add_subcommand("train", "Train a model and save a checkpoint");
  std::string config_path, metrics_out, checkpoint_out;
  for (auto* cmd : {run, train}) {
    cmd->add_option("--config", config_path, "Experiment config JSON")->required();
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--metrics", metrics_out, "Metrics output path (overrides config)");
  }
  train->add_option("--checkpoint", checkpoint_out, "Checkpoint output path")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on the test split of a config");
  std::string eval_checkpoint;
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  eval->add_option("--config", config_path, "Experiment config JSON")->required();
  eval->add_option("--metrics", metrics_out, "Metrics output path");

  // export-distances
  auto* export_cmd = app.add_subcommand("export-distances", "Write the pairwise geodesic distance matrix");
  std::string export_out;
  export_cmd->add_option("--config", config_path, "Experiment config JSON")->required();
  export_cmd->add_option("--out", export_out, "Distance CSV path")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic recording bundle");
  std::string synth_dir;
  SyntheticSpec synth_spec;
  synth->add_option("--out", synth_dir, "Output directory")->required();
  synth->add_option("--channels", synth_spec.channels, "Channel count");
  synth->add_option("--rate", synth_spec.sample_rate, "Sample rate in Hz");
  synth->add_option("--repetitions", synth_spec.repetitions, "Repetitions per label and session");
  synth->add_option("--labels", synth_spec.labels, "Class labels");
  synth->add_option("--sessions", synth_spec.sessions, "Session ids");
  synth->add_option("--seed", synth_spec.seed, "Generator seed");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Diagnostics on trained bases and results");
  analyze->require_subcommand(1);
  std::string out_path;
  std::vector<std::string> checkpoints;
  bool per_trial = false;
  std::string metrics_in;

  auto* diag = analyze->add_subcommand("diag-ratio", "Off-diagonal ratio of Q^T E Q per window");
  diag->add_option("--config", config_path, "Experiment config JSON")->required();
  diag->add_option("--checkpoint", checkpoints, "Checkpoint holding Q")->required()->expected(1);
  diag->add_option("--out", out_path, "CSV output path (default stdout)");

  auto* angle = analyze->add_subcommand("basis-angle", "Pairwise angles between first BiMap weights");
  angle->add_option("--checkpoint", checkpoints, "Two or more checkpoints")->required()->expected(2, -1);
  angle->add_option("--out", out_path, "CSV output path (default stdout)");

  auto* importance = analyze->add_subcommand("importance", "Electrode importance from the dominant basis column");
  importance->add_option("--config", config_path, "Experiment config JSON")->required();
  importance->add_option("--checkpoint", checkpoints, "Checkpoint holding Q")->required()->expected(1);
  importance->add_flag("--per-trial", per_trial, "Pick the dominant column per trial");
  importance->add_option("--out", out_path, "CSV output path (default stdout)");

  auto* collapse = analyze->add_subcommand("collapse", "Accuracy with within-group confusions counted correct");
  collapse->add_option("--metrics", metrics_in, "Metrics JSON from run or eval")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      const Recording rec = read_signal_csv(signal_csv, rate);
      Manifest m;
      m.session = session;
      m.trials = read_trials_csv(trials_csv, rate, session, m.vocabulary);
      m.recording = fs::absolute(out_recording);
      write_recording(rec, out_recording);
      save_manifest(m, out_manifest);
      std::cout << "wrote " << out_recording << " (" << rec.channels() << " channels, " << rec.n_samples()
                << " samples) and " << out_manifest << " (" << m.trials.size() << " trials)\n";
    } else if (validate->parsed()) {
      const auto bytes = read_file(validate_path);
      if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "SEMG") {
        const Recording rec = decode_recording(bytes);
        std::cout << "recording ok: " << rec.channels() << " channels, " << rec.n_samples()
                  << " samples at " << rec.sample_rate << " Hz\n";
      } else {
        const json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
        require(!j.is_discarded() && j.is_object(), ErrorCode::FormatError,
                validate_path + ": neither a recording nor a JSON document");
        if (j.contains("trials")) {
          const Manifest m = load_manifest(validate_path);
          const Recording rec = load_recording(m.recording);
          for (const auto& t : m.trials) {
            require(t.end_sample <= rec.n_samples(), ErrorCode::InvalidInput,
                    "manifest: trial past the end of the recording");
          }
          std::cout << "manifest ok: " << m.trials.size() << " trials, " << m.vocabulary.size()
                    << " classes\n";
        } else {
          const ExperimentConfig c = load_config(validate_path);
          for (const auto& p : c.manifests) load_manifest(p);
          std::cout << "config ok: model " << to_string(c.model) << ", " << c.manifests.size()
                    << " manifest(s)\n";
        }
      }
    } else if (run->parsed() || train->parsed()) {
      ExperimentConfig c = config_with_seed(config_path, seed);
      if (!metrics_out.empty()) c.metrics_path = metrics_out;
      if (train->parsed()) {
        require(c.model != ModelKind::KMedoids, ErrorCode::ConfigError, "train: k-medoids has no model to save");
        c.checkpoint_path = checkpoint_out;
      }
      const ExperimentResult r = run_experiment(c);
      if (!c.metrics_path) std::cout << r.metrics_json;
      else std::cout << "accuracy " << fmt(r.accuracy) << "\n";
    } else if (eval->parsed()) {
      ExperimentConfig c = load_config(config_path);
      c.metrics_path.reset();
      if (!metrics_out.empty()) c.metrics_path = metrics_out;
      const ExperimentResult r = evaluate_checkpoint(c, load_checkpoint(eval_checkpoint));
      if (!c.metrics_path) std::cout << r.metrics_json;
      else std::cout << "accuracy " << fmt(r.accuracy) << "\n";
    } else if (export_cmd->parsed()) {
      const ExperimentConfig c = load_config(config_path);
      std::vector<Manifest> manifests;
      for (const auto& p : c.manifests) manifests.push_back(load_manifest(p));
      const DistanceMatrix d = export_distances(manifests, c.window, c.eta, c.center, export_out);
      std::cout << "wrote " << d.size() << "x" << d.size() << " distances to " << export_out << "\n";
    } else if (synth->parsed()) {
      for (const auto& p : write_synthetic_bundle(synth_spec, synth_dir)) std::cout << p.string() << "\n";
    } else if (diag->parsed()) {
      const BasisMatrix q = basis_from_checkpoint(checkpoints.front());
      const Dataset data = build_dataset(load_config(config_path));
      std::string csv = "source,window,label,ratio\n";
      for (const auto& s : data.samples) {
        for (std::size_t w = 0; w < s.windows.size(); ++w) {
          csv += s.source + "," + std::to_string(w) + "," + data.vocabulary[static_cast<std::size_t>(s.label)] +
                 "," + fmt(diag_ratio(s.windows[w], q)) + "\n";
        }
      }
      emit(csv, out_path);
    } else if (angle->parsed()) {
      std::vector<BasisMatrix> bases;
      for (const auto& p : checkpoints) bases.push_back(basis_from_checkpoint(p));
      std::string csv = "i,j,angle_rad\n";
      for (std::size_t i = 0; i < bases.size(); ++i) {
        for (std::size_t j = i + 1; j < bases.size(); ++j) {
          csv += std::to_string(i) + "," + std::to_string(j) + "," +
                 fmt(basis_angle(bases[i].matrix(), bases[j].matrix())) + "\n";
        }
      }
      emit(csv, out_path);
    } else if (importance->parsed()) {
      const BasisMatrix q = basis_from_checkpoint(checkpoints.front());
      const Dataset data = build_dataset(load_config(config_path));
      const auto edges = all_windows(data);
      const ImportanceReport rep = electrode_importance(
          edges, q, per_trial ? ColumnSelection::PerTrial : ColumnSelection::MeanEdge);
      std::string csv = "trial,node,column,kappa,rank\n";
      for (std::size_t t = 0; t < rep.kappa.size(); ++t) {
        std::vector<int> rank_of(rep.rank[t].size());
        for (std::size_t r = 0; r < rep.rank[t].size(); ++r) rank_of[static_cast<std::size_t>(rep.rank[t][r])] = static_cast<int>(r) + 1;
        for (Eigen::Index n = 0; n < rep.kappa[t].size(); ++n) {
          csv += std::to_string(t) + "," + std::to_string(n) + "," + std::to_string(rep.columns[t]) + "," +
                 fmt(rep.kappa[t](n)) + "," + std::to_string(rank_of[static_cast<std::size_t>(n)]) + "\n";
        }
      }
      emit(csv, out_path);
      std::cerr << "node,rank1,top3\n";
      for (std::size_t n = 0; n < rep.rank1_counts.size(); ++n) {
        std::cerr << n << "," << rep.rank1_counts[n] << "," << rep.top3_counts[n] << "\n";
      }
    } else if (collapse->parsed()) {
      const auto bytes = read_file(metrics_in);
      const json j = json::parse(bytes.begin(), bytes.end());
      const auto labels = j.at("vocabulary").get<std::vector<std::string>>();
      const auto rows = j.at("confusion").get<std::vector<std::vector<double>>>();
      Matrix confusion(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(labels.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == labels.size(), ErrorCode::FormatError, "metrics: ragged confusion matrix");
        for (std::size_t k = 0; k < rows[i].size(); ++k) {
          confusion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
        }
      }
      const PhonemeGroups groups = PhonemeGroups::articulatory(labels);
      std::cout << "raw " << fmt(confusion_accuracy(confusion)) << "\ncollapsed "
                << fmt(group_collapse(confusion, labels, groups)) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error [FormatError]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
