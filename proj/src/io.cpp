#include "spdsemg/io.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "spdsemg/error.hpp"

namespace spdsemg {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, const char* who) : data_(data), who_(who) {}

  void need(std::uint64_t n) const {
    require(n <= data_.size() - pos_, ErrorCode::FormatError, std::string(who_) + ": truncated data");
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& data_;
  const char* who_;
  std::size_t pos_ = 0;
};

const std::string kDataRootToken = "${SPDSEMG_DATA_ROOT}";

void put_tensor(Checkpoint& ck, const Matrix& m) { ck.tensors.push_back(m); }
void put_vector(Checkpoint& ck, const Vector& v) { ck.tensors.push_back(Matrix(v)); }

class TensorCursor {
 public:
  explicit TensorCursor(const Checkpoint& ck) : ck_(ck) {}
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    require(next_ < ck_.tensors.size(), ErrorCode::FormatError, "checkpoint: missing tensors");
    const Matrix& m = ck_.tensors[next_++];
    require(m.rows() == rows && m.cols() == cols, ErrorCode::FormatError,
            "checkpoint: tensor shape mismatch");
    return m;
  }
  Vector vector(Eigen::Index n) { return matrix(n, 1).col(0); }
  void finish() const {
    require(next_ == ck_.tensors.size(), ErrorCode::FormatError, "checkpoint: extra tensors");
  }

 private:
  const Checkpoint& ck_;
  std::size_t next_ = 0;
};

json parse_header(const Checkpoint& ck) {
  try {
    return json::parse(ck.header_json);
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("checkpoint: bad header: ") + e.what());
  }
}

template <typename T>
T header_get(const json& h, const char* key) {
  require(h.contains(key), ErrorCode::FormatError, std::string("checkpoint: header lacks ") + key);
  try {
    return h.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("checkpoint: bad header field ") + key);
  }
}

void expect_kind(const Checkpoint& ck, const char* kind) {
  require(ck.kind == kind, ErrorCode::FormatError,
          "checkpoint: expected a " + std::string(kind) + " model, found " + ck.kind);
}

std::vector<Matrix> bimap_weights(const std::vector<SpdLayer>& layers) {
  std::vector<Matrix> out;
  for (const auto& layer : layers) {
    if (const auto* b = std::get_if<BiMapLayer>(&layer)) out.push_back(b->weight.matrix());
  }
  return out;
}

std::vector<SpdLayer> read_frontend(TensorCursor& cur, const std::vector<int>& dims, double eps) {
  std::vector<SpdLayer> layers;
  for (std::size_t s = 0; s + 1 < dims.size(); ++s) {
    layers.emplace_back(BiMapLayer{StiefelParameter(cur.matrix(dims[s], dims[s + 1]))});
    layers.emplace_back(ReEigLayer{eps});
  }
  return layers;
}

}  // namespace

// ---- files -------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::InvalidInput, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

namespace {
void write_bytes(const fs::path& path, const char* data, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::InvalidInput, "cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(n));
  require(static_cast<bool>(out), ErrorCode::InvalidInput, "write failed: " + path.string());
}
}  // namespace

void write_file(const fs::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

// ---- recordings ------------------------------------------------------------------

std::vector<std::uint8_t> encode_recording(const Recording& rec) {
  rec.validate();
  Writer w;
  w.bytes("SEMG", 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(rec.channels()));
  w.u64(static_cast<std::uint64_t>(rec.n_samples()));
  w.f64(rec.sample_rate);
  for (Eigen::Index c = 0; c < rec.samples.rows(); ++c) {
    for (Eigen::Index t = 0; t < rec.samples.cols(); ++t) w.f32(static_cast<float>(rec.samples(c, t)));
  }
  return w.take();
}

Recording decode_recording(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes, "recording");
  require(bytes.size() >= 4 && r.bytes(4) == "SEMG", ErrorCode::FormatError, "recording: bad magic");
  const std::uint32_t version = r.u32();
  require(version == kVersion, ErrorCode::UnsupportedVersion,
          "recording: unsupported version " + std::to_string(version));
  const std::uint32_t channels = r.u32();
  const std::uint64_t samples = r.u64();
  Recording rec;
  rec.sample_rate = r.f64();
  require(channels > 0 && samples > 0, ErrorCode::FormatError, "recording: empty header");
  require(samples <= r.remaining() / 4 / channels, ErrorCode::FormatError,
          "recording: declared samples exceed payload");
  require(r.remaining() == static_cast<std::uint64_t>(channels) * samples * 4,
          ErrorCode::FormatError, "recording: trailing bytes after payload");
  rec.samples.resize(channels, static_cast<Eigen::Index>(samples));
  for (Eigen::Index c = 0; c < rec.samples.rows(); ++c) {
    for (Eigen::Index t = 0; t < rec.samples.cols(); ++t) rec.samples(c, t) = r.f32();
  }
  try {
    rec.validate();
  } catch (const Error& e) {
    fail(ErrorCode::FormatError, std::string("recording: ") + e.what());
  }
  return rec;
}

Recording load_recording(const fs::path& path) { return decode_recording(read_file(path)); }

void write_recording(const Recording& rec, const fs::path& path) {
  const auto bytes = encode_recording(rec);
  write_bytes(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

// ---- manifests -------------------------------------------------------------------

fs::path resolve_path(const std::string& raw, const fs::path& base_dir) {
  std::string s = raw;
  if (s.rfind(kDataRootToken, 0) == 0) {
    const char* root = std::getenv("SPDSEMG_DATA_ROOT");
    require(root != nullptr && *root != '\0', ErrorCode::ConfigError,
            "path uses ${SPDSEMG_DATA_ROOT} but the variable is not set");
    s = std::string(root) + s.substr(kDataRootToken.size());
  }
  fs::path p(s);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return p.lexically_normal();
}

void Manifest::validate() const {
  require(!vocabulary.empty(), ErrorCode::InvalidInput, "manifest: empty vocabulary");
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const TrialSpec& t = trials[i];
    require(t.start_sample >= 0 && t.end_sample > t.start_sample, ErrorCode::InvalidInput,
            "manifest: trial " + std::to_string(i) + " has an empty or negative range");
    require(t.class_id >= 0 && t.class_id < static_cast<int>(vocabulary.size()) &&
                vocabulary[static_cast<std::size_t>(t.class_id)] == t.label,
            ErrorCode::InvalidInput, "manifest: trial " + std::to_string(i) + " label mismatch");
    if (i > 0) {
      require(t.start_sample >= trials[i - 1].end_sample, ErrorCode::InvalidInput,
              "manifest: trials overlap or are unsorted at " + std::to_string(i));
    }
  }
}

int Manifest::class_id(const std::string& label) const {
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    if (vocabulary[i] == label) return static_cast<int>(i);
  }
  fail(ErrorCode::InvalidInput, "manifest: unknown label " + label);
}

Manifest load_manifest(const fs::path& path) {
  const auto bytes = read_file(path);
  Manifest m;
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    m.recording = resolve_path(j.at("recording").get<std::string>(), path.parent_path());
    m.session = j.value("session", std::string{});
    const json& vocab = j.at("vocabulary");
    m.vocabulary.resize(vocab.size());
    std::vector<bool> used(vocab.size(), false);
    for (const auto& [label, id_json] : vocab.items()) {
      const int id = id_json.get<int>();
      require(id >= 0 && id < static_cast<int>(vocab.size()) && !used[static_cast<std::size_t>(id)],
              ErrorCode::InvalidInput, "manifest: class ids must be dense from 0");
      used[static_cast<std::size_t>(id)] = true;
      m.vocabulary[static_cast<std::size_t>(id)] = label;
    }
    for (const auto& t : j.at("trials")) {
      TrialSpec spec;
      spec.label = t.at("label").get<std::string>();
      spec.class_id = m.class_id(spec.label);
      spec.start_sample = t.at("start").get<std::int64_t>();
      spec.end_sample = t.at("end").get<std::int64_t>();
      spec.session = t.value("session", m.session);
      spec.repetition = t.value("repetition", 0);
      m.trials.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, "manifest " + path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  manifest.validate();
  json j;
  fs::path rec = manifest.recording;
  if (path.has_parent_path()) {
    const fs::path rel = rec.lexically_relative(path.parent_path());
    if (!rel.empty()) rec = rel;
  }
  j["recording"] = rec.generic_string();
  j["session"] = manifest.session;
  json vocab = json::object();
  for (std::size_t i = 0; i < manifest.vocabulary.size(); ++i) vocab[manifest.vocabulary[i]] = i;
  j["vocabulary"] = vocab;
  json trials = json::array();
  for (const auto& t : manifest.trials) {
    trials.push_back({{"label", t.label},
                      {"start", t.start_sample},
                      {"end", t.end_sample},
                      {"session", t.session},
                      {"repetition", t.repetition}});
  }
  j["trials"] = trials;
  write_file(path, j.dump(2) + "\n");
}

// ---- checkpoints -----------------------------------------------------------------

namespace {
const char* magic_for(const std::string& kind) {
  if (kind == "mdm") return "SPDM";
  if (kind == "spdnet") return "SPDN";
  if (kind == "gru") return "SPDG";
  fail(ErrorCode::InvalidInput, "checkpoint: unknown model kind " + kind);
}
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.bytes(magic_for(ck.kind), 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(ck.header_json.size()));
  w.bytes(ck.header_json.data(), ck.header_json.size());
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const Matrix& m : ck.tensors) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index k = 0; k < m.cols(); ++k) w.f64(m(i, k));
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes, "checkpoint");
  Checkpoint ck;
  const std::string magic = r.bytes(4);
  if (magic == "SPDM") {
    ck.kind = "mdm";
  } else if (magic == "SPDN") {
    ck.kind = "spdnet";
  } else if (magic == "SPDG") {
    ck.kind = "gru";
  } else {
    fail(ErrorCode::FormatError, "checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  require(version == kVersion, ErrorCode::UnsupportedVersion,
          "checkpoint: unsupported version " + std::to_string(version));
  ck.header_json = r.bytes(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    r.need(static_cast<std::uint64_t>(rows) * cols * 8);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = r.f64();
    }
    ck.tensors.push_back(std::move(m));
  }
  require(r.remaining() == 0, ErrorCode::FormatError, "checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  const auto bytes = encode_checkpoint(ck);
  write_bytes(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

std::vector<std::string> checkpoint_vocabulary(const Checkpoint& ck) {
  return header_get<std::vector<std::string>>(parse_header(ck), "vocabulary");
}

Checkpoint to_checkpoint(const MdmModel& model, const std::vector<std::string>& vocabulary) {
  Checkpoint ck{"mdm", "", {}};
  json h;
  h["dim"] = model.dim();
  h["class_ids"] = model.class_ids;
  h["vocabulary"] = vocabulary;
  ck.header_json = h.dump();
  for (const auto& c : model.centroids) put_tensor(ck, c.factor());
  return ck;
}

MdmModel mdm_from_checkpoint(const Checkpoint& ck) {
  expect_kind(ck, "mdm");
  const json h = parse_header(ck);
  const int d = header_get<int>(h, "dim");
  MdmModel model;
  model.class_ids = header_get<std::vector<int>>(h, "class_ids");
  TensorCursor cur(ck);
  for (std::size_t i = 0; i < model.class_ids.size(); ++i) {
    model.centroids.emplace_back(cur.matrix(d, d));
  }
  cur.finish();
  return model;
}

Checkpoint to_checkpoint(const SpdNetModel& model, const std::vector<std::string>& vocabulary) {
  const SpdNetConfig& c = model.config();
  json cfg;
  cfg["dims"] = c.dims;
  cfg["eps"] = c.eps;
  cfg["classes"] = c.classes;
  cfg["learning_rate"] = c.learning_rate;
  cfg["epochs"] = c.epochs;
  cfg["batch_size"] = c.batch_size;
  cfg["head_init_scale"] = c.head_init_scale;
  cfg["seed"] = c.seed;
  json h;
  h["config"] = cfg;
  h["vocabulary"] = vocabulary;
  Checkpoint ck{"spdnet", h.dump(), {}};
  for (const Matrix& w : bimap_weights(model.layers())) put_tensor(ck, w);
  put_tensor(ck, model.head().weight);
  put_vector(ck, model.head().bias);
  return ck;
}

SpdNetModel spdnet_from_checkpoint(const Checkpoint& ck) {
  expect_kind(ck, "spdnet");
  const json h = parse_header(ck);
  const json cfg = header_get<json>(h, "config");
  SpdNetConfig c;
  c.dims = header_get<std::vector<int>>(cfg, "dims");
  c.eps = header_get<double>(cfg, "eps");
  c.classes = header_get<int>(cfg, "classes");
  c.learning_rate = header_get<double>(cfg, "learning_rate");
  c.epochs = header_get<int>(cfg, "epochs");
  c.batch_size = header_get<int>(cfg, "batch_size");
  c.head_init_scale = header_get<double>(cfg, "head_init_scale");
  c.seed = header_get<std::uint64_t>(cfg, "seed");
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::FormatError, std::string("checkpoint: ") + e.what());
  }
  TensorCursor cur(ck);
  std::vector<SpdLayer> layers = read_frontend(cur, c.dims, c.eps);
  layers.emplace_back(LogEigLayer{});
  LinearHead head{cur.matrix(c.classes, c.head_width()), cur.vector(c.classes)};
  cur.finish();
  return SpdNetModel(c, std::move(layers), std::move(head));
}

Checkpoint to_checkpoint(const GruModel& model, const std::vector<std::string>& vocabulary) {
  const GruModelConfig& c = model.config();
  json cfg;
  cfg["frontend_dims"] = c.frontend_dims;
  cfg["eps"] = c.eps;
  cfg["ode_hidden"] = c.ode_hidden;
  cfg["ode_steps"] = c.ode_steps;
  cfg["classes"] = c.classes;
  cfg["learning_rate"] = c.learning_rate;
  cfg["epochs"] = c.epochs;
  cfg["batch_size"] = c.batch_size;
  cfg["init_scale"] = c.init_scale;
  cfg["seed"] = c.seed;
  json h;
  h["config"] = cfg;
  h["vocabulary"] = vocabulary;
  Checkpoint ck{"gru", h.dump(), {}};
  for (const Matrix& w : bimap_weights(model.frontend())) put_tensor(ck, w);
  visit_tensors(model.cell(), [&](std::span<const double> s) {
    put_vector(ck, Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
  });
  put_tensor(ck, model.field().w1);
  put_vector(ck, model.field().b1);
  put_tensor(ck, model.field().w2);
  put_vector(ck, model.field().b2);
  put_tensor(ck, model.head().weight);
  put_vector(ck, model.head().bias);
  return ck;
}

GruModel gru_from_checkpoint(const Checkpoint& ck) {
  expect_kind(ck, "gru");
  const json h = parse_header(ck);
  const json cfg = header_get<json>(h, "config");
  GruModelConfig c;
  c.frontend_dims = header_get<std::vector<int>>(cfg, "frontend_dims");
  c.eps = header_get<double>(cfg, "eps");
  c.ode_hidden = header_get<int>(cfg, "ode_hidden");
  c.ode_steps = header_get<int>(cfg, "ode_steps");
  c.classes = header_get<int>(cfg, "classes");
  c.learning_rate = header_get<double>(cfg, "learning_rate");
  c.epochs = header_get<int>(cfg, "epochs");
  c.batch_size = header_get<int>(cfg, "batch_size");
  c.init_scale = header_get<double>(cfg, "init_scale");
  c.seed = header_get<std::uint64_t>(cfg, "seed");
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::FormatError, std::string("checkpoint: ") + e.what());
  }
  TensorCursor cur(ck);
  std::vector<SpdLayer> frontend = read_frontend(cur, c.frontend_dims, c.eps);
  const int d = c.hidden_dim();
  const int n = tri_size(d);
  GruParams cell = GruParams::zeros(d);
  visit_tensors(cell, [&](std::span<double> s) {
    const Vector v = cur.vector(static_cast<Eigen::Index>(s.size()));
    std::copy(v.data(), v.data() + v.size(), s.begin());
  });
  OdeField field{cur.matrix(c.ode_hidden, n), cur.vector(c.ode_hidden), cur.matrix(n, c.ode_hidden),
                 cur.vector(n)};
  LinearHead head{cur.matrix(c.classes, n), cur.vector(c.classes)};
  cur.finish();
  return GruModel(c, std::move(frontend), std::move(cell), std::move(field), std::move(head));
}

}  // namespace spdsemg
