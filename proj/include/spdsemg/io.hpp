#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spdsemg/decoders.hpp"
#include "spdsemg/gru.hpp"
#include "spdsemg/signal_graph.hpp"
#include "spdsemg/spdnet.hpp"

namespace spdsemg {

// Recording file: "SEMG", u32 version (1), u32 channels, u64 samples,
// f64 sample rate, then channel-major float32 samples. Little-endian.

std::vector<std::uint8_t> encode_recording(const Recording& rec);
/// Throws FormatError on bad magic or a short payload, UnsupportedVersion
/// for a version other than 1.
Recording decode_recording(const std::vector<std::uint8_t>& bytes);

Recording load_recording(const std::filesystem::path& path);
void write_recording(const Recording& rec, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

/// One recording session: trials located in a recording file.
struct Manifest {
  std::filesystem::path recording;      // resolved (absolute or relative to cwd)
  std::string session;
  std::vector<std::string> vocabulary;  // class id -> label
  std::vector<TrialSpec> trials;

  /// Throws InvalidInput unless trials are sorted, non-overlapping, and
  /// every class id is in range with a label matching the vocabulary.
  void validate() const;
  int class_id(const std::string& label) const;
};

/// Reads a manifest JSON file. Relative recording paths resolve against the
/// manifest's directory; a leading "${SPDSEMG_DATA_ROOT}" expands from the
/// environment.
Manifest load_manifest(const std::filesystem::path& path);
/// Writes the manifest; the recording path is stored relative to the
/// manifest directory when possible.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Expands a leading "${SPDSEMG_DATA_ROOT}" and resolves relative paths
/// against base_dir.
std::filesystem::path resolve_path(const std::string& raw, const std::filesystem::path& base_dir);

// Checkpoint file: 4-byte magic, u32 version (1), u32 length + JSON header,
// u32 tensor count, then per tensor u32 rows, u32 cols and row-major f64.

struct Checkpoint {
  std::string kind;                  // "mdm", "spdnet" or "gru"
  std::string header_json;           // model config and vocabulary
  std::vector<Matrix> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const MdmModel& model, const std::vector<std::string>& vocabulary);
Checkpoint to_checkpoint(const SpdNetModel& model, const std::vector<std::string>& vocabulary);
Checkpoint to_checkpoint(const GruModel& model, const std::vector<std::string>& vocabulary);

MdmModel mdm_from_checkpoint(const Checkpoint& ck);
SpdNetModel spdnet_from_checkpoint(const Checkpoint& ck);
GruModel gru_from_checkpoint(const Checkpoint& ck);
std::vector<std::string> checkpoint_vocabulary(const Checkpoint& ck);

}  // namespace spdsemg
