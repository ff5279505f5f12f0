#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "t2t/model.hpp"

namespace t2t {

enum class DType { kF32, kF64 };

struct CheckpointEntry {
  Shape shape;
  DType dtype = DType::kF64;
  std::vector<double> values;  // exact for both dtypes

  bool operator==(const CheckpointEntry&) const = default;
};

/// Named-parameter archive with a step counter and the model config fingerprint.
///
/// On disk: the 8 bytes "T2TCKPT1", a little-endian u64 manifest length, a
/// JSON manifest (format, step, fingerprint, metadata, entries with name,
/// shape, dtype, offset, count), then raw little-endian values in manifest
/// order. Output is byte-stable: entries and metadata are sorted by name.
struct Checkpoint {
  std::int64_t step = 0;
  std::string fingerprint;
  std::map<std::string, std::string> metadata;
  std::map<std::string, CheckpointEntry> entries;

  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
/// Throws DataError on a bad magic, truncated data or malformed manifest.
Checkpoint read_checkpoint(std::istream& in);
std::string checkpoint_bytes(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every model parameter under its own name.
template <typename Scalar>
Checkpoint capture(const Transformer<Scalar>& model, std::int64_t step);

/// Copies parameter values into `model`. ConfigError when the fingerprint
/// differs from the model's config; DataError when an entry is missing or
/// has the wrong shape.
template <typename Scalar>
void restore(Transformer<Scalar>& model, const Checkpoint& ckpt);

}  // namespace t2t
