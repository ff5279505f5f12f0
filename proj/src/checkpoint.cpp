#include "t2t/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace t2t {
namespace {

constexpr char kMagic[8] = {'T', '2', 'T', 'C', 'K', 'P', 'T', '1'};

const char* dtype_name(DType d) { return d == DType::kF32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::kF32;
  if (s == "f64") return DType::kF64;
  throw DataError("checkpoint: unknown dtype '" + s + "'");
}

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::size_t width(DType d) { return d == DType::kF32 ? 4 : 8; }

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["step"] = ckpt.step;
  manifest["fingerprint"] = ckpt.fingerprint;
  manifest["metadata"] = ckpt.metadata;
  auto entries = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, e] : ckpt.entries) {
    if (static_cast<Index>(e.values.size()) != shape_numel(e.shape)) {
      throw ShapeError("checkpoint entry " + name + " has " + std::to_string(e.values.size()) + " values for shape " +
                       shape_string(e.shape));
    }
    entries.push_back({{"name", name},
                       {"shape", e.shape},
                       {"dtype", dtype_name(e.dtype)},
                       {"offset", payload.size()},
                       {"count", e.values.size()}});
    for (double v : e.values) {
      if (e.dtype == DType::kF32) {
        put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le(payload, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  manifest["entries"] = std::move(entries);
  const std::string text = manifest.dump();
  std::string header(kMagic, sizeof kMagic);
  put_le(header, static_cast<std::uint64_t>(text.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("checkpoint: bad magic");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto manifest_len = get_le<std::uint64_t>(raw + 8);
  if (manifest_len > bytes.size() - 16) throw DataError("checkpoint: truncated manifest");
  Checkpoint ckpt;
  const std::size_t data_start = 16 + manifest_len;
  try {
    const auto manifest = nlohmann::json::parse(bytes.substr(16, manifest_len));
    if (manifest.at("format").get<int>() != 1) throw DataError("checkpoint: unsupported format");
    ckpt.step = manifest.at("step").get<std::int64_t>();
    ckpt.fingerprint = manifest.at("fingerprint").get<std::string>();
    ckpt.metadata = manifest.at("metadata").get<std::map<std::string, std::string>>();
    for (const auto& e : manifest.at("entries")) {
      CheckpointEntry entry;
      entry.shape = e.at("shape").get<Shape>();
      entry.dtype = parse_dtype(e.at("dtype").get<std::string>());
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (static_cast<Index>(count) != shape_numel(entry.shape)) throw DataError("checkpoint: count/shape mismatch");
      const std::size_t w = width(entry.dtype);
      if (offset > bytes.size() - data_start || count * w > bytes.size() - data_start - offset) {
        throw DataError("checkpoint: truncated data for " + e.at("name").get<std::string>());
      }
      entry.values.resize(count);
      const unsigned char* p = raw + data_start + offset;
      for (std::size_t i = 0; i < count; ++i, p += w) {
        entry.values[i] = entry.dtype == DType::kF32 ? std::bit_cast<float>(get_le<std::uint32_t>(p))
                                                     : std::bit_cast<double>(get_le<std::uint64_t>(p));
      }
      ckpt.entries.emplace(e.at("name").get<std::string>(), std::move(entry));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("checkpoint: malformed manifest: ") + ex.what());
  }
  return ckpt;
}

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  std::ostringstream out;
  write_checkpoint(ckpt, out);
  return out.str();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in);
}

template <typename Scalar>
Checkpoint capture(const Transformer<Scalar>& model, std::int64_t step) {
  Checkpoint ckpt;
  ckpt.step = step;
  ckpt.fingerprint = model.config().fingerprint();
  ckpt.metadata["config"] = model.config().canonical();
  for (const auto& [name, t] : model.parameters()) {
    CheckpointEntry e;
    e.shape = t.shape();
    e.dtype = std::is_same_v<Scalar, float> ? DType::kF32 : DType::kF64;
    e.values.assign(t.values().data(), t.values().data() + t.numel());
    ckpt.entries.emplace(name, std::move(e));
  }
  return ckpt;
}

template <typename Scalar>
void restore(Transformer<Scalar>& model, const Checkpoint& ckpt) {
  if (ckpt.fingerprint != model.config().fingerprint()) {
    throw ConfigError("checkpoint fingerprint " + ckpt.fingerprint + " does not match model config " +
                      model.config().fingerprint());
  }
  for (const auto& [name, t] : model.parameters()) {
    auto it = ckpt.entries.find(name);
    if (it == ckpt.entries.end()) throw DataError("checkpoint is missing parameter " + name);
    if (it->second.shape != t.shape()) throw DataError("checkpoint shape mismatch for " + name);
    auto target = t;
    for (Index i = 0; i < target.numel(); ++i) {
      target.mutable_values()[i] = static_cast<Scalar>(it->second.values[static_cast<std::size_t>(i)]);
    }
  }
}

template Checkpoint capture(const Transformer<float>&, std::int64_t);
template Checkpoint capture(const Transformer<double>&, std::int64_t);
template void restore(Transformer<float>&, const Checkpoint&);
template void restore(Transformer<double>&, const Checkpoint&);

}  // namespace t2t
