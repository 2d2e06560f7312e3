#pragma once

// Binary checkpoint format (all integers unsigned 32-bit little-endian):
//
//   "SGNT" | version | entry count | entries...
//   entry: name length | UTF-8 name | rank | dims[rank] | float32 LE payload
//
// Entries named "meta/..." carry UTF-8 text instead of floats: the bytes are
// zero-padded to a multiple of 4 and dims = {padded_length / 4}, so the
// payload size rule holds for every entry. "meta/architecture" holds the
// architecture document; "meta/info" holds free-form key = value metadata.
// Optimizer state is stored under the "opt/" prefix.

#include <cstring>
#include <filesystem>
#include <fstream>

#include "signet/model.hpp"

namespace signet {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'S', 'G', 'N', 'T'};

struct Checkpoint {
  ArchitectureConfig config;
  std::vector<NamedTensor<float>> parameters;
  std::vector<NamedTensor<float>> optimizer;  // names without the "opt/" prefix
  KeyValues meta;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("checkpoint: truncated at byte ", pos_);
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline void put_entry_header(std::string& out, const std::string& name, const Shape& shape) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put_u32(out, static_cast<std::uint32_t>(d));
}

template <std::floating_point T>
void put_tensor(std::string& out, const std::string& name, const Tensor<T>& t) {
  put_entry_header(out, name, t.shape());
  for (T v : t.data()) put_f32(out, static_cast<float>(v));
}

inline void put_text(std::string& out, const std::string& name, const std::string& text) {
  std::string padded = text;
  padded.resize((text.size() + 3) / 4 * 4 + (text.empty() ? 4 : 0), '\0');
  put_entry_header(out, name, {padded.size() / 4});
  out += padded;
}

}  // namespace detail

template <std::floating_point T>
std::string encode_checkpoint(const Model<T>& model, const KeyValues& meta = {},
                              const std::vector<NamedTensor<T>>& optimizer = {}) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(2 + model.parameters().size() + optimizer.size()));
  detail::put_text(out, "meta/architecture", serialize_architecture(model.config()));
  std::vector<std::pair<std::string, std::string>> info(meta.begin(), meta.end());
  detail::put_text(out, "meta/info", format_key_values(info));
  for (const auto& p : model.parameters()) detail::put_tensor(out, p.name, p.value);
  for (const auto& o : optimizer) detail::put_tensor(out, "opt/" + o.name, o.value);
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::ByteReader in(bytes);
  const auto magic = in.take(4);
  if (magic != std::string_view(kCheckpointMagic, 4)) fail("checkpoint: bad magic bytes (not an SGNT file)");
  const auto version = in.u32();
  if (version != kCheckpointVersion) fail("checkpoint: unsupported format version ", version);
  const auto count = in.u32();
  Checkpoint ck;
  bool have_arch = false;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name(in.take(in.u32()));
    const auto rank = in.u32();
    if (rank == 0 || rank > 8) fail("checkpoint: entry '", name, "' has invalid rank ", rank);
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    const std::size_t n = shape_numel(shape);
    if (name.rfind("meta/", 0) == 0) {
      std::string text(in.take(n * 4));
      text.erase(text.find_last_not_of('\0') + 1);
      if (name == "meta/architecture") {
        ck.config = parse_architecture(text);
        have_arch = true;
      } else if (name == "meta/info") {
        ck.meta = parse_key_values(text);
      }
      continue;
    }
    std::vector<float> values(n);
    for (auto& v : values) v = in.f32();
    if (name.rfind("opt/", 0) == 0) {
      ck.optimizer.push_back({name.substr(4), Tensor<float>(shape, std::move(values))});
    } else {
      ck.parameters.push_back({name, Tensor<float>(shape, std::move(values))});
    }
  }
  if (!in.done()) fail("checkpoint: trailing bytes after ", count, " entries");
  if (!have_arch) fail("checkpoint: missing meta/architecture entry");
  return ck;
}

/// Atomic: writes a sibling temp file, then renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open '", tmp.string(), "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("write to '", tmp.string(), "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail("cannot rename '", tmp.string(), "' to '", path.string(), "': ", ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '", path.string(), "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, const KeyValues& meta = {},
                     const std::vector<NamedTensor<T>>& optimizer = {}) {
  write_file_atomic(path, encode_checkpoint(model, meta, optimizer));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    fail(path.string(), ": ", e.what());
  }
}

/// Rebuilds the model; a tensor that does not fit the embedded architecture
/// is reported by name.
template <std::floating_point T = float>
Model<T> model_from_checkpoint(const Checkpoint& ck) {
  std::vector<NamedTensor<T>> params;
  for (const auto& p : ck.parameters) params.push_back({p.name, cast<T>(p.value)});
  return Model<T>(ck.config, std::move(params));
}

/// Checks a checkpoint against an expected architecture, naming the first
/// tensor whose shape differs.
inline void check_compatible(const ArchitectureConfig& expected, const Checkpoint& ck) {
  const auto want = parameter_shapes(expected);
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= ck.parameters.size()) fail("checkpoint lacks tensor '", want[i].name, "'");
    const auto& have = ck.parameters[i];
    if (have.name != want[i].name || have.value.shape() != want[i].shape) {
      fail("architecture mismatch at tensor '", want[i].name, "': checkpoint has '", have.name, "' ",
           shape_str(have.value.shape()), ", expected ", shape_str(want[i].shape));
    }
  }
  if (ck.parameters.size() != want.size()) {
    fail("architecture mismatch: checkpoint has extra tensor '", ck.parameters[want.size()].name, "'");
  }
  if (ck.config.input_height != expected.input_height || ck.config.input_width != expected.input_width) {
    fail("architecture mismatch: checkpoint input ", ck.config.input_height, "x", ck.config.input_width,
         ", expected ", expected.input_height, "x", expected.input_width);
  }
}

}  // namespace signet
