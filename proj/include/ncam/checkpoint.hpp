#pragma once

// Checkpoint container, all integers little-endian:
//   8 bytes   magic "NCAM0001"
//   u64       metadata length, then that many bytes of JSON text
//   u64       tensor count
//   per tensor:
//     u64 name length, name bytes
//     u64 rank, rank x u64 dims (row-major: rows, cols)
//     prod(dims) x float32 values, row-major

#include "ncam/io/formats.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace ncam {

inline constexpr char kCheckpointMagic[9] = "NCAM0001";

struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  std::uint64_t count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  bool operator==(const TensorRecord& o) const {
    // Bitwise, so NaN payloads and signed zeros compare faithfully.
    return name == o.name && dims == o.dims && values.size() == o.values.size() &&
           (values.empty() || std::memcmp(values.data(), o.values.data(), values.size() * sizeof(float)) == 0);
  }
};

struct CheckpointFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  const TensorRecord& find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw FormatError("checkpoint: missing tensor '" + name + "'");
  }
};

namespace ckpt_detail {

inline void put_u64(std::string& s, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) s.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  const char* take(std::uint64_t n, const char* field) {
    if (n > bytes_.size() - pos_) throw FormatError(what_ + ": truncated while reading " + field);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint64_t u64(const char* field) {
    const char* p = take(8, field);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[k])) << (8 * k);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace ckpt_detail

inline std::string encode_checkpoint(const CheckpointFile& ck) {
  std::string s(kCheckpointMagic, 8);
  const std::string meta = ck.meta.dump();
  ckpt_detail::put_u64(s, meta.size());
  s += meta;
  ckpt_detail::put_u64(s, ck.tensors.size());
  for (const auto& t : ck.tensors) {
    if (t.values.size() != t.count()) throw FormatError("checkpoint: tensor '" + t.name + "' size does not match dims");
    ckpt_detail::put_u64(s, t.name.size());
    s += t.name;
    ckpt_detail::put_u64(s, t.dims.size());
    for (auto d : t.dims) ckpt_detail::put_u64(s, d);
    for (float v : t.values) io_detail::put_f32(s, v);
  }
  return s;
}

inline CheckpointFile decode_checkpoint(const std::vector<char>& bytes, const std::string& what = "checkpoint") {
  ckpt_detail::Reader r(bytes, what);
  const char* magic = r.take(8, "magic");
  if (std::memcmp(magic, "NCAM", 4) != 0) throw FormatError(what + ": bad magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError(what + ": unsupported version '" + std::string(magic + 4, 4) + "'");
  }
  CheckpointFile ck;
  const std::uint64_t meta_len = r.u64("metadata length");
  const char* meta = r.take(meta_len, "metadata");
  try {
    ck.meta = nlohmann::json::parse(meta, meta + meta_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": corrupt metadata: " + e.what());
  }
  const std::uint64_t count = r.u64("tensor count");
  for (std::uint64_t k = 0; k < count; ++k) {
    TensorRecord t;
    const std::uint64_t name_len = r.u64("name length");
    const char* name = r.take(name_len, "tensor name");
    t.name.assign(name, name_len);
    const std::uint64_t rank = r.u64("rank");
    if (rank > 8) throw FormatError(what + ": implausible rank for '" + t.name + "'");
    for (std::uint64_t d = 0; d < rank; ++d) t.dims.push_back(r.u64("dims"));
    const std::uint64_t n = t.count();
    if (n > (1ull << 40)) throw FormatError(what + ": implausible size for '" + t.name + "'");
    const char* data = r.take(n * 4, "tensor values");
    t.values.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) t.values[i] = io_detail::get_f32(data + 4 * i);
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError(what + ": trailing bytes after last tensor");
  return ck;
}

inline void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& ck) {
  // Write then rename so a crash never leaves a half-written checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  io_detail::write_all(tmp, encode_checkpoint(ck));
  std::filesystem::rename(tmp, path);
}

inline CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  return decode_checkpoint(io_detail::read_all(path), path.string());
}

}  // namespace ncam
