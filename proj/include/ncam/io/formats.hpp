#pragma once

// Byte-exact readers and writers:
//   LDR  binary PPM:  "P6\n<w> <h>\n255\n" then RGB bytes, rows top to bottom
//   PFM  colour PFM:  "PF\n<w> <h>\n<scale>\n", scale < 0 means float32
//                     little-endian; rows stored bottom to top
//   FLO  Middlebury:  float32 202021.25, int32 width, int32 height, then
//                     interleaved (u, v) float32, rows top to bottom, all LE

#include "ncam/io/image.hpp"

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam {

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

namespace io_detail {

inline std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) s.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

inline void put_f32(std::string& s, float f) { put_u32(s, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  return v;
}

inline float get_f32(const char* p) { return std::bit_cast<float>(get_u32(p)); }

/// Cursor over a text header: whitespace-separated tokens, '#' comments.
class HeaderReader {
 public:
  HeaderReader(const std::vector<char>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::string token() {
    skip_space();
    std::string t;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) t.push_back(bytes_[pos_++]);
    if (t.empty()) throw FormatError(what_ + ": truncated header");
    return t;
  }

  long long integer() {
    const std::string t = token();
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size()) throw FormatError(what_ + ": expected an integer in header, got '" + t + "'");
    return v;
  }

  double real() {
    const std::string t = token();
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size()) throw FormatError(what_ + ": expected a number in header, got '" + t + "'");
    return v;
  }

  /// Consumes exactly one whitespace byte that ends the header.
  std::size_t end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError(what_ + ": truncated header");
    }
    return ++pos_;
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace io_detail

// --- LDR (binary PPM) -------------------------------------------------------

inline std::string encode_ldr(const Image8& img) {
  if (img.channels != 3) throw FormatError("write_ldr: only RGB images are supported");
  std::string s = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  s.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return s;
}

inline void write_ldr(const std::filesystem::path& path, const Image8& img) {
  io_detail::write_all(path, encode_ldr(img));
}

inline Image8 decode_ldr(const std::vector<char>& bytes, const std::string& what = "ldr") {
  io_detail::HeaderReader h(bytes, what);
  const std::string magic = h.token();
  if (magic != "P6") throw FormatError(what + ": unsupported file (magic '" + magic + "', expected binary PPM 'P6')");
  const long long w = h.integer();
  const long long ht = h.integer();
  const long long maxval = h.integer();
  if (w < 1 || ht < 1 || w > (1 << 20) || ht > (1 << 20)) throw FormatError(what + ": bad dimensions");
  if (maxval != 255) throw FormatError(what + ": only 8-bit PPM (maxval 255) is supported");
  const std::size_t start = h.end_of_header();
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(ht) * 3;
  if (bytes.size() - start < need) throw FormatError(what + ": truncated pixel data");
  if (bytes.size() - start > need) throw FormatError(what + ": trailing bytes after pixel data");
  Image8 img(static_cast<int>(w), static_cast<int>(ht), 3);
  std::memcpy(img.data.data(), bytes.data() + start, need);
  return img;
}

inline Image8 read_ldr(const std::filesystem::path& path) {
  return decode_ldr(io_detail::read_all(path), path.string());
}

// --- PFM ----------------------------------------------------------------------

inline std::string encode_pfm(const ImageF& img) {
  if (img.channels != 3) throw FormatError("write_pfm: only 3-channel images are supported");
  std::string s = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
  s.reserve(s.size() + img.data.size() * 4);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) io_detail::put_f32(s, img.at(x, y, c));
    }
  }
  return s;
}

inline void write_pfm(const std::filesystem::path& path, const ImageF& img) {
  io_detail::write_all(path, encode_pfm(img));
}

inline ImageF decode_pfm(const std::vector<char>& bytes, const std::string& what = "pfm") {
  io_detail::HeaderReader h(bytes, what);
  const std::string magic = h.token();
  if (magic == "Pf") throw FormatError(what + ": grayscale PFM ('Pf') is unsupported");
  if (magic != "PF") throw FormatError(what + ": bad magic '" + magic + "'");
  const long long w = h.integer();
  const long long ht = h.integer();
  const double scale = h.real();
  if (w < 1 || ht < 1 || w > (1 << 20) || ht > (1 << 20)) throw FormatError(what + ": bad dimensions");
  if (!(scale < 0.0)) throw FormatError(what + ": big-endian PFM (non-negative scale) is unsupported");
  const std::size_t start = h.end_of_header();
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(ht) * 3 * 4;
  if (bytes.size() - start < need) throw FormatError(what + ": truncated pixel data");
  if (bytes.size() - start > need) throw FormatError(what + ": trailing bytes after pixel data");
  ImageF img(static_cast<int>(w), static_cast<int>(ht), 3);
  const char* p = bytes.data() + start;
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c, p += 4) img.at(x, y, c) = io_detail::get_f32(p);
    }
  }
  return img;
}

inline ImageF read_pfm(const std::filesystem::path& path) {
  return decode_pfm(io_detail::read_all(path), path.string());
}

// --- Middlebury .flo -----------------------------------------------------------

inline constexpr float kFloMagic = 202021.25f;

inline std::string encode_flo(const FlowField& flow) {
  if (flow.uv.size() != static_cast<std::size_t>(flow.width) * flow.height * 2) {
    throw FormatError("write_flo: data size does not match dimensions");
  }
  std::string s;
  s.reserve(12 + flow.uv.size() * 4);
  io_detail::put_f32(s, kFloMagic);
  io_detail::put_u32(s, static_cast<std::uint32_t>(flow.width));
  io_detail::put_u32(s, static_cast<std::uint32_t>(flow.height));
  for (float f : flow.uv) io_detail::put_f32(s, f);
  return s;
}

inline void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  io_detail::write_all(path, encode_flo(flow));
}

inline FlowField decode_flo(const std::vector<char>& bytes, const std::string& what = "flo") {
  if (bytes.size() < 12) throw FormatError(what + ": truncated header");
  if (io_detail::get_u32(bytes.data()) != std::bit_cast<std::uint32_t>(kFloMagic)) {
    throw FormatError(what + ": wrong magic (expected float 202021.25)");
  }
  const auto w = static_cast<std::int32_t>(io_detail::get_u32(bytes.data() + 4));
  const auto h = static_cast<std::int32_t>(io_detail::get_u32(bytes.data() + 8));
  if (w < 1 || h < 1 || w > (1 << 20) || h > (1 << 20)) throw FormatError(what + ": bad dimensions");
  const std::size_t need = 12 + 8 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() != need) {
    throw FormatError(what + ": size mismatch (" + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(need) + ")");
  }
  FlowField flow;
  flow.width = w;
  flow.height = h;
  flow.uv.resize(static_cast<std::size_t>(w) * h * 2);
  for (std::size_t k = 0; k < flow.uv.size(); ++k) flow.uv[k] = io_detail::get_f32(bytes.data() + 12 + 4 * k);
  return flow;
}

inline FlowField read_flo(const std::filesystem::path& path) {
  return decode_flo(io_detail::read_all(path), path.string());
}

}  // namespace ncam
