// Copyright 2026 The agl-desk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "agl/error.hpp"

namespace agl {

// Text helpers ---------------------------------------------------------------

/// Shortest decimal form that parses back to the same float.
inline std::string format_float(float value) {
  char buf[64];
  auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

inline void append_float(std::string& out, float value) {
  char buf[64];
  auto result = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, result.ptr);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool parse_u64(std::string_view text, std::uint64_t& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

inline bool parse_i64(std::string_view text, std::int64_t& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

/// Accepts finite decimal reals only.
inline bool parse_float(std::string_view text, float& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

inline bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorKind::kIo, "short write to " + path.string());
}

// Hashing --------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

template <typename... Rest>
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

/// Uniform double in (0, 1] from 53 random bits.
inline double unit_open_closed(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

// Binary records ---------------------------------------------------------------
// Fixed-width little-endian encoding; the engine and record codecs share it.

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
  void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
  void f32(float v) { raw(&v, sizeof(v)); }
  void bytes(std::string_view v) {
    u32(static_cast<std::uint32_t>(v.size()));
    buf_.append(v);
  }

  /// Feature vectors: dense block, or (index, value) pairs when that is shorter.
  void floats(std::span<const float> values) {
    std::uint32_t nnz = 0;
    for (float v : values) nnz += is_zero_bits(v) ? 0 : 1;
    u32(static_cast<std::uint32_t>(values.size()));
    if (static_cast<std::size_t>(nnz) * 2 < values.size()) {
      u8(1);
      u32(nnz);
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (!is_zero_bits(values[i])) {
          u32(static_cast<std::uint32_t>(i));
          f32(values[i]);
        }
      }
    } else {
      u8(0);
      raw(values.data(), values.size() * sizeof(float));
    }
  }

  const std::string& str() const& { return buf_; }
  std::string str() && { return std::move(buf_); }

 private:
  // Exactly +0.0f; -0.0f stays explicit so decoding is bit-exact.
  static bool is_zero_bits(float v) { return std::bit_cast<std::uint32_t>(v) == 0; }

  void raw(const void* p, std::size_t n) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    buf_.append(static_cast<const char*>(p), n);
  }

  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  float f32() { return scalar<float>(); }
  std::string_view bytes() {
    std::uint32_t n = u32();
    need(n);
    std::string_view out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::vector<float> floats() {
    std::uint32_t n = u32();
    std::uint8_t sparse = u8();
    std::vector<float> values(n, 0.0f);
    if (sparse == 1) {
      std::uint32_t nnz = u32();
      for (std::uint32_t i = 0; i < nnz; ++i) {
        std::uint32_t idx = u32();
        if (idx >= n) raise(ErrorKind::kCorruptRecord, "sparse index out of range");
        values[idx] = f32();
      }
    } else if (sparse == 0) {
      need(static_cast<std::size_t>(n) * sizeof(float));
      if (n > 0) std::memcpy(values.data(), data_.data() + pos_, n * sizeof(float));
      pos_ += n * sizeof(float);
    } else {
      raise(ErrorKind::kCorruptRecord, "bad float block tag");
    }
    return values;
  }

  bool done() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }

 private:
  template <typename T>
  T scalar() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) raise(ErrorKind::kCorruptRecord, "truncated record");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

// Scratch directories -----------------------------------------------------------

/// Creates a unique directory under the system temp dir and removes it on
/// destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view prefix = "agl") {
    static std::atomic<std::uint64_t> counter{0};
    auto stamp = static_cast<std::uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count());
    auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 100; ++attempt) {
      auto tag = mix_seed(stamp, counter.fetch_add(1), static_cast<std::uint64_t>(attempt));
      std::ostringstream name;
      name << prefix << '-' << std::hex << tag;
      std::error_code ec;
      if (std::filesystem::create_directory(base / name.str(), ec)) {
        path_ = base / name.str();
        return;
      }
    }
    raise(ErrorKind::kIo, "cannot create temp dir");
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace agl
