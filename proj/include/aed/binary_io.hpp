#pragma once

// Little-endian binary primitives: raw float matrices for feature packs and
// a tagged, versioned blob format for serialized models.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "aed/common.hpp"

namespace aed {

namespace detail {

template <class T>
T byteswap_value(T v) noexcept {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

template <class T>
T to_little(T v) noexcept {
  if constexpr (std::endian::native == std::endian::big) return byteswap_value(v);
  return v;
}

}  // namespace detail

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("cannot open ", path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeError("short write to " + path.string());
}

/// Writes `m` as headerless row-major little-endian float32.
inline void write_float_matrix(const std::filesystem::path& path, const MatrixF& m) {
  std::vector<char> bytes(m.data().size() * sizeof(float));
  for (std::size_t i = 0; i < m.data().size(); ++i) {
    const float v = detail::to_little(m.data()[i]);
    std::memcpy(bytes.data() + i * sizeof(float), &v, sizeof(float));
  }
  write_file_bytes(path, bytes);
}

/// Reads a headerless float32 matrix, failing unless the file is exactly
/// rows * cols * 4 bytes.
inline MatrixF read_float_matrix(const std::filesystem::path& path, std::size_t rows,
                                 std::size_t cols) {
  if (!std::filesystem::exists(path)) fail_validation("missing file ", path.string());
  const auto bytes = read_file_bytes(path);
  const std::size_t expected = rows * cols * sizeof(float);
  if (bytes.size() != expected)
    fail_validation(path.filename().string(), ": expected ", expected, " bytes (", rows, "x",
                    cols, " float32), found ", bytes.size());
  MatrixF m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    float v;
    std::memcpy(&v, bytes.data() + i * sizeof(float), sizeof(float));
    m.data()[i] = detail::to_little(v);
  }
  return m;
}

/// Appends little-endian scalars and length-prefixed arrays.
class BlobWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    v = detail::to_little(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  template <class T>
  void put_vector(const std::vector<T>& values) {
    put<std::uint64_t>(values.size());
    for (const T& v : values) put(v);
  }

  template <class T>
  void put_matrix(const Matrix<T>& m) {
    put<std::uint64_t>(m.rows());
    put<std::uint64_t>(m.cols());
    for (const T& v : m.data()) put(v);
  }

  /// Four-character tag plus major/minor version heading every blob.
  void put_header(const char (&tag)[5], std::uint32_t major, std::uint32_t minor) {
    bytes_.insert(bytes_.end(), tag, tag + 4);
    put(major);
    put(minor);
  }

  const std::vector<char>& bytes() const noexcept { return bytes_; }
  std::vector<char> take() noexcept { return std::move(bytes_); }

 private:
  std::vector<char> bytes_;
};

class BlobReader {
 public:
  explicit BlobReader(std::span<const char> bytes) : bytes_(bytes) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return detail::to_little(v);
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  template <class T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(T));
    std::vector<T> values(n);
    for (auto& v : values) v = get<T>();
    return values;
  }

  template <class T>
  Matrix<T> get_matrix() {
    const auto rows = get<std::uint64_t>();
    const auto cols = get<std::uint64_t>();
    need(rows * cols * sizeof(T));
    std::vector<T> values(rows * cols);
    for (auto& v : values) v = get<T>();
    return Matrix<T>(rows, cols, std::move(values));
  }

  /// Checks the tag and rejects blobs whose major version is newer than
  /// `supported_major`. Returns the minor version.
  std::uint32_t expect_header(const char (&tag)[5], std::uint32_t supported_major) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, tag, 4) != 0)
      fail_validation("blob tag mismatch: expected '", tag, "'");
    pos_ += 4;
    const auto major = get<std::uint32_t>();
    const auto minor = get<std::uint32_t>();
    if (major > supported_major)
      fail_validation("blob '", tag, "' has major version ", major,
                      ", this build supports up to ", supported_major);
    return minor;
  }

  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) fail_validation("truncated blob");
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

/// FNV-1a 64-bit digest, hex encoded.
inline std::string fnv1a_hex(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kDigits[h & 0xF];
  return out;
}

}  // namespace aed
