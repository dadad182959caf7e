#pragma once

// Little-endian packing of doubles and base64 text encoding for matrices
// embedded in JSON records.

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/beast/core/detail/base64.hpp>

#include "beetl/errors.hpp"
#include "beetl/spd.hpp"

namespace beetl::codec {

inline void put_f64_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

inline double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

inline std::string base64_encode(const std::string& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::string base64_decode(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::decoded_size(text.size()), '\0');
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  if (text.find_first_not_of('=', read) != std::string::npos) {
    throw DataError("base64: invalid character in encoded matrix");
  }
  out.resize(written);
  return out;
}

// Row-major little-endian doubles, base64 encoded.
inline std::string encode_matrix(const Matrix& m) {
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(m.size()) * 8);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) put_f64_le(bytes, m(i, j));
  return base64_encode(bytes);
}

inline Matrix decode_matrix(const std::string& text, Index rows, Index cols) {
  const std::string bytes = base64_decode(text);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * 8) {
    throw DataError("decode_matrix: expected " + std::to_string(rows * cols) + " doubles, got " +
                    std::to_string(bytes.size() / 8));
  }
  Matrix m(rows, cols);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j, p += 8) m(i, j) = get_f64_le(p);
  return m;
}

}  // namespace beetl::codec
