#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "drf/common.hpp"

namespace drf {

// All on-disk integers and floats are little-endian regardless of host.

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string raw(std::size_t len) {
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t len) {
    if (pos_ + len > bytes_.size())
      throw IoError(context_ + ": truncated file (needed " + std::to_string(len) +
                    " bytes at offset " + std::to_string(pos_) + ")");
  }

  const std::string& bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

// CRC-64/XZ (ECMA-182 polynomial, reflected, init/xorout all-ones).
class Crc64 {
 public:
  Crc64() { crc_ = ~0ULL; }

  void update(const char* data, std::size_t len) {
    const auto& table = lut();
    for (std::size_t i = 0; i < len; ++i) {
      crc_ = table[(crc_ ^ static_cast<unsigned char>(data[i])) & 0xff] ^ (crc_ >> 8);
    }
  }

  void update(const std::string& s) { update(s.data(), s.size()); }

  std::uint64_t value() const { return ~crc_; }

  static std::uint64_t of(const std::string& s) {
    Crc64 c;
    c.update(s);
    return c.value();
  }

 private:
  static const std::array<std::uint64_t, 256>& lut() {
    static const std::array<std::uint64_t, 256> table = [] {
      std::array<std::uint64_t, 256> t{};
      const std::uint64_t poly = 0xC96C5795D7870F42ULL;  // reflected ECMA-182
      for (std::uint64_t i = 0; i < 256; ++i) {
        std::uint64_t crc = i;
        for (int bit = 0; bit < 8; ++bit)
          crc = (crc & 1) ? (crc >> 1) ^ poly : crc >> 1;
        t[i] = crc;
      }
      return t;
    }();
    return table;
  }

  std::uint64_t crc_;
};

}  // namespace drf
