#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <cstring>
#include <vector>

#include "ppknn/errors.hpp"

namespace ppknn {

using Bytes = std::vector<std::uint8_t>;

// Big-endian append-only writer over a byte vector.
class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }

  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }

  void u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8)
      out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }

  void u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
      out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }

  void raw(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + len);
  }

  // Unsigned big-endian, zero-padded on the left to exactly `width` bytes.
  void mpz_fixed(const mpz_class& v, std::size_t width) {
    if (v < 0) throw ContractError("cannot serialize negative integer");
    std::size_t need = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
    if (v == 0) need = 0;
    if (need > width) throw ContractError("integer too wide for field");
    std::size_t start = out_.size();
    out_.resize(start + width, 0);
    if (need > 0) {
      std::size_t written = 0;
      mpz_export(out_.data() + start + (width - need), &written, 1, 1, 1, 0, v.get_mpz_t());
    }
  }

  // u32 byte length followed by the minimal big-endian encoding.
  void mpz_var(const mpz_class& v) {
    if (v < 0) throw ContractError("cannot serialize negative integer");
    std::size_t need = (v == 0) ? 0 : (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
    u32(static_cast<std::uint32_t>(need));
    if (need > 0) {
      std::size_t start = out_.size();
      out_.resize(start + need);
      std::size_t written = 0;
      mpz_export(out_.data() + start, &written, 1, 1, 1, 0, v.get_mpz_t());
    }
  }

 private:
  Bytes& out_;
};

// Bounds-checked big-endian reader. Underruns throw TransportError since
// they mean a truncated or malformed byte stream.
class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t len) : data_(data), len_(len) {}
  explicit ByteReader(const Bytes& b) : ByteReader(b.data(), b.size()) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += 8;
    return v;
  }

  mpz_class mpz_fixed(std::size_t width) {
    need(width);
    mpz_class v;
    mpz_import(v.get_mpz_t(), width, 1, 1, 1, 0, data_ + pos_);
    pos_ += width;
    return v;
  }

  mpz_class mpz_var() {
    std::uint32_t len = u32();
    return mpz_fixed(len);
  }

  void raw(void* out, std::size_t len) {
    need(len);
    std::memcpy(out, data_ + pos_, len);
    pos_ += len;
  }

  std::size_t remaining() const { return len_ - pos_; }

  void expect_end() const {
    if (pos_ != len_) throw TransportError("trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (len_ - pos_ < n) throw TransportError("truncated byte stream");
  }

  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
};

}  // namespace ppknn
