#pragma once

#include <cstdint>

#include "ppknn/bytes.hpp"
#include "ppknn/paillier.hpp"

namespace ppknn {

// Every message is one frame:
//   u32 length   (bytes after this field: header + payload)
//   u16 protocol id
//   u32 session id
//   u16 message sequence within the session
//   payload
// Requests carry even sequence numbers, the matching response is the
// request sequence plus one. Vector payloads start with a u32 element
// count, so e.g. a vector of n ciphertexts makes length = 8 + 4 + n*width.
struct Frame {
  std::uint16_t proto = 0;
  std::uint32_t session = 0;
  std::uint16_t seq = 0;
  Bytes payload;
};

namespace proto {
constexpr std::uint16_t kHello = 0x0001;         // handshake, both directions
constexpr std::uint16_t kError = 0x00ff;         // fault notice, payload = message text
constexpr std::uint16_t kMultiply = 0x0010;      // masked product round
constexpr std::uint16_t kBitParity = 0x0011;     // bit-decomposition round
constexpr std::uint16_t kMaskedEqual = 0x0012;   // masked equality confirmation
constexpr std::uint16_t kCompareRound = 0x0013;  // min/max comparison exchange
constexpr std::uint16_t kZeroSelect = 0x0014;    // locate the masked zero slot
constexpr std::uint16_t kFreqMatch = 0x0015;     // label-frequency matrix exchange
constexpr std::uint16_t kResultDeliver = 0x0020; // C1 hands masked result to C2
constexpr std::uint16_t kResultFetch = 0x0021;   // querier collects from C2
constexpr std::uint16_t kQueryRun = 0x0030;      // querier submits a query to C1
}  // namespace proto

constexpr std::size_t kFrameHeaderLen = 8;  // proto + session + seq
constexpr std::size_t kMaxFrameLen = std::size_t(1) << 30;

inline Bytes encode_frame(const Frame& f) {
  Bytes out;
  ByteWriter w(out);
  w.u32(static_cast<std::uint32_t>(kFrameHeaderLen + f.payload.size()));
  w.u16(f.proto);
  w.u32(f.session);
  w.u16(f.seq);
  w.raw(f.payload.data(), f.payload.size());
  return out;
}

// Parses the part after the length prefix.
inline Frame decode_frame_body(const std::uint8_t* data, std::size_t len) {
  if (len < kFrameHeaderLen) throw TransportError("frame shorter than header");
  ByteReader r(data, len);
  Frame f;
  f.proto = r.u16();
  f.session = r.u32();
  f.seq = r.u16();
  f.payload.assign(data + kFrameHeaderLen, data + len);
  return f;
}

// Parses a full frame including the length prefix and insists the buffer
// holds exactly one frame.
inline Frame decode_frame(const Bytes& wire) {
  ByteReader r(wire);
  std::uint32_t len = r.u32();
  if (len < kFrameHeaderLen || len > kMaxFrameLen) throw TransportError("bad frame length");
  if (wire.size() != 4u + len) throw TransportError("frame length does not match buffer");
  return decode_frame_body(wire.data() + 4, len);
}

// Fixed-width ciphertext serialization. Ciphertexts live modulo n^2, so a
// K-bit key needs 2K bits on the wire.
class CtCodec {
 public:
  explicit CtCodec(unsigned key_bits) : width_(key_bits / 4) {
    if (key_bits == 0 || key_bits % 8 != 0) throw ConfigError("key bits must be a positive multiple of 8");
  }

  std::size_t width() const { return width_; }

  void put(ByteWriter& w, const Ciphertext& c) const { w.mpz_fixed(c.value, width_); }

  Ciphertext get(ByteReader& r) const { return Ciphertext(r.mpz_fixed(width_)); }

  void put_vec(ByteWriter& w, const std::vector<Ciphertext>& v) const {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (const auto& c : v) put(w, c);
  }

  std::vector<Ciphertext> get_vec(ByteReader& r) const {
    std::uint32_t count = r.u32();
    if (static_cast<std::size_t>(count) * width_ > r.remaining())
      throw TransportError("ciphertext vector longer than payload");
    std::vector<Ciphertext> v;
    v.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) v.push_back(get(r));
    return v;
  }

 private:
  std::size_t width_;
};

}  // namespace ppknn
