#pragma once

#include <fstream>
#include <string>

#include "ppknn/bytes.hpp"
#include "ppknn/paillier.hpp"

namespace ppknn {

// Key files: magic "PPKN", format version, a key-type byte, the key size
// in bits, then each big integer as a u32-length-prefixed big-endian blob
// in declaration order (public: n, g, n^2; secret: lambda, mu, n).
namespace keyfile {

constexpr char kMagic[4] = {'P', 'P', 'K', 'N'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint8_t kTypePublic = 0x01;
constexpr std::uint8_t kTypeSecret = 0x02;

inline void write_file(const std::string& path, const Bytes& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw ConfigError("write failed: " + path);
}

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ConfigError("cannot open: " + path);
  std::streamsize size = in.tellg();
  in.seekg(0);
  Bytes data(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()), size))
    throw ConfigError("read failed: " + path);
  return data;
}

inline void check_header(ByteReader& r, std::uint8_t expect_type, const std::string& path) {
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ConfigError("bad magic in key file: " + path);
  if (r.u8() != kVersion) throw ConfigError("unsupported key file version: " + path);
  if (r.u8() != expect_type) throw ConfigError("wrong key type in file: " + path);
}

}  // namespace keyfile

inline void save_public_key(const std::string& path, const PublicKey& pk) {
  Bytes data;
  ByteWriter w(data);
  w.raw(keyfile::kMagic, 4);
  w.u8(keyfile::kVersion);
  w.u8(keyfile::kTypePublic);
  w.u32(pk.bits);
  w.mpz_var(pk.n);
  w.mpz_var(pk.g);
  w.mpz_var(pk.n_sq);
  keyfile::write_file(path, data);
}

inline PublicKey load_public_key(const std::string& path) {
  Bytes data = keyfile::read_file(path);
  try {
    ByteReader r(data);
    keyfile::check_header(r, keyfile::kTypePublic, path);
    PublicKey pk;
    pk.bits = r.u32();
    pk.n = r.mpz_var();
    pk.g = r.mpz_var();
    pk.n_sq = r.mpz_var();
    r.expect_end();
    if (pk.g != pk.n + 1 || pk.n_sq != pk.n * pk.n ||
        mpz_sizeinbase(pk.n.get_mpz_t(), 2) != pk.bits)
      throw ConfigError("inconsistent public key fields: " + path);
    return pk;
  } catch (const TransportError&) {
    throw ConfigError("truncated key file: " + path);
  }
}

inline void save_secret_key(const std::string& path, const SecretKey& sk) {
  Bytes data;
  ByteWriter w(data);
  w.raw(keyfile::kMagic, 4);
  w.u8(keyfile::kVersion);
  w.u8(keyfile::kTypeSecret);
  w.u32(sk.bits);
  w.mpz_var(sk.lambda);
  w.mpz_var(sk.mu);
  w.mpz_var(sk.n);
  keyfile::write_file(path, data);
}

inline SecretKey load_secret_key(const std::string& path) {
  Bytes data = keyfile::read_file(path);
  try {
    ByteReader r(data);
    keyfile::check_header(r, keyfile::kTypeSecret, path);
    SecretKey sk;
    sk.bits = r.u32();
    sk.lambda = r.mpz_var();
    sk.mu = r.mpz_var();
    sk.n = r.mpz_var();
    r.expect_end();
    sk.n_sq = sk.n * sk.n;
    if (sk.lambda <= 0 || sk.mu <= 0 || mpz_sizeinbase(sk.n.get_mpz_t(), 2) != sk.bits)
      throw ConfigError("inconsistent secret key fields: " + path);
    return sk;
  } catch (const TransportError&) {
    throw ConfigError("truncated key file: " + path);
  }
}

// The public half is derivable from a secret key since g is fixed.
inline PublicKey public_from_secret(const SecretKey& sk) {
  PublicKey pk;
  pk.n = sk.n;
  pk.g = sk.n + 1;
  pk.n_sq = sk.n_sq;
  pk.bits = sk.bits;
  return pk;
}

}  // namespace ppknn
