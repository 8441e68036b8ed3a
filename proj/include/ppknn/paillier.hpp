#pragma once

#include <gmpxx.h>

#include <string>

#include "ppknn/errors.hpp"
#include "ppknn/rng.hpp"

namespace ppknn {

// Additively homomorphic public-key encryption over Z_N with ciphertexts
// in Z*_{N^2}. The generator is fixed to N+1, which makes encryption a
// single modular exponentiation and decryption two.
struct PublicKey {
  mpz_class n;     // modulus, product of two equal-size primes
  mpz_class g;     // fixed to n + 1
  mpz_class n_sq;  // cached n^2, the ciphertext modulus
  unsigned bits = 0;

  bool operator==(const PublicKey& other) const { return n == other.n && bits == other.bits; }
};

struct SecretKey {
  mpz_class lambda;  // lcm(p-1, q-1)
  mpz_class mu;      // lambda^{-1} mod n
  mpz_class n;
  mpz_class n_sq;    // cached
  unsigned bits = 0;
};

// Strong type so a ciphertext never silently mixes with a plaintext.
struct Ciphertext {
  mpz_class value;

  Ciphertext() = default;
  explicit Ciphertext(mpz_class v) : value(std::move(v)) {}

  bool operator==(const Ciphertext& other) const { return value == other.value; }
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

namespace detail {

inline mpz_class random_prime(unsigned prime_bits, RandomSource& rng) {
  for (;;) {
    mpz_class cand = rng.bits(prime_bits);
    // Top two bits set keeps the product of two such primes at exactly
    // 2 * prime_bits bits; low bit set keeps the candidate odd.
    mpz_setbit(cand.get_mpz_t(), prime_bits - 1);
    mpz_setbit(cand.get_mpz_t(), prime_bits - 2);
    mpz_setbit(cand.get_mpz_t(), 0);
    if (mpz_probab_prime_p(cand.get_mpz_t(), 64) != 0) return cand;
  }
}

}  // namespace detail

inline KeyPair keygen(unsigned bits, RandomSource& rng) {
  if (bits < 512) throw ConfigError("key size below 512 bits is not supported");
  if (bits % 8 != 0) throw ConfigError("key size must be a multiple of 8 bits");

  const unsigned half = bits / 2;
  mpz_class p = detail::random_prime(half, rng);
  mpz_class q;
  do {
    q = detail::random_prime(half, rng);
  } while (q == p);

  KeyPair kp;
  kp.pk.n = p * q;
  kp.pk.g = kp.pk.n + 1;
  kp.pk.n_sq = kp.pk.n * kp.pk.n;
  kp.pk.bits = bits;
  if (mpz_sizeinbase(kp.pk.n.get_mpz_t(), 2) != bits)
    throw ConfigError("modulus does not have the requested bit length");

  mpz_class p1 = p - 1, q1 = q - 1;
  mpz_lcm(kp.sk.lambda.get_mpz_t(), p1.get_mpz_t(), q1.get_mpz_t());
  if (mpz_invert(kp.sk.mu.get_mpz_t(), kp.sk.lambda.get_mpz_t(), kp.pk.n.get_mpz_t()) == 0)
    throw ConfigError("lambda is not invertible modulo n");
  kp.sk.n = kp.pk.n;
  kp.sk.n_sq = kp.pk.n_sq;
  kp.sk.bits = bits;
  return kp;
}

// A precomputable encryption factor r^n mod n^2 for a fresh uniform r in
// Z*_n. Multiplying any (1 + m*n) encoding by one of these yields a fresh
// ciphertext, which is what makes offline precomputation pay off.
inline mpz_class make_randomizer(const PublicKey& pk, RandomSource& rng) {
  mpz_class r, g;
  do {
    r = rng.nonzero_below(pk.n);
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
  } while (g != 1);
  mpz_class out;
  mpz_powm(out.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n_sq.get_mpz_t());
  return out;
}

// The unrandomized encoding (1 + m*n) mod n^2. Only safe where the result
// is immediately multiplied into a ciphertext that already carries
// randomness, or fed through encrypt_with_randomizer.
inline Ciphertext plain_ciphertext(const PublicKey& pk, const mpz_class& m) {
  if (m < 0 || m >= pk.n) throw ContractError("plaintext outside [0, n)");
  return Ciphertext((1 + m * pk.n) % pk.n_sq);
}

inline Ciphertext encrypt_with_randomizer(const PublicKey& pk, const mpz_class& m,
                                          const mpz_class& randomizer) {
  Ciphertext c = plain_ciphertext(pk, m);
  c.value = c.value * randomizer % pk.n_sq;
  return c;
}

inline Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, RandomSource& rng) {
  return encrypt_with_randomizer(pk, m, make_randomizer(pk, rng));
}

inline mpz_class decrypt(const SecretKey& sk, const Ciphertext& c) {
  if (c.value <= 0 || c.value >= sk.n_sq) throw ProtocolFault("ciphertext outside [1, n^2)");
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), c.value.get_mpz_t(), sk.n.get_mpz_t());
  if (g != 1) throw ProtocolFault("malformed ciphertext: not a unit modulo n");
  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.value.get_mpz_t(), sk.lambda.get_mpz_t(), sk.n_sq.get_mpz_t());
  u -= 1;
  mpz_divexact(u.get_mpz_t(), u.get_mpz_t(), sk.n.get_mpz_t());
  return u * sk.mu % sk.n;
}

// Homomorphic sum of plaintexts.
inline Ciphertext add_ct(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  return Ciphertext(a.value * b.value % pk.n_sq);
}

// Homomorphic product by a known scalar in [0, n).
inline Ciphertext scalar_mul(const PublicKey& pk, const Ciphertext& a, const mpz_class& s) {
  if (s < 0 || s >= pk.n) throw ContractError("scalar outside [0, n)");
  mpz_class out;
  mpz_powm(out.get_mpz_t(), a.value.get_mpz_t(), s.get_mpz_t(), pk.n_sq.get_mpz_t());
  return Ciphertext(out);
}

// Encryption of -m. The group inverse equals exponentiation by n-1 but
// costs a modular inverse instead of a full-width powm.
inline Ciphertext negate_ct(const PublicKey& pk, const Ciphertext& a) {
  mpz_class out;
  if (mpz_invert(out.get_mpz_t(), a.value.get_mpz_t(), pk.n_sq.get_mpz_t()) == 0)
    throw ProtocolFault("malformed ciphertext: not invertible modulo n^2");
  return Ciphertext(out);
}

inline Ciphertext sub_ct(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  return add_ct(pk, a, negate_ct(pk, b));
}

inline Ciphertext rerandomize(const PublicKey& pk, const Ciphertext& a,
                              const mpz_class& randomizer) {
  return Ciphertext(a.value * randomizer % pk.n_sq);
}

// Signed values ride in Z_n as residues: x >= 0 maps to x, x < 0 to n - |x|.
inline mpz_class encode_signed(const PublicKey& pk, const mpz_class& x) {
  mpz_class r = x % pk.n;
  if (r < 0) r += pk.n;
  return r;
}

inline mpz_class decode_signed(const PublicKey& pk, const mpz_class& residue) {
  if (residue < 0 || residue >= pk.n) throw ContractError("residue outside [0, n)");
  return residue > pk.n / 2 ? mpz_class(residue - pk.n) : residue;
}

}  // namespace ppknn
