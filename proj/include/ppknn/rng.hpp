#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <fstream>
#include <mutex>
#include <numeric>
#include <vector>

#include "ppknn/errors.hpp"

namespace ppknn {

// Uniform randomness used by key generation and protocol masking.
// Implementations must be safe to share across threads.
class RandomSource {
 public:
  virtual ~RandomSource() = default;

  // Uniform in [0, bound).
  virtual mpz_class below(const mpz_class& bound) = 0;

  // Uniform in [0, 2^bits).
  virtual mpz_class bits(unsigned bit_count) = 0;

  virtual std::uint64_t next_u64() = 0;

  // Uniform in [1, bound). A zero mask would de-randomize whatever it
  // blinds, so protocol masks always come from here.
  mpz_class nonzero_below(const mpz_class& bound) {
    if (bound <= 1) throw ContractError("nonzero_below: bound must exceed 1");
    return below(bound - 1) + 1;
  }

  bool coin() { return (next_u64() & 1u) != 0; }
};

// GMP Mersenne Twister state behind a mutex.
class GmpRandom : public RandomSource {
 public:
  explicit GmpRandom(const mpz_class& seed) {
    gmp_randinit_mt(state_);
    gmp_randseed(state_, seed.get_mpz_t());
  }

  explicit GmpRandom(std::uint64_t seed) : GmpRandom(mpz_class(static_cast<unsigned long>(seed))) {}

  GmpRandom(const GmpRandom&) = delete;
  GmpRandom& operator=(const GmpRandom&) = delete;

  ~GmpRandom() override { gmp_randclear(state_); }

  // Seeded from the operating system; the right choice everywhere outside
  // deterministic test and debug runs.
  static GmpRandom os_seeded() { return GmpRandom(os_entropy(256)); }

  mpz_class below(const mpz_class& bound) override {
    if (bound <= 0) throw ContractError("below: bound must be positive");
    std::lock_guard<std::mutex> lock(mu_);
    mpz_class out;
    mpz_urandomm(out.get_mpz_t(), state_, bound.get_mpz_t());
    return out;
  }

  mpz_class bits(unsigned bit_count) override {
    std::lock_guard<std::mutex> lock(mu_);
    mpz_class out;
    mpz_urandomb(out.get_mpz_t(), state_, bit_count);
    return out;
  }

  std::uint64_t next_u64() override {
    std::lock_guard<std::mutex> lock(mu_);
    std::uint64_t hi, lo;
    hi = gmp_urandomb_ui(state_, 32);
    lo = gmp_urandomb_ui(state_, 32);
    return (hi << 32) | lo;
  }

 private:
  static mpz_class os_entropy(unsigned bit_count) {
    std::ifstream urandom("/dev/urandom", std::ios::binary);
    std::vector<unsigned char> buf((bit_count + 7) / 8);
    if (!urandom.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw ConfigError("cannot read entropy from /dev/urandom");
    mpz_class seed;
    mpz_import(seed.get_mpz_t(), buf.size(), 1, 1, 1, 0, buf.data());
    return seed;
  }

  std::mutex mu_;
  gmp_randstate_t state_;
};

// Permutations are stored as image tables: element i lands at slot perm[i].
using Permutation = std::vector<std::uint32_t>;

inline Permutation random_permutation(std::size_t n, RandomSource& rng) {
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

template <typename T>
std::vector<T> apply_permutation(const std::vector<T>& in, const Permutation& perm) {
  if (in.size() != perm.size()) throw ContractError("apply_permutation: size mismatch");
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[perm[i]] = in[i];
  return out;
}

template <typename T>
std::vector<T> invert_permutation(const std::vector<T>& in, const Permutation& perm) {
  if (in.size() != perm.size()) throw ContractError("invert_permutation: size mismatch");
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[perm[i]];
  return out;
}

}  // namespace ppknn
