#pragma once

#include <cstddef>
#include <deque>
#include <mutex>

#include "ppknn/paillier.hpp"

namespace ppknn {

// A stock of precomputed encryption factors r^n mod n^2. Filling the pool
// offline turns each later encryption or rerandomization into two modular
// multiplications instead of a full-width exponentiation. take() never
// fails: an empty pool falls back to computing online and counts a miss,
// so sizing mistakes cost speed rather than correctness.
class RandomizerPool {
 public:
  RandomizerPool(const PublicKey& pk, RandomSource& rng) : pk_(pk), rng_(rng) {}

  void fill(std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      mpz_class r = make_randomizer(pk_, rng_);
      std::lock_guard<std::mutex> lock(mu_);
      stock_.push_back(std::move(r));
    }
  }

  mpz_class take() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++taken_;
      if (!stock_.empty()) {
        mpz_class r = std::move(stock_.front());
        stock_.pop_front();
        return r;
      }
      ++misses_;
    }
    return make_randomizer(pk_, rng_);
  }

  std::size_t remaining() const {
    std::lock_guard<std::mutex> lock(mu_);
    return stock_.size();
  }

  std::size_t taken() const {
    std::lock_guard<std::mutex> lock(mu_);
    return taken_;
  }

  std::size_t misses() const {
    std::lock_guard<std::mutex> lock(mu_);
    return misses_;
  }

  void reset_counters() {
    std::lock_guard<std::mutex> lock(mu_);
    taken_ = 0;
    misses_ = 0;
  }

 private:
  const PublicKey& pk_;
  RandomSource& rng_;
  mutable std::mutex mu_;
  std::deque<mpz_class> stock_;
  std::size_t taken_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace ppknn
