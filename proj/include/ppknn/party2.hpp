#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <optional>
#include <thread>
#include <vector>

#include "ppknn/channel.hpp"
#include "ppknn/frame.hpp"
#include "ppknn/paillier.hpp"
#include "ppknn/pool.hpp"
#include "ppknn/rng.hpp"

namespace ppknn {

// The key-holding responder. Every protocol round it participates in is a
// pure request -> response mapping over the payload, so one instance can
// serve any number of interleaved sessions and connections concurrently.
// It only ever sees masked or permuted values; whenever a decrypted view
// violates the structure the masking guarantees, it refuses to answer.
class Party2 {
 public:
  Party2(PublicKey pk, SecretKey sk, RandomSource& rng, RandomizerPool* pool = nullptr)
      : pk_(std::move(pk)), sk_(std::move(sk)), rng_(rng), pool_(pool), codec_(pk_.bits) {
    if (pk_.n != sk_.n) throw ConfigError("public and secret key do not match");
  }

  const PublicKey& pk() const { return pk_; }
  const CtCodec& codec() const { return codec_; }

  Bytes handle(std::uint16_t proto_id, const Bytes& request) {
    switch (proto_id) {
      case proto::kMultiply:
        return handle_multiply(request);
      case proto::kBitParity:
        return handle_bit_parity(request);
      case proto::kMaskedEqual:
        return handle_masked_equal(request);
      case proto::kCompareRound:
        return handle_compare(request);
      case proto::kZeroSelect:
        return handle_zero_select(request);
      case proto::kFreqMatch:
        return handle_freq_match(request);
      case proto::kResultDeliver:
        return handle_result_deliver(request);
      case proto::kResultFetch:
        return handle_result_fetch(request);
      default:
        throw ProtocolFault("unknown protocol id " + std::to_string(proto_id));
    }
  }

  // Result a querier may still fetch, if any. Exposed for tests.
  std::optional<mpz_class> stored_result(std::uint64_t query_id) const {
    std::lock_guard<std::mutex> lock(results_mu_);
    auto it = results_.find(query_id);
    if (it == results_.end()) return std::nullopt;
    return it->second;
  }

 private:
  Ciphertext enc(const mpz_class& m) {
    return pool_ ? encrypt_with_randomizer(pk_, m, pool_->take()) : encrypt(pk_, m, rng_);
  }

  Ciphertext rerand(const Ciphertext& c) {
    return rerandomize(pk_, c, pool_ ? pool_->take() : make_randomizer(pk_, rng_));
  }

  // Two masked operands in, the encryption of the product of their masked
  // plaintexts out.
  Bytes handle_multiply(const Bytes& req) {
    ByteReader r(req);
    mpz_class a = decrypt(sk_, codec_.get(r));
    mpz_class b = decrypt(sk_, codec_.get(r));
    r.expect_end();
    Bytes out;
    ByteWriter w(out);
    codec_.put(w, enc(a * b % pk_.n));
    return out;
  }

  // Encryption of the low bit of the masked value.
  Bytes handle_bit_parity(const Bytes& req) {
    ByteReader r(req);
    mpz_class y = decrypt(sk_, codec_.get(r));
    r.expect_end();
    Bytes out;
    ByteWriter w(out);
    codec_.put(w, enc(mpz_class(y & 1)));
    return out;
  }

  // Confirms a blinded value decrypts to the expected plaintext. Used to
  // close out bit decomposition; a mismatch means the decomposed value
  // escaped its domain.
  Bytes handle_masked_equal(const Bytes& req) {
    ByteReader r(req);
    mpz_class got = decrypt(sk_, codec_.get(r));
    mpz_class expected = r.mpz_fixed(pk_.bits / 8);
    r.expect_end();
    Bytes out;
    ByteWriter w(out);
    w.u8(got == expected ? 1 : 0);
    return out;
  }

  // Comparison exchange: the requester sends masked candidate digits, a
  // permuted flag column, and one blinded delta per carried secret. The
  // flag column decrypts to exactly one 1 when the branch condition
  // holds and to no 1 otherwise; two or more is a masking collision.
  Bytes handle_compare(const Bytes& req) {
    ByteReader r(req);
    std::uint32_t l = r.u32();
    std::uint32_t s = r.u32();
    if (l == 0) throw ProtocolFault("empty comparison");
    std::vector<Ciphertext> digits(l), flags(l), deltas(s);
    for (auto& c : digits) c = codec_.get(r);
    for (auto& c : flags) c = codec_.get(r);
    for (auto& c : deltas) c = codec_.get(r);
    r.expect_end();

    std::size_t ones = 0;
    for (const auto& c : flags)
      if (decrypt(sk_, c) == 1) ++ones;
    if (ones > 1) throw ProtocolFault("comparison flags decrypted to more than one 1");
    bool hold = ones == 1;

    Bytes out;
    ByteWriter w(out);
    for (const auto& c : digits) codec_.put(w, hold ? rerand(c) : enc(0));
    codec_.put(w, enc(hold ? 1 : 0));
    for (const auto& c : deltas) codec_.put(w, hold ? rerand(c) : enc(0));
    return out;
  }

  // A blinded, permuted column that must contain exactly one zero; the
  // response marks that slot with E(1) and all others with E(0).
  Bytes handle_zero_select(const Bytes& req) {
    ByteReader r(req);
    std::vector<Ciphertext> column = codec_.get_vec(r);
    r.expect_end();
    if (column.empty()) throw ProtocolFault("empty selection column");
    std::size_t zeros = 0, zero_at = 0;
    for (std::size_t i = 0; i < column.size(); ++i) {
      if (decrypt(sk_, column[i]) == 0) {
        ++zeros;
        zero_at = i;
      }
    }
    if (zeros != 1)
      throw ProtocolFault("selection column held " + std::to_string(zeros) +
                          " zeros, expected exactly one");
    Bytes out;
    ByteWriter w(out);
    w.u32(static_cast<std::uint32_t>(column.size()));
    for (std::size_t i = 0; i < column.size(); ++i) codec_.put(w, enc(i == zero_at ? 1 : 0));
    return out;
  }

  // Blinded difference matrix, one row per drawn label, permuted per row.
  // Each row must hit zero in exactly one class slot.
  Bytes handle_freq_match(const Bytes& req) {
    ByteReader r(req);
    std::uint32_t rows = r.u32();
    std::uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) throw ProtocolFault("empty frequency matrix");
    if (static_cast<std::uint64_t>(rows) * cols * codec_.width() != r.remaining())
      throw ProtocolFault("frequency matrix size mismatch");
    Bytes out;
    ByteWriter w(out);
    for (std::uint32_t i = 0; i < rows; ++i) {
      std::vector<bool> is_zero(cols);
      std::size_t zeros = 0;
      for (std::uint32_t j = 0; j < cols; ++j) {
        bool z = decrypt(sk_, codec_.get(r)) == 0;
        is_zero[j] = z;
        if (z) ++zeros;
      }
      if (zeros == 0) throw ProtocolFault("label row matched no class: value outside the class set");
      if (zeros > 1) throw ProtocolFault("label row matched several classes");
      for (std::uint32_t j = 0; j < cols; ++j) codec_.put(w, enc(is_zero[j] ? 1 : 0));
    }
    r.expect_end();
    return out;
  }

  Bytes handle_result_deliver(const Bytes& req) {
    ByteReader r(req);
    std::uint64_t query_id = r.u64();
    mpz_class masked = decrypt(sk_, codec_.get(r));
    r.expect_end();
    {
      std::lock_guard<std::mutex> lock(results_mu_);
      results_[query_id] = masked;
    }
    Bytes out;
    ByteWriter w(out);
    w.u8(1);
    return out;
  }

  Bytes handle_result_fetch(const Bytes& req) {
    ByteReader r(req);
    std::uint64_t query_id = r.u64();
    r.expect_end();
    Bytes out;
    ByteWriter w(out);
    std::lock_guard<std::mutex> lock(results_mu_);
    auto it = results_.find(query_id);
    if (it == results_.end()) {
      w.u8(0);
    } else {
      w.u8(1);
      w.mpz_fixed(it->second, pk_.bits / 8);
      results_.erase(it);
    }
    return out;
  }

  PublicKey pk_;
  SecretKey sk_;
  RandomSource& rng_;
  RandomizerPool* pool_;
  CtCodec codec_;
  mutable std::mutex results_mu_;
  std::map<std::uint64_t, mpz_class> results_;
};

// Pumps one channel: request frames in, response frames out, until the
// peer closes. A handler fault is reported back on the offending session
// as an error frame, after which the channel is shut down; a compromised
// exchange must not limp along.
class ResponderServer {
 public:
  ResponderServer(ProtocolChannel& ch, Party2& party2, unsigned workers = 1)
      : ch_(ch), party2_(party2), workers_(workers) {}

  void run() {
    if (workers_ <= 1) {
      run_single();
      return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers_);
    for (unsigned t = 0; t < workers_; ++t) pool.emplace_back([this] { worker_loop(); });
    for (;;) {
      std::optional<Frame> f;
      try {
        f = ch_.recv();
      } catch (const std::exception&) {
        f.reset();
      }
      std::lock_guard<std::mutex> lock(queue_mu_);
      if (!f || done_) {
        done_ = true;
        queue_cv_.notify_all();
        break;
      }
      queue_.push_back(std::move(*f));
      queue_cv_.notify_one();
    }
    for (auto& th : pool) th.join();
  }

 private:
  void run_single() {
    for (;;) {
      std::optional<Frame> f;
      try {
        f = ch_.recv();
      } catch (const std::exception&) {
        return;
      }
      if (!f) return;
      if (!serve(*f)) return;
    }
  }

  void worker_loop() {
    for (;;) {
      Frame f;
      {
        std::unique_lock<std::mutex> lock(queue_mu_);
        queue_cv_.wait(lock, [this] { return done_ || !queue_.empty(); });
        if (queue_.empty()) {
          if (done_) return;
          continue;
        }
        f = std::move(queue_.front());
        queue_.pop_front();
      }
      if (!serve(f)) {
        std::lock_guard<std::mutex> lock(queue_mu_);
        done_ = true;
        queue_cv_.notify_all();
        return;
      }
    }
  }

  // Returns false when the channel must stop.
  bool serve(const Frame& req) {
    Frame reply;
    reply.session = req.session;
    reply.seq = static_cast<std::uint16_t>(req.seq + 1);
    try {
      reply.payload = party2_.handle(req.proto, req.payload);
      reply.proto = req.proto;
    } catch (const std::exception& e) {
      reply.proto = proto::kError;
      std::string msg = e.what();
      reply.payload.assign(msg.begin(), msg.end());
      try {
        ch_.send(reply);
      } catch (const std::exception&) {
      }
      ch_.close();
      return false;
    }
    try {
      ch_.send(reply);
    } catch (const std::exception&) {
      return false;
    }
    return true;
  }

  ProtocolChannel& ch_;
  Party2& party2_;
  unsigned workers_;
  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<Frame> queue_;
  bool done_ = false;
};

}  // namespace ppknn
