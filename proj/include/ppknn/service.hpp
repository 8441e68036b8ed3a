#pragma once

#include <iostream>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include "ppknn/engine.hpp"
#include "ppknn/party2.hpp"
#include "ppknn/tcp.hpp"

namespace ppknn {

constexpr std::uint16_t kDefaultC1Port = 7741;
constexpr std::uint16_t kDefaultC2Port = 7742;

// In-process deployment of the key-holding party: one responder serving
// two loopback links, one for the classifying cloud and one for the
// querier, mirroring the two connections of the networked layout.
class LocalC2 {
 public:
  LocalC2(const PublicKey& pk, const SecretKey& sk, RandomSource& rng,
          RandomizerPool* pool = nullptr, unsigned workers = 1)
      : party2_(pk, sk, rng, pool) {
    auto [c1_near, c1_far] = LoopbackChannel::make_pair();
    auto [bob_near, bob_far] = LoopbackChannel::make_pair();
    c1_link_ = std::move(c1_near);
    c1_serve_ = std::move(c1_far);
    bob_link_ = std::move(bob_near);
    bob_serve_ = std::move(bob_far);
    c1_responder_ = std::make_unique<ResponderServer>(*c1_serve_, party2_, workers);
    bob_responder_ = std::make_unique<ResponderServer>(*bob_serve_, party2_, 1);
    c1_thread_ = std::thread([this] { c1_responder_->run(); });
    bob_thread_ = std::thread([this] { bob_responder_->run(); });
    c1_peer_ = std::make_unique<PeerClient>(*c1_link_);
    bob_peer_ = std::make_unique<PeerClient>(*bob_link_);
  }

  ~LocalC2() { shutdown(); }

  void shutdown() {
    if (c1_peer_) c1_peer_->shutdown();
    if (bob_peer_) bob_peer_->shutdown();
    if (c1_thread_.joinable()) c1_thread_.join();
    if (bob_thread_.joinable()) bob_thread_.join();
  }

  PeerClient& c1_peer() { return *c1_peer_; }
  PeerClient& bob_peer() { return *bob_peer_; }
  ProtocolChannel& c1_channel() { return *c1_link_; }
  Party2& party2() { return party2_; }

 private:
  Party2 party2_;
  std::unique_ptr<LoopbackChannel> c1_link_, c1_serve_, bob_link_, bob_serve_;
  std::unique_ptr<ResponderServer> c1_responder_, bob_responder_;
  std::thread c1_thread_, bob_thread_;
  std::unique_ptr<PeerClient> c1_peer_, bob_peer_;
};

struct StageStats {
  double ms = 0;
  std::uint64_t bytes = 0;
};

struct ClassifyOutcome {
  mpz_class label_code;
  StageStats stage1;
  StageStats stage2;
};

// Full in-process query: both stages over the C1 link, result split
// across the two parties, recombined on the querier link. Byte counts
// cover exactly the cloud-to-cloud traffic of each stage.
inline ClassifyOutcome classify(LocalC2& c2, Party1& c1, const EncDatabase& db, const EncQuery& q,
                                std::uint32_t k) {
  using clock = std::chrono::steady_clock;
  static std::atomic<std::uint64_t> next_query_id{1};
  std::uint64_t query_id = next_query_id++;

  ClassifyOutcome out;
  std::uint64_t bytes0 = c2.c1_channel().stats().bytes_total();
  auto t0 = clock::now();
  std::vector<Ciphertext> neighbor_labels = stage1_srknn(c1, db, q, k);
  auto t1 = clock::now();
  std::uint64_t bytes1 = c2.c1_channel().stats().bytes_total();

  Ciphertext label_ct = stage2_majority_label(c1, db, neighbor_labels);
  mpz_class mask = deliver_result(c1, query_id, label_ct);
  auto t2 = clock::now();
  std::uint64_t bytes2 = c2.c1_channel().stats().bytes_total();

  mpz_class masked = fetch_result(c2.bob_peer(), c1.pk(), query_id);
  out.label_code = unmask_result(c1.pk(), masked, mask);

  out.stage1.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  out.stage1.bytes = bytes1 - bytes0;
  out.stage2.ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
  out.stage2.bytes = bytes2 - bytes1;
  return out;
}

// Networked key-holder: accepts any number of connections and answers
// protocol rounds until told to stop. Never logs plaintexts; it holds the
// only copy of the secret key.
class C2Service {
 public:
  C2Service(SecretKey sk, const std::string& host, std::uint16_t port, unsigned workers = 2)
      : sk_(std::move(sk)),
        pk_(public_from_secret(sk_)),
        rng_(GmpRandom::os_seeded()),
        party2_(pk_, sk_, rng_),
        listener_(host, port),
        workers_(workers) {}

  ~C2Service() { stop(); }

  void start() {
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  std::uint16_t port() const { return listener_.port(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    listener_.close();
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto& ch : channels_) ch->close();
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : conn_threads_) t.join();
    conn_threads_.clear();
  }

 private:
  void accept_loop() {
    for (;;) {
      std::unique_ptr<TcpChannel> ch;
      try {
        ch = listener_.accept();
      } catch (const std::exception&) {
        return;  // listener closed
      }
      std::shared_ptr<TcpChannel> shared = std::move(ch);
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (stopping_) return;
        channels_.push_back(shared);
        conn_threads_.emplace_back([this, shared] { serve_connection(shared); });
      }
    }
  }

  void serve_connection(std::shared_ptr<TcpChannel> ch) {
    try {
      handshake_server(*ch, pk_.bits);
      ResponderServer responder(*ch, party2_, workers_);
      responder.run();
    } catch (const std::exception& e) {
      std::cerr << "key-holder connection ended: " << e.what() << "\n";
    }
    ch->close();
  }

  SecretKey sk_;
  PublicKey pk_;
  GmpRandom rng_;
  Party2 party2_;
  TcpListener listener_;
  unsigned workers_;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::shared_ptr<TcpChannel>> channels_;
  std::vector<std::thread> conn_threads_;
};

// Networked classifying cloud: holds the encrypted database, keeps one
// multiplexed link to the key holder, and serves queriers. Queries from
// different connections run concurrently over that single link.
class C1Service {
 public:
  C1Service(EncDatabase db, const std::string& host, std::uint16_t port,
            const std::string& c2_host, std::uint16_t c2_port, unsigned threads = 1)
      : db_(std::move(db)),
        pk_(),  // filled after key load below
        rng_(GmpRandom::os_seeded()),
        listener_(host, port),
        threads_(threads) {
    c2_channel_ = tcp_connect(c2_host, c2_port);
    handshake_client(*c2_channel_, db_.params.key_bits);
    c2_peer_ = std::make_unique<PeerClient>(*c2_channel_);
  }

  void set_public_key(PublicKey pk) {
    if (pk.bits != db_.params.key_bits) throw ConfigError("public key does not match database");
    pk_ = std::move(pk);
  }

  ~C1Service() { stop(); }

  void start() {
    if (pk_.bits == 0) throw ConfigError("public key not set");
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  std::uint16_t port() const { return listener_.port(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    listener_.close();
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto& ch : channels_) ch->close();
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : conn_threads_) t.join();
    conn_threads_.clear();
    if (c2_peer_) c2_peer_->shutdown();
  }

 private:
  void accept_loop() {
    for (;;) {
      std::unique_ptr<TcpChannel> ch;
      try {
        ch = listener_.accept();
      } catch (const std::exception&) {
        return;
      }
      std::shared_ptr<TcpChannel> shared = std::move(ch);
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (stopping_) return;
        channels_.push_back(shared);
        conn_threads_.emplace_back([this, shared] { serve_querier(shared); });
      }
    }
  }

  void serve_querier(std::shared_ptr<TcpChannel> ch) {
    try {
      handshake_server(*ch, pk_.bits);
      CtCodec codec(pk_.bits);
      for (;;) {
        std::optional<Frame> f = ch->recv();
        if (!f) break;
        Frame reply;
        reply.session = f->session;
        reply.seq = static_cast<std::uint16_t>(f->seq + 1);
        try {
          if (f->proto != proto::kQueryRun) throw ProtocolFault("unexpected frame for querier link");
          ByteReader r(f->payload);
          std::uint32_t k = r.u32();
          EncQuery q;
          q.attrs = codec.get_vec(r);
          r.expect_end();
          if (q.attrs.size() != db_.params.m) throw ContractError("query arity does not match database");
          if (k < 1 || k > db_.params.n) throw ContractError("k must be in 1..n");

          std::uint64_t query_id = next_query_id_++;
          Party1 c1(pk_, *c2_peer_, rng_, nullptr, threads_);
          std::vector<Ciphertext> neighbors = stage1_srknn(c1, db_, q, k);
          Ciphertext label_ct = stage2_majority_label(c1, db_, neighbors);
          mpz_class mask = deliver_result(c1, query_id, label_ct);

          ByteWriter w(reply.payload);
          w.u64(query_id);
          w.mpz_fixed(mask, pk_.bits / 8);
          reply.proto = proto::kQueryRun;
        } catch (const std::exception& e) {
          reply.proto = proto::kError;
          std::string msg = e.what();
          reply.payload.assign(msg.begin(), msg.end());
        }
        ch->send(reply);
        if (reply.proto == proto::kError) break;
      }
    } catch (const std::exception& e) {
      std::cerr << "querier connection ended: " << e.what() << "\n";
    }
    ch->close();
  }

  EncDatabase db_;
  PublicKey pk_;
  GmpRandom rng_;
  TcpListener listener_;
  unsigned threads_;
  std::unique_ptr<TcpChannel> c2_channel_;
  std::unique_ptr<PeerClient> c2_peer_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> next_query_id_{1};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::shared_ptr<TcpChannel>> channels_;
  std::vector<std::thread> conn_threads_;
};

// Querier routine: submit the encrypted record to the classifying cloud,
// then collect and unmask the answer from the key holder. The mask never
// touches the key holder and the masked answer never touches the
// classifying cloud.
inline mpz_class query_remote(const std::string& c1_host, std::uint16_t c1_port,
                              const std::string& c2_host, std::uint16_t c2_port,
                              const PublicKey& pk, const std::vector<std::uint32_t>& values,
                              unsigned attr_bits, std::uint32_t k, RandomSource& rng) {
  EncQuery q = querier_encrypt_query(pk, values, attr_bits, rng);

  auto c1_channel = tcp_connect(c1_host, c1_port);
  handshake_client(*c1_channel, pk.bits);
  PeerClient c1(*c1_channel);
  Bytes req;
  ByteWriter w(req);
  w.u32(k);
  CtCodec codec(pk.bits);
  codec.put_vec(w, q.attrs);
  Bytes resp = c1.call(proto::kQueryRun, req);
  ByteReader r(resp);
  std::uint64_t query_id = r.u64();
  mpz_class mask = r.mpz_fixed(pk.bits / 8);
  r.expect_end();

  auto c2_channel = tcp_connect(c2_host, c2_port);
  handshake_client(*c2_channel, pk.bits);
  PeerClient c2(*c2_channel);
  mpz_class masked = fetch_result(c2, pk, query_id);
  c2.shutdown();
  c1.shutdown();
  return unmask_result(pk, masked, mask);
}

}  // namespace ppknn
