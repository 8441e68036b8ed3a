#pragma once

#include <atomic>
#include <future>
#include <map>
#include <string>
#include <thread>

#include "ppknn/channel.hpp"

namespace ppknn {

// Requester side of a channel. Many sessions may be in flight from
// different threads; a single reader thread routes each incoming frame to
// the session that owns it by session id. Frames for unknown sessions and
// sequence gaps are treated as transport violations.
class PeerClient {
 public:
  explicit PeerClient(ProtocolChannel& ch) : ch_(ch), reader_([this] { read_loop(); }) {}

  PeerClient(const PeerClient&) = delete;
  PeerClient& operator=(const PeerClient&) = delete;

  ~PeerClient() { shutdown(); }

  void shutdown() {
    ch_.close();
    if (reader_.joinable()) reader_.join();
  }

  // One request/response exchange bound to a session. seq runs 0,1 for the
  // first round trip, 2,3 for the second, and so on.
  class Session {
   public:
    Bytes call(const Bytes& request) { return client_->roundtrip(proto_, id_, next_seq_, request); }

    std::uint32_t id() const { return id_; }

   private:
    friend class PeerClient;
    Session(PeerClient* c, std::uint16_t proto, std::uint32_t id)
        : client_(c), proto_(proto), id_(id) {}

    PeerClient* client_;
    std::uint16_t proto_;
    std::uint32_t id_;
    std::uint16_t next_seq_ = 0;
  };

  Session open(std::uint16_t proto) { return Session(this, proto, next_session_++); }

  // Single round-trip convenience for one-shot protocols.
  Bytes call(std::uint16_t proto, const Bytes& request) {
    Session s = open(proto);
    return s.call(request);
  }

 private:
  struct Pending {
    std::promise<Frame> promise;
  };

  Bytes roundtrip(std::uint16_t proto, std::uint32_t session, std::uint16_t& next_seq,
                  const Bytes& request) {
    std::future<Frame> fut;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (dead_) throw TransportError("channel closed: " + dead_reason_);
      auto [it, inserted] = pending_.try_emplace(session);
      if (!inserted) throw ContractError("session already has a call in flight");
      fut = it->second.promise.get_future();
    }

    Frame f;
    f.proto = proto;
    f.session = session;
    f.seq = next_seq;
    f.payload = request;
    try {
      ch_.send(f);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      pending_.erase(session);
      throw;
    }

    Frame reply = fut.get();  // exceptions from the reader surface here
    if (reply.seq != static_cast<std::uint16_t>(next_seq + 1))
      throw TransportError("ordering fault: expected seq " + std::to_string(next_seq + 1) +
                           ", got " + std::to_string(reply.seq));
    if (reply.proto != proto) throw TransportError("response protocol id mismatch");
    next_seq = static_cast<std::uint16_t>(next_seq + 2);
    return std::move(reply.payload);
  }

  void read_loop() {
    std::string reason = "peer closed the channel";
    try {
      for (;;) {
        std::optional<Frame> f = ch_.recv();
        if (!f) break;
        std::lock_guard<std::mutex> lock(mu_);
        auto it = pending_.find(f->session);
        if (it == pending_.end()) {
          reason = "frame for unknown session " + std::to_string(f->session);
          break;
        }
        Pending p = std::move(it->second);
        pending_.erase(it);
        if (f->proto == proto::kError) {
          p.promise.set_exception(std::make_exception_ptr(
              ProtocolFault(std::string(f->payload.begin(), f->payload.end()))));
          reason = "peer reported a protocol fault";
          break;
        }
        p.promise.set_value(std::move(*f));
      }
    } catch (const std::exception& e) {
      reason = e.what();
    }
    fail_all(reason);
    ch_.close();
  }

  void fail_all(const std::string& reason) {
    std::lock_guard<std::mutex> lock(mu_);
    dead_ = true;
    dead_reason_ = reason;
    for (auto& [id, p] : pending_)
      p.promise.set_exception(std::make_exception_ptr(TransportError("channel closed: " + reason)));
    pending_.clear();
  }

  ProtocolChannel& ch_;
  std::mutex mu_;
  std::map<std::uint32_t, Pending> pending_;
  std::atomic<std::uint32_t> next_session_{1};
  bool dead_ = false;
  std::string dead_reason_;
  std::thread reader_;
};

}  // namespace ppknn
