#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>

#include "ppknn/frame.hpp"

namespace ppknn {

struct ChannelStats {
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;

  std::uint64_t bytes_total() const { return bytes_sent + bytes_received; }
};

// Observer for tests and diagnostics; sees every frame with its exact
// wire size. outbound is true for frames this endpoint sent.
using FrameTap = std::function<void(bool outbound, const Frame&, std::size_t wire_bytes)>;

// A bidirectional ordered frame pipe. send() may be called from several
// threads; recv() is meant for a single reader. Counters cover the exact
// framed bytes including the length prefix.
class ProtocolChannel {
 public:
  virtual ~ProtocolChannel() = default;

  void send(const Frame& f) {
    Bytes wire = encode_frame(f);
    {
      std::lock_guard<std::mutex> lock(send_mu_);
      send_bytes(wire);
      bytes_sent_ += wire.size();
      ++frames_sent_;
      if (tap_) tap_(true, f, wire.size());
    }
  }

  // Blocks for the next frame; empty when the peer closed cleanly.
  std::optional<Frame> recv() {
    std::optional<Bytes> wire = recv_bytes();
    if (!wire) return std::nullopt;
    Frame f = decode_frame(*wire);
    {
      std::lock_guard<std::mutex> lock(recv_mu_);
      bytes_received_ += wire->size();
      ++frames_received_;
      if (tap_) tap_(false, f, wire->size());
    }
    return f;
  }

  virtual void close() = 0;

  ChannelStats stats() const {
    ChannelStats s;
    s.bytes_sent = bytes_sent_.load();
    s.bytes_received = bytes_received_.load();
    s.frames_sent = frames_sent_.load();
    s.frames_received = frames_received_.load();
    return s;
  }

  void set_tap(FrameTap tap) { tap_ = std::move(tap); }

 protected:
  virtual void send_bytes(const Bytes& wire) = 0;
  virtual std::optional<Bytes> recv_bytes() = 0;

 private:
  std::mutex send_mu_;
  std::mutex recv_mu_;
  std::atomic<std::uint64_t> bytes_sent_{0};
  std::atomic<std::uint64_t> bytes_received_{0};
  std::atomic<std::uint64_t> frames_sent_{0};
  std::atomic<std::uint64_t> frames_received_{0};
  FrameTap tap_;
};

// In-process channel pair built on two byte queues. Frames still go
// through full encode/decode so counters and taps match real wire use.
class LoopbackChannel : public ProtocolChannel {
 public:
  static std::pair<std::unique_ptr<LoopbackChannel>, std::unique_ptr<LoopbackChannel>> make_pair() {
    auto a_to_b = std::make_shared<Queue>();
    auto b_to_a = std::make_shared<Queue>();
    auto a = std::unique_ptr<LoopbackChannel>(new LoopbackChannel(a_to_b, b_to_a));
    auto b = std::unique_ptr<LoopbackChannel>(new LoopbackChannel(b_to_a, a_to_b));
    return {std::move(a), std::move(b)};
  }

  void close() override {
    close_queue(*out_);
    close_queue(*in_);
  }

  // Test hook: push raw bytes, bypassing the frame encoder.
  void inject_raw(Bytes wire) {
    std::lock_guard<std::mutex> lock(in_->mu);
    in_->items.push_back(std::move(wire));
    in_->cv.notify_one();
  }

 protected:
  void send_bytes(const Bytes& wire) override {
    std::lock_guard<std::mutex> lock(out_->mu);
    if (out_->closed) throw TransportError("channel closed");
    out_->items.push_back(wire);
    out_->cv.notify_one();
  }

  std::optional<Bytes> recv_bytes() override {
    std::unique_lock<std::mutex> lock(in_->mu);
    in_->cv.wait(lock, [&] { return !in_->items.empty() || in_->closed; });
    if (in_->items.empty()) return std::nullopt;
    Bytes wire = std::move(in_->items.front());
    in_->items.pop_front();
    return wire;
  }

 private:
  struct Queue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Bytes> items;
    bool closed = false;
  };

  LoopbackChannel(std::shared_ptr<Queue> out, std::shared_ptr<Queue> in)
      : out_(std::move(out)), in_(std::move(in)) {}

  static void close_queue(Queue& q) {
    std::lock_guard<std::mutex> lock(q.mu);
    q.closed = true;
    q.cv.notify_all();
  }

  std::shared_ptr<Queue> out_;
  std::shared_ptr<Queue> in_;
};

}  // namespace ppknn
