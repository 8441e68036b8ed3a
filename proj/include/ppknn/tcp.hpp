#pragma once

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <memory>
#include <string>

#include "ppknn/channel.hpp"

namespace ppknn {

class TcpChannel : public ProtocolChannel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  ~TcpChannel() override { close(); }

  void close() override {
    std::lock_guard<std::mutex> lock(close_mu_);
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 protected:
  void send_bytes(const Bytes& wire) override {
    std::size_t sent = 0;
    while (sent < wire.size()) {
      ssize_t n = ::send(fd_, wire.data() + sent, wire.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) {
        if (n < 0 && errno == EINTR) continue;
        throw TransportError("send failed: " + std::string(std::strerror(errno)));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::optional<Bytes> recv_bytes() override {
    Bytes head(4);
    std::size_t got = read_exact(head.data(), 4, true);
    if (got == 0) return std::nullopt;  // clean close between frames
    if (got < 4) throw TransportError("connection closed inside frame header");
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len = (len << 8) | head[i];
    if (len < kFrameHeaderLen || len > kMaxFrameLen) throw TransportError("bad frame length");
    Bytes wire(4 + static_cast<std::size_t>(len));
    std::memcpy(wire.data(), head.data(), 4);
    if (read_exact(wire.data() + 4, len, false) < len)
      throw TransportError("connection closed inside frame body");
    return wire;
  }

 private:
  // Reads exactly want bytes. eof_ok permits EOF before the first byte,
  // in which case the count read so far (zero) is returned.
  std::size_t read_exact(std::uint8_t* buf, std::size_t want, bool eof_ok) {
    std::size_t got = 0;
    while (got < want) {
      ssize_t n = ::recv(fd_, buf + got, want - got, 0);
      if (n == 0) {
        if (got == 0 && eof_ok) return 0;
        return got;
      }
      if (n < 0) {
        if (errno == EINTR) continue;
        if (got == 0 && eof_ok && (errno == ECONNRESET || errno == EBADF)) return 0;
        throw TransportError("recv failed: " + std::string(std::strerror(errno)));
      }
      got += static_cast<std::size_t>(n);
    }
    return got;
  }

  std::mutex close_mu_;
  int fd_ = -1;
};

inline std::unique_ptr<TcpChannel> tcp_connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw TransportError("cannot resolve " + host);
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + std::to_string(port));
  return std::make_unique<TcpChannel>(fd);
}

class TcpListener {
 public:
  TcpListener(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), std::to_string(port).c_str(), &hints,
                      &res) != 0 ||
        !res)
      throw TransportError("cannot resolve listen address " + host);
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd_ < 0) {
      ::freeaddrinfo(res);
      throw TransportError("cannot create listen socket");
    }
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 16) != 0) {
      ::freeaddrinfo(res);
      ::close(fd_);
      throw TransportError("cannot bind/listen on port " + std::to_string(port));
    }
    ::freeaddrinfo(res);
  }

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  ~TcpListener() { close(); }

  // Bound port; useful after requesting port 0.
  std::uint16_t port() const {
    sockaddr_storage addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
      throw TransportError("getsockname failed");
    if (addr.ss_family == AF_INET)
      return ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    return ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
  }

  std::unique_ptr<TcpChannel> accept() {
    int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) throw TransportError("accept failed: " + std::string(std::strerror(errno)));
    return std::make_unique<TcpChannel>(cfd);
  }

  void close() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

// Both sides open with a hello frame carrying magic, format version, and
// the key size in bits. Anything inconsistent aborts the channel before a
// single ciphertext moves.
namespace handshake {

constexpr char kMagic[4] = {'P', 'P', 'K', 'N'};
constexpr std::uint8_t kVersion = 0x01;

inline Frame hello_frame(unsigned key_bits) {
  Frame f;
  f.proto = proto::kHello;
  f.session = 0;
  f.seq = 0;
  ByteWriter w(f.payload);
  w.raw(kMagic, 4);
  w.u8(kVersion);
  w.u32(key_bits);
  return f;
}

inline unsigned parse_hello(const Frame& f) {
  if (f.proto == proto::kError)
    throw TransportError("peer rejected handshake: " +
                         std::string(f.payload.begin(), f.payload.end()));
  if (f.proto != proto::kHello) throw TransportError("expected hello frame");
  ByteReader r(f.payload);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw TransportError("bad handshake magic");
  if (r.u8() != kVersion) throw TransportError("unsupported protocol version");
  unsigned bits = r.u32();
  r.expect_end();
  return bits;
}

}  // namespace handshake

inline void handshake_client(ProtocolChannel& ch, unsigned key_bits) {
  ch.send(handshake::hello_frame(key_bits));
  std::optional<Frame> reply = ch.recv();
  if (!reply) throw TransportError("channel closed during handshake");
  unsigned peer_bits = handshake::parse_hello(*reply);
  if (peer_bits != key_bits) {
    ch.close();
    throw TransportError("key size mismatch: ours " + std::to_string(key_bits) + ", peer " +
                         std::to_string(peer_bits));
  }
}

inline void handshake_server(ProtocolChannel& ch, unsigned key_bits) {
  std::optional<Frame> hello = ch.recv();
  if (!hello) throw TransportError("channel closed during handshake");
  unsigned peer_bits = handshake::parse_hello(*hello);
  if (peer_bits != key_bits) {
    Frame err;
    err.proto = proto::kError;
    std::string msg = "key size mismatch: server expects " + std::to_string(key_bits);
    err.payload.assign(msg.begin(), msg.end());
    ch.send(err);
    ch.close();
    throw TransportError("key size mismatch: peer announced " + std::to_string(peer_bits));
  }
  Frame reply = handshake::hello_frame(key_bits);
  reply.seq = 1;
  ch.send(reply);
}

}  // namespace ppknn
