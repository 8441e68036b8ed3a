#pragma once

#include <stdexcept>
#include <string>

namespace ppknn {

// Bad parameters supplied at setup time: unsupported key size, malformed
// key or database file, inconsistent channel configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A caller violated an API precondition: value out of the plaintext
// domain, mismatched vector lengths, k out of range, and the like.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// The remote side misbehaved or sent something undecryptable, a
// structural invariant that the protocol guarantees did not hold, or a
// value escaped its declared domain mid-protocol. Maps to exit code 3.
class ProtocolFault : public std::runtime_error {
 public:
  explicit ProtocolFault(const std::string& what) : std::runtime_error(what) {}
};

// Anything wrong at the byte/socket layer: truncated or oversized frames,
// sequence gaps, version or key-size mismatch during the handshake,
// unexpected channel close.
class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

// Problems reading user-supplied data files (CSV rows, encoding maps).
class IngestError : public std::runtime_error {
 public:
  explicit IngestError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ppknn
