#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "cafs/bytes.hpp"

namespace cafs {

using TimerId = std::uint64_t;

/// Executor abstraction that node code is written against. The simulator
/// and the TCP daemon each provide one; all callbacks run on a single
/// logical thread per node.
class Runtime {
 public:
  virtual ~Runtime() = default;

  // Milliseconds since the unix epoch (virtual time inside the simulator).
  virtual std::uint64_t now_ms() const = 0;
  virtual TimerId schedule(std::uint64_t delay_ms, std::function<void()> fn) = 0;
  virtual void cancel(TimerId id) = 0;
  // Fire-and-forget delivery of one frame to a peer address. Loss is silent.
  virtual void send(const std::string& address, Bytes frame) = 0;
  virtual std::mt19937_64& rng() = 0;

  std::uint64_t now_s() const { return now_ms() / 1000; }
};

}  // namespace cafs
