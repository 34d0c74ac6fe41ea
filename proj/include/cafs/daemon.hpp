#pragma once

#include <memory>

#include "cafs/config.hpp"
#include "cafs/identity.hpp"

namespace cafs {

class Node;

/// A node on real TCP: peer listener, local JSON API, chain file and block
/// store under data_dir. One event-loop thread owns all node state.
class Daemon {
 public:
  Daemon(DaemonConfig config, Keypair identity);
  ~Daemon();
  Daemon(const Daemon&) = delete;
  Daemon& operator=(const Daemon&) = delete;

  // Loads and validates the chain file, then binds both listeners.
  // Throws LedgerValidationFailed, AddrInUse, IoFailure.
  void start();
  // Runs the event loop on the calling thread until stop().
  void run();
  void run_in_background();
  void stop();

  const DaemonConfig& config() const;
  NodeId id() const;
  // Actual bound addresses (useful when configured with port 0).
  std::string peer_address() const;
  std::string api_address() const;
  // True once the bootstrap and first ledger sync have finished.
  bool joined() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cafs
