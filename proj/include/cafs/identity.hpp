#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "cafs/kademlia.hpp"

namespace cafs {

using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;

/// Ed25519 signing keypair; the node id is H(public key).
class Keypair {
 public:
  static Keypair generate();
  static Keypair from_seed(const Hash256& seed);

  const PublicKey& public_key() const { return public_key_; }
  NodeId node_id() const { return NodeId::from_public_key(public_key_); }
  Signature sign(ByteView message) const;
  const Hash256& seed() const { return seed_; }

 private:
  Hash256 seed_{};
  PublicKey public_key_{};
  std::array<std::uint8_t, 64> secret_key_{};
};

bool verify_signature(const PublicKey& key, ByteView message, const Signature& sig);

// base58 of H(public key); used as the ledger author field.
std::string fingerprint(const PublicKey& key);

// JSON key file holding the seed sealed under an Argon2id-derived key.
void save_key_file(const std::filesystem::path& path, const Keypair& kp, std::string_view passphrase);
// Throws Error(BadKeyPassphrase) when the passphrase does not open the file.
Keypair load_key_file(const std::filesystem::path& path, std::string_view passphrase);

}  // namespace cafs
