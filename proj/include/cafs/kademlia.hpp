#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "cafs/cid.hpp"

namespace cafs {

/// A point in the 256-bit DHT keyspace. Node ids are H(public key); content
/// keys are the raw CID digest.
struct NodeId {
  Hash256 bytes{};

  static NodeId from_public_key(ByteView public_key) { return {sha256(public_key)}; }
  static NodeId from_cid(const Cid& cid) { return {cid.digest()}; }
  static NodeId from_text(std::string_view text);

  std::string text() const { return base58_encode(bytes); }
  std::string short_text() const { return to_hex(bytes).substr(0, 8); }

  auto operator<=>(const NodeId&) const = default;
};

NodeId xor_distance(const NodeId& a, const NodeId& b);

// Index of the highest set bit of the XOR distance (255 = most significant),
// or -1 for identical ids.
int bucket_index(const NodeId& owner, const NodeId& other);

struct Contact {
  NodeId id;
  std::string address;
  std::uint64_t last_seen = 0;

  bool operator==(const Contact& o) const { return id == o.id && address == o.address; }
};

// Sort ascending by XOR distance to target; ties broken by id.
void sort_by_distance(std::vector<Contact>& contacts, const NodeId& target);

struct ProviderRecord {
  Cid key;
  NodeId provider;
  std::string address;
  std::uint64_t expires_at = 0;  // unix ms

  bool operator==(const ProviderRecord&) const = default;
};

/// 256 k-buckets keyed by the highest set bit of the distance to the owner.
/// Each bucket keeps least-recently-seen contacts at the front.
class RoutingTable {
 public:
  enum class Update { Inserted, Refreshed, BucketFull, Self };

  RoutingTable(NodeId owner, std::size_t k) : owner_(owner), k_(k) {}

  const NodeId& owner() const { return owner_; }
  std::size_t k() const { return k_; }

  // BucketFull leaves the table unchanged; the caller probes the oldest
  // contact and then calls replace_oldest or touch.
  Update update(const Contact& c, std::uint64_t now_ms);
  std::optional<Contact> oldest(int bucket) const;
  void replace_oldest(int bucket, const Contact& c, std::uint64_t now_ms);
  void touch(const NodeId& id, std::uint64_t now_ms);
  bool remove(const NodeId& id);

  bool contains(const NodeId& id) const;
  std::vector<Contact> closest(const NodeId& target, std::size_t count) const;
  std::vector<Contact> all() const;
  const std::deque<Contact>& bucket(int i) const { return buckets_[static_cast<std::size_t>(i)]; }
  std::size_t size() const;

 private:
  NodeId owner_;
  std::size_t k_;
  std::array<std::deque<Contact>, 256> buckets_;
};

inline std::vector<Contact> find_closest_local(const RoutingTable& rt, const NodeId& target, std::size_t n) {
  return rt.closest(target, n);
}

}  // namespace cafs
