#include "cafs/kademlia.hpp"

#include <algorithm>

namespace cafs {

NodeId NodeId::from_text(std::string_view text) {
  auto raw = base58_decode(text);
  if (raw.size() != 32) throw Error(Errc::WrongLength, "node id must be 32 bytes");
  NodeId id;
  std::copy(raw.begin(), raw.end(), id.bytes.begin());
  return id;
}

NodeId xor_distance(const NodeId& a, const NodeId& b) {
  NodeId d;
  for (std::size_t i = 0; i < 32; ++i) d.bytes[i] = a.bytes[i] ^ b.bytes[i];
  return d;
}

int bucket_index(const NodeId& owner, const NodeId& other) {
  for (std::size_t i = 0; i < 32; ++i) {
    std::uint8_t x = owner.bytes[i] ^ other.bytes[i];
    if (x == 0) continue;
    int bit = 7;
    while (!(x >> bit & 1)) --bit;
    return static_cast<int>((31 - i) * 8) + bit;
  }
  return -1;
}

void sort_by_distance(std::vector<Contact>& contacts, const NodeId& target) {
  std::sort(contacts.begin(), contacts.end(), [&](const Contact& a, const Contact& b) {
    auto da = xor_distance(a.id, target);
    auto db = xor_distance(b.id, target);
    if (da != db) return da < db;
    return a.id < b.id;
  });
}

RoutingTable::Update RoutingTable::update(const Contact& c, std::uint64_t now_ms) {
  int idx = bucket_index(owner_, c.id);
  if (idx < 0) return Update::Self;
  auto& bucket = buckets_[static_cast<std::size_t>(idx)];
  auto it = std::find_if(bucket.begin(), bucket.end(), [&](const Contact& x) { return x.id == c.id; });
  if (it != bucket.end()) {
    Contact moved = *it;
    moved.address = c.address;
    moved.last_seen = now_ms;
    bucket.erase(it);
    bucket.push_back(moved);
    return Update::Refreshed;
  }
  if (bucket.size() >= k_) return Update::BucketFull;
  Contact added = c;
  added.last_seen = now_ms;
  bucket.push_back(added);
  return Update::Inserted;
}

std::optional<Contact> RoutingTable::oldest(int bucket) const {
  const auto& b = buckets_[static_cast<std::size_t>(bucket)];
  if (b.empty()) return std::nullopt;
  return b.front();
}

void RoutingTable::replace_oldest(int bucket, const Contact& c, std::uint64_t now_ms) {
  auto& b = buckets_[static_cast<std::size_t>(bucket)];
  if (!b.empty()) b.pop_front();
  if (bucket_index(owner_, c.id) != bucket || contains(c.id)) return;
  Contact added = c;
  added.last_seen = now_ms;
  b.push_back(added);
}

void RoutingTable::touch(const NodeId& id, std::uint64_t now_ms) {
  int idx = bucket_index(owner_, id);
  if (idx < 0) return;
  auto& bucket = buckets_[static_cast<std::size_t>(idx)];
  auto it = std::find_if(bucket.begin(), bucket.end(), [&](const Contact& x) { return x.id == id; });
  if (it == bucket.end()) return;
  Contact moved = *it;
  moved.last_seen = now_ms;
  bucket.erase(it);
  bucket.push_back(moved);
}

bool RoutingTable::remove(const NodeId& id) {
  int idx = bucket_index(owner_, id);
  if (idx < 0) return false;
  auto& bucket = buckets_[static_cast<std::size_t>(idx)];
  auto it = std::find_if(bucket.begin(), bucket.end(), [&](const Contact& x) { return x.id == id; });
  if (it == bucket.end()) return false;
  bucket.erase(it);
  return true;
}

bool RoutingTable::contains(const NodeId& id) const {
  int idx = bucket_index(owner_, id);
  if (idx < 0) return false;
  const auto& bucket = buckets_[static_cast<std::size_t>(idx)];
  return std::any_of(bucket.begin(), bucket.end(), [&](const Contact& x) { return x.id == id; });
}

std::vector<Contact> RoutingTable::all() const {
  std::vector<Contact> out;
  for (const auto& b : buckets_) out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<Contact> RoutingTable::closest(const NodeId& target, std::size_t count) const {
  auto out = all();
  sort_by_distance(out, target);
  if (out.size() > count) out.resize(count);
  return out;
}

std::size_t RoutingTable::size() const {
  std::size_t n = 0;
  for (const auto& b : buckets_) n += b.size();
  return n;
}

}  // namespace cafs
