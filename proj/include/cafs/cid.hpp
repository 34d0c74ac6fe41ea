#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "cafs/bytes.hpp"

namespace cafs {

Hash256 sha256(ByteView data);

// Incremental SHA-256 for streamed input.
class Sha256 {
 public:
  Sha256();
  void update(ByteView data);
  Hash256 finish();

 private:
  alignas(64) unsigned char state_[128];
};

std::string base58_encode(ByteView data);
Bytes base58_decode(std::string_view text);  // throws Error(InvalidBase58)

/// Content identifier: a SHA-256 digest framed as a multihash
/// (0x12 = sha2-256, 0x20 = 32-byte length) and rendered in base58btc,
/// which makes every text form start with "Qm".
class Cid {
 public:
  static constexpr std::uint8_t kHashCode = 0x12;
  static constexpr std::uint8_t kDigestLength = 0x20;
  static constexpr std::size_t kBinarySize = 34;

  Cid() = default;
  explicit Cid(const Hash256& digest) : digest_(digest) {}

  static Cid of(ByteView data) { return Cid(sha256(data)); }
  static Cid from_binary(ByteView bin);
  static Cid from_text(std::string_view text);

  const Hash256& digest() const { return digest_; }
  std::array<std::uint8_t, kBinarySize> binary() const;
  std::string text() const;

  auto operator<=>(const Cid&) const = default;

 private:
  Hash256 digest_{};
};

inline Cid cid_of_bytes(ByteView data) { return Cid::of(data); }
inline std::string cid_to_text(const Cid& c) { return c.text(); }
inline Cid cid_from_text(std::string_view s) { return Cid::from_text(s); }

struct HashBytes {
  std::size_t operator()(const Hash256& h) const {
    std::size_t out = 0;
    for (int i = 0; i < 8; ++i) out = (out << 8) | h[i];
    return out;
  }
  std::size_t operator()(const Cid& c) const { return (*this)(c.digest()); }
};

}  // namespace cafs
