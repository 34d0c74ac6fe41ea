#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "cafs/identity.hpp"

namespace cafs {

/// Signed pointer from a stable name key (H(owner public key)) to a CID.
struct NameRecord {
  NodeId name_key;
  Cid value;
  std::uint64_t sequence = 0;
  std::uint64_t validity = 0;  // expiry, unix seconds
  PublicKey public_key{};
  Signature signature{};

  bool operator==(const NameRecord&) const = default;
};

// name_key(32) | value cid(34) | sequence u64 | validity u64
Bytes record_signing_bytes(const NodeId& name_key, const Cid& value, std::uint64_t sequence,
                           std::uint64_t validity);
// signing bytes | public key(32) | signature(64)
Bytes encode_record(const NameRecord& r);
NameRecord decode_record(ByteView bytes);

NameRecord sign_record(const Keypair& owner, const Cid& value, std::uint64_t sequence, std::uint64_t validity);
bool verify_record(const NameRecord& r);

/// Hook the DHT consults before storing or preferring a record value.
class RecordValidator {
 public:
  virtual ~RecordValidator() = default;
  virtual bool valid(const NodeId& key, ByteView value) const = 0;
  virtual std::uint64_t sequence(ByteView value) const = 0;
};

class NameRecordValidator final : public RecordValidator {
 public:
  bool valid(const NodeId& key, ByteView value) const override;
  std::uint64_t sequence(ByteView value) const override;
};

// Highest-sequence valid record among candidate values. Classifies failure:
// NotFound (nothing), BadSignature (only invalid ones), Expired (only
// signature-valid but expired ones).
Outcome<NameRecord> select_record(const NodeId& name_key, const std::vector<Bytes>& values,
                                  std::uint64_t now_s);

}  // namespace cafs
