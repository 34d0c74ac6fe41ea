#include "cafs/naming.hpp"

namespace cafs {

namespace {
constexpr std::size_t kSignedLen = 32 + Cid::kBinarySize + 8 + 8;
}

Bytes record_signing_bytes(const NodeId& name_key, const Cid& value, std::uint64_t sequence,
                           std::uint64_t validity) {
  Writer w;
  w.raw(name_key.bytes);
  w.raw(value.binary());
  w.u64(sequence);
  w.u64(validity);
  return w.take();
}

Bytes encode_record(const NameRecord& r) {
  Writer w;
  w.raw(record_signing_bytes(r.name_key, r.value, r.sequence, r.validity));
  w.raw(r.public_key);
  w.raw(r.signature);
  return w.take();
}

NameRecord decode_record(ByteView bytes) {
  if (bytes.size() != kSignedLen + 32 + 64) throw Error(Errc::Malformed, "name record has wrong size");
  Reader r(bytes);
  NameRecord rec;
  rec.name_key.bytes = r.fixed<32>();
  try {
    rec.value = Cid::from_binary(r.raw(Cid::kBinarySize));
  } catch (const Error& e) {
    throw Error(Errc::Malformed, e.what());
  }
  rec.sequence = r.u64();
  rec.validity = r.u64();
  rec.public_key = r.fixed<32>();
  rec.signature = r.fixed<64>();
  return rec;
}

NameRecord sign_record(const Keypair& owner, const Cid& value, std::uint64_t sequence, std::uint64_t validity) {
  NameRecord r;
  r.name_key = owner.node_id();
  r.value = value;
  r.sequence = sequence;
  r.validity = validity;
  r.public_key = owner.public_key();
  r.signature = owner.sign(record_signing_bytes(r.name_key, value, sequence, validity));
  return r;
}

bool verify_record(const NameRecord& r) {
  if (NodeId::from_public_key(r.public_key) != r.name_key) return false;
  return verify_signature(r.public_key, record_signing_bytes(r.name_key, r.value, r.sequence, r.validity),
                          r.signature);
}

bool NameRecordValidator::valid(const NodeId& key, ByteView value) const {
  try {
    auto rec = decode_record(value);
    return rec.name_key == key && verify_record(rec);
  } catch (const Error&) {
    return false;
  }
}

std::uint64_t NameRecordValidator::sequence(ByteView value) const {
  try {
    return decode_record(value).sequence;
  } catch (const Error&) {
    return 0;
  }
}

Outcome<NameRecord> select_record(const NodeId& name_key, const std::vector<Bytes>& values,
                                  std::uint64_t now_s) {
  std::optional<NameRecord> best;
  bool saw_bad = false;
  bool saw_expired = false;
  for (const auto& v : values) {
    NameRecord rec;
    try {
      rec = decode_record(v);
    } catch (const Error&) {
      saw_bad = true;
      continue;
    }
    if (rec.name_key != name_key || !verify_record(rec)) {
      saw_bad = true;
      continue;
    }
    if (rec.validity <= now_s) {
      saw_expired = true;
      continue;
    }
    if (!best || rec.sequence > best->sequence) best = rec;
  }
  if (best) return *best;
  if (saw_expired) return Error(Errc::Expired, "name record for " + name_key.text() + " has expired");
  if (saw_bad) return Error(Errc::BadSignature, "no name record with a valid signature");
  return Error(Errc::NotFound, "no name record for " + name_key.text());
}

}  // namespace cafs
