#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cafs/cid.hpp"
#include "cafs/error.hpp"
#include "cafs/runtime.hpp"

namespace cafs {

inline constexpr std::size_t kMaxFileTypeLen = 64;
inline constexpr std::size_t kMaxAuthorLen = 256;

/// One row of file metadata committed to the ledger.
struct MetadataEntry {
  Cid file_cid;
  std::uint64_t created_at = 0;
  std::uint64_t accessed_at = 0;
  std::uint64_t size_bytes = 0;
  std::string file_type;
  std::string author;
  std::optional<Cid> modified_cid;

  bool operator==(const MetadataEntry&) const = default;
};

// cid(34) | created u64 | accessed u64 | size u64 | type str16 | author str16
// | u8 has_modified | [cid(34)]
Bytes encode_entry(const MetadataEntry& e);
MetadataEntry decode_entry(ByteView bytes);
Hash256 entry_hash(const MetadataEntry& e);

// Pairwise H(left || right), duplicating the last hash on odd levels
// (including a single-element level). Throws Error(EmptyList).
Hash256 merkle_root(std::span<const Hash256> hashes);

struct LedgerBlock {
  Hash256 prev_hash{};
  Hash256 merkle_root{};
  std::uint64_t timestamp = 0;
  std::uint64_t nonce = 0;
  std::vector<MetadataEntry> entries;

  // prev_hash | merkle_root | timestamp u64 | nonce u64 (80 bytes)
  Bytes header() const;
  Hash256 hash() const;
  Hash256 compute_merkle_root() const;
  bool operator==(const LedgerBlock&) const = default;
};

// header | u32 count | count * (u32 len | entry)
Bytes encode_block(const LedgerBlock& b);
LedgerBlock decode_block(ByteView bytes);

unsigned leading_zero_bits(const Hash256& h);

using Clock = std::function<std::uint64_t()>;

/// Nonce search counts up from zero; `attempts` receives the number of
/// header hashes evaluated (nonce + 1).
LedgerBlock mine_block(std::vector<MetadataEntry> entries, const Hash256& prev, unsigned difficulty,
                       const Clock& clock, std::uint64_t* attempts = nullptr);

enum class ViolationKind { BadGenesis, BadLink, BadRoot, BadPow, BadTimestamp };
const char* violation_name(ViolationKind k);

struct Violation {
  std::uint64_t height = 0;
  ViolationKind kind = ViolationKind::BadRoot;
  bool operator==(const Violation&) const = default;
};

struct LedgerHit {
  std::uint64_t height = 0;
  std::size_t index = 0;
  MetadataEntry entry;

  bool is_modification() const { return entry.modified_cid.has_value(); }
  bool operator==(const LedgerHit&) const = default;
};

class Chain {
 public:
  Chain() = default;
  explicit Chain(std::vector<LedgerBlock> blocks);

  const std::vector<LedgerBlock>& blocks() const { return blocks_; }
  std::uint64_t length() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }
  Hash256 tip_hash() const;
  std::uint64_t tip_timestamp() const { return blocks_.empty() ? 0 : blocks_.back().timestamp; }

  // No validation here; see validate_chain.
  void append(LedgerBlock block);

  // Entries whose file_cid or modified_cid equals cid, ascending by height.
  std::vector<LedgerHit> lookup(const Cid& cid) const;
  std::vector<LedgerHit> lookup_scan(const Cid& cid) const;

 private:
  void index_block(std::uint64_t height);

  std::vector<LedgerBlock> blocks_;
  std::map<Cid, std::vector<std::pair<std::uint64_t, std::size_t>>> index_;
};

std::optional<Violation> validate_chain(const Chain& chain, unsigned difficulty);
std::optional<Violation> validate_blocks(std::span<const LedgerBlock> blocks, unsigned difficulty,
                                         const LedgerBlock* predecessor = nullptr,
                                         std::uint64_t first_height = 0);

inline std::vector<LedgerHit> lookup_metadata(const Chain& c, const Cid& cid) { return c.lookup(cid); }

// Entry with the greatest accessed_at (ties: highest height).
std::optional<LedgerHit> latest_hit(std::span<const LedgerHit> hits);

// Follows modification records forward from root: root, v1, v2, ...
std::vector<Cid> version_history(const Chain& chain, const Cid& root);

// Append-only persisted chain: each record is u32 len | encoded block.
void append_block_file(const std::filesystem::path& path, const LedgerBlock& block);
void write_chain_file(const std::filesystem::path& path, const Chain& chain);
std::vector<LedgerBlock> read_chain_file(const std::filesystem::path& path);

// DD/MM/YY and hh:mm AM/PM renderings (UTC) for exports.
std::string format_date(std::uint64_t unix_s);
std::string format_time(std::uint64_t unix_s);

struct LedgerParams {
  unsigned difficulty = 12;
  std::size_t max_entries = 64;
  std::uint64_t flush_ms = 5000;
};

/// Pending pool on the mining node. Entries are batched into a block when
/// the pool reaches max_entries or flush_ms after the first pending entry.
class LedgerWriter {
 public:
  using CommitHook = std::function<void(const LedgerBlock&, std::uint64_t height)>;

  LedgerWriter(Runtime& rt, Chain& chain, LedgerParams params, CommitHook on_commit = {});
  ~LedgerWriter();
  LedgerWriter(const LedgerWriter&) = delete;
  LedgerWriter& operator=(const LedgerWriter&) = delete;

  // Completion receives the committed block height. DuplicatePending is
  // reported synchronously through the callback.
  void append_entry(MetadataEntry e, Callback<std::uint64_t> done);
  void flush();
  std::size_t pending() const { return pool_.size(); }
  const LedgerParams& params() const { return params_; }

 private:
  struct Pending {
    MetadataEntry entry;
    Callback<std::uint64_t> done;
  };

  Runtime& rt_;
  Chain& chain_;
  LedgerParams params_;
  CommitHook on_commit_;
  std::vector<Pending> pool_;
  std::optional<TimerId> flush_timer_;
};

}  // namespace cafs
