#include "cafs/ledger.hpp"

#include <ctime>
#include <fstream>
#include <set>

namespace cafs {

Bytes encode_entry(const MetadataEntry& e) {
  if (e.file_type.size() > kMaxFileTypeLen) throw Error(Errc::InvalidArgument, "file_type too long");
  if (e.author.size() > kMaxAuthorLen) throw Error(Errc::InvalidArgument, "author too long");
  Writer w;
  w.raw(e.file_cid.binary());
  w.u64(e.created_at);
  w.u64(e.accessed_at);
  w.u64(e.size_bytes);
  w.str16(e.file_type);
  w.str16(e.author);
  w.u8(e.modified_cid ? 1 : 0);
  if (e.modified_cid) w.raw(e.modified_cid->binary());
  return w.take();
}

MetadataEntry decode_entry(ByteView bytes) {
  Reader r(bytes);
  MetadataEntry e;
  e.file_cid = Cid::from_binary(r.raw(Cid::kBinarySize));
  e.created_at = r.u64();
  e.accessed_at = r.u64();
  e.size_bytes = r.u64();
  e.file_type = r.str16(kMaxFileTypeLen);
  e.author = r.str16(kMaxAuthorLen);
  auto has_mod = r.u8();
  if (has_mod > 1) throw Error(Errc::Malformed, "bad modified flag");
  if (has_mod) e.modified_cid = Cid::from_binary(r.raw(Cid::kBinarySize));
  r.expect_done();
  return e;
}

Hash256 entry_hash(const MetadataEntry& e) { return sha256(encode_entry(e)); }

Hash256 merkle_root(std::span<const Hash256> hashes) {
  if (hashes.empty()) throw Error(Errc::EmptyList, "merkle root of an empty list");
  std::vector<Hash256> level(hashes.begin(), hashes.end());
  do {
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::vector<Hash256> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      std::array<std::uint8_t, 64> pair;
      std::copy(level[i].begin(), level[i].end(), pair.begin());
      std::copy(level[i + 1].begin(), level[i + 1].end(), pair.begin() + 32);
      next.push_back(sha256(pair));
    }
    level = std::move(next);
  } while (level.size() > 1);
  return level.front();
}

Bytes LedgerBlock::header() const {
  Writer w;
  w.raw(prev_hash);
  w.raw(merkle_root);
  w.u64(timestamp);
  w.u64(nonce);
  return w.take();
}

Hash256 LedgerBlock::hash() const { return sha256(header()); }

Hash256 LedgerBlock::compute_merkle_root() const {
  std::vector<Hash256> hashes;
  hashes.reserve(entries.size());
  for (const auto& e : entries) hashes.push_back(entry_hash(e));
  return cafs::merkle_root(hashes);
}

Bytes encode_block(const LedgerBlock& b) {
  Writer w;
  w.raw(b.header());
  w.u32(static_cast<std::uint32_t>(b.entries.size()));
  for (const auto& e : b.entries) w.bytes32(encode_entry(e));
  return w.take();
}

LedgerBlock decode_block(ByteView bytes) {
  Reader r(bytes);
  LedgerBlock b;
  b.prev_hash = r.fixed<32>();
  b.merkle_root = r.fixed<32>();
  b.timestamp = r.u64();
  b.nonce = r.u64();
  auto count = r.u32();
  if (count > r.remaining() / 4) throw Error(Errc::Malformed, "bad entry count");
  for (std::uint32_t i = 0; i < count; ++i) b.entries.push_back(decode_entry(r.bytes32(bytes.size())));
  r.expect_done();
  return b;
}

unsigned leading_zero_bits(const Hash256& h) {
  unsigned bits = 0;
  for (auto byte : h) {
    if (byte == 0) {
      bits += 8;
      continue;
    }
    for (int i = 7; i >= 0 && !(byte >> i & 1); --i) ++bits;
    break;
  }
  return bits;
}

LedgerBlock mine_block(std::vector<MetadataEntry> entries, const Hash256& prev, unsigned difficulty,
                       const Clock& clock, std::uint64_t* attempts) {
  LedgerBlock b;
  b.prev_hash = prev;
  b.entries = std::move(entries);
  b.merkle_root = b.compute_merkle_root();
  b.timestamp = clock();
  auto header = b.header();
  for (b.nonce = 0;; ++b.nonce) {
    for (int i = 0; i < 8; ++i) header[72 + i] = static_cast<std::uint8_t>(b.nonce >> (56 - 8 * i));
    if (leading_zero_bits(sha256(header)) >= difficulty) break;
  }
  if (attempts) *attempts = b.nonce + 1;
  return b;
}

const char* violation_name(ViolationKind k) {
  switch (k) {
    case ViolationKind::BadGenesis: return "BadGenesis";
    case ViolationKind::BadLink: return "BadLink";
    case ViolationKind::BadRoot: return "BadRoot";
    case ViolationKind::BadPow: return "BadPow";
    case ViolationKind::BadTimestamp: return "BadTimestamp";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------

Chain::Chain(std::vector<LedgerBlock> blocks) : blocks_(std::move(blocks)) {
  for (std::uint64_t h = 0; h < blocks_.size(); ++h) index_block(h);
}

Hash256 Chain::tip_hash() const { return blocks_.empty() ? Hash256{} : blocks_.back().hash(); }

void Chain::append(LedgerBlock block) {
  blocks_.push_back(std::move(block));
  index_block(blocks_.size() - 1);
}

void Chain::index_block(std::uint64_t height) {
  const auto& entries = blocks_[height].entries;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    index_[entries[i].file_cid].emplace_back(height, i);
    if (entries[i].modified_cid && *entries[i].modified_cid != entries[i].file_cid) {
      index_[*entries[i].modified_cid].emplace_back(height, i);
    }
  }
}

std::vector<LedgerHit> Chain::lookup(const Cid& cid) const {
  std::vector<LedgerHit> out;
  auto it = index_.find(cid);
  if (it == index_.end()) return out;
  for (auto [h, i] : it->second) out.push_back({h, i, blocks_[h].entries[i]});
  return out;
}

std::vector<LedgerHit> Chain::lookup_scan(const Cid& cid) const {
  std::vector<LedgerHit> out;
  for (std::uint64_t h = 0; h < blocks_.size(); ++h) {
    const auto& entries = blocks_[h].entries;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].file_cid == cid || entries[i].modified_cid == cid) out.push_back({h, i, entries[i]});
    }
  }
  return out;
}

std::optional<Violation> validate_blocks(std::span<const LedgerBlock> blocks, unsigned difficulty,
                                         const LedgerBlock* predecessor, std::uint64_t first_height) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    auto height = first_height + i;
    const LedgerBlock* prev = i > 0 ? &blocks[i - 1] : predecessor;
    if (prev == nullptr) {
      if (b.prev_hash != Hash256{}) return Violation{height, ViolationKind::BadGenesis};
    } else if (b.prev_hash != prev->hash()) {
      return Violation{height, ViolationKind::BadLink};
    }
    bool root_ok = false;
    try {
      root_ok = !b.entries.empty() && b.compute_merkle_root() == b.merkle_root;
    } catch (const Error&) {
    }
    if (!root_ok) return Violation{height, ViolationKind::BadRoot};
    if (leading_zero_bits(b.hash()) < difficulty) return Violation{height, ViolationKind::BadPow};
    if (prev != nullptr && b.timestamp < prev->timestamp) return Violation{height, ViolationKind::BadTimestamp};
  }
  return std::nullopt;
}

std::optional<Violation> validate_chain(const Chain& chain, unsigned difficulty) {
  return validate_blocks(chain.blocks(), difficulty);
}

std::optional<LedgerHit> latest_hit(std::span<const LedgerHit> hits) {
  std::optional<LedgerHit> best;
  for (const auto& h : hits) {
    if (!best || h.entry.accessed_at > best->entry.accessed_at ||
        (h.entry.accessed_at == best->entry.accessed_at && h.height >= best->height)) {
      best = h;
    }
  }
  return best;
}

std::vector<Cid> version_history(const Chain& chain, const Cid& root) {
  std::vector<Cid> out{root};
  std::set<Cid> seen{root};
  auto current = root;
  while (true) {
    std::optional<Cid> next;
    for (const auto& hit : chain.lookup(current)) {
      if (hit.entry.file_cid == current && hit.entry.modified_cid && !seen.count(*hit.entry.modified_cid)) {
        next = hit.entry.modified_cid;
        break;
      }
    }
    if (!next) break;
    out.push_back(*next);
    seen.insert(*next);
    current = *next;
  }
  return out;
}

void append_block_file(const std::filesystem::path& path, const LedgerBlock& block) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  Writer w;
  w.bytes32(encode_block(block));
  out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw Error(Errc::IoFailure, "cannot append to " + path.string());
}

void write_chain_file(const std::filesystem::path& path, const Chain& chain) {
  auto tmp = path;
  tmp += ".tmp";
  std::filesystem::remove(tmp);
  for (const auto& b : chain.blocks()) append_block_file(tmp, b);
  if (chain.empty()) std::ofstream(tmp, std::ios::binary | std::ios::trunc);
  std::filesystem::rename(tmp, path);
}

std::vector<LedgerBlock> read_chain_file(const std::filesystem::path& path) {
  std::vector<LedgerBlock> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data);
  while (!r.done()) {
    try {
      out.push_back(decode_block(r.bytes32(data.size())));
    } catch (const Error& e) {
      throw Error(Errc::Malformed, "chain file record " + std::to_string(out.size()) + ": " + e.what());
    }
  }
  return out;
}

std::string format_date(std::uint64_t unix_s) {
  std::time_t t = static_cast<std::time_t>(unix_s);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[16];
  std::strftime(buf, sizeof buf, "%d/%m/%y", &tm);
  return buf;
}

std::string format_time(std::uint64_t unix_s) {
  std::time_t t = static_cast<std::time_t>(unix_s);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[16];
  std::strftime(buf, sizeof buf, "%I:%M %p", &tm);
  return buf;
}

// ---------------------------------------------------------------------------

LedgerWriter::LedgerWriter(Runtime& rt, Chain& chain, LedgerParams params, CommitHook on_commit)
    : rt_(rt), chain_(chain), params_(params), on_commit_(std::move(on_commit)) {}

LedgerWriter::~LedgerWriter() {
  if (flush_timer_) rt_.cancel(*flush_timer_);
}

void LedgerWriter::append_entry(MetadataEntry e, Callback<std::uint64_t> done) {
  for (const auto& p : pool_) {
    if (p.entry.file_cid == e.file_cid && p.entry.accessed_at == e.accessed_at) {
      done(Error(Errc::DuplicatePending, "entry for " + e.file_cid.text() + " at this access time is pending"));
      return;
    }
  }
  if (e.modified_cid && *e.modified_cid == e.file_cid) {
    done(Error(Errc::InvalidArgument, "modified_cid equals file_cid"));
    return;
  }
  try {
    encode_entry(e);
  } catch (const Error& err) {
    done(err);
    return;
  }
  pool_.push_back({std::move(e), std::move(done)});
  if (pool_.size() >= params_.max_entries) {
    flush();
  } else if (!flush_timer_) {
    flush_timer_ = rt_.schedule(params_.flush_ms, [this] {
      flush_timer_.reset();
      flush();
    });
  }
}

void LedgerWriter::flush() {
  if (flush_timer_) {
    rt_.cancel(*flush_timer_);
    flush_timer_.reset();
  }
  if (pool_.empty()) return;
  std::vector<Pending> batch;
  batch.swap(pool_);
  std::vector<MetadataEntry> entries;
  for (const auto& p : batch) entries.push_back(p.entry);

  auto min_ts = chain_.tip_timestamp();
  auto block = mine_block(std::move(entries), chain_.tip_hash(), params_.difficulty,
                          [&] { return std::max(rt_.now_s(), min_ts); });
  auto height = chain_.length();
  chain_.append(block);
  if (on_commit_) on_commit_(chain_.blocks().back(), height);
  for (auto& p : batch) p.done(height);
}

}  // namespace cafs
