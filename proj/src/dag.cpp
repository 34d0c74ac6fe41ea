#include "cafs/dag.hpp"

#include <atomic>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace cafs {

std::uint64_t DagNode::total_size() const {
  if (is_leaf()) return data.size();
  std::uint64_t total = 0;
  for (const auto& l : links) total += l.subtree_size;
  return total;
}

Bytes encode_node(const DagNode& node, const DagParams& params) {
  Writer w;
  w.u8(static_cast<std::uint8_t>(node.kind));
  if (node.is_leaf()) {
    if (node.data.size() > params.chunk_size) {
      throw Error(Errc::OversizedLeaf, "leaf of " + std::to_string(node.data.size()) +
                                           " bytes exceeds chunk size");
    }
    w.bytes32(node.data);
  } else {
    if (node.links.empty() || node.links.size() > params.max_links) {
      throw Error(Errc::TooManyLinks,
                  "interior node must have 1.." + std::to_string(params.max_links) + " links");
    }
    w.u32(static_cast<std::uint32_t>(node.links.size()));
    for (const auto& l : node.links) {
      w.raw(l.child.binary());
      w.u64(l.subtree_size);
    }
  }
  return w.take();
}

DagNode decode_node(ByteView bytes) {
  Reader r(bytes);
  auto tag = r.u8();
  DagNode node;
  if (tag == 0x00) {
    node.kind = DagNode::Kind::Leaf;
    node.data = r.bytes32(bytes.size());
  } else if (tag == 0x01) {
    node.kind = DagNode::Kind::Interior;
    auto count = r.u32();
    if (count == 0 || count > r.remaining() / 42) throw Error(Errc::Malformed, "bad link count");
    node.links.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      DagLink link;
      try {
        link.child = Cid::from_binary(r.raw(Cid::kBinarySize));
      } catch (const Error& e) {
        throw Error(Errc::Malformed, std::string("bad link: ") + e.what());
      }
      link.subtree_size = r.u64();
      node.links.push_back(link);
    }
  } else {
    throw Error(Errc::Malformed, "unknown node tag");
  }
  r.expect_done();
  return node;
}

bool verify_block(const Cid& cid, ByteView bytes) { return Cid::of(bytes) == cid; }

// ---------------------------------------------------------------------------

Cid MemoryBlockStore::put(ByteView bytes) {
  auto cid = Cid::of(bytes);
  std::unique_lock lock(mu_);
  blocks_.try_emplace(cid, bytes.begin(), bytes.end());
  return cid;
}

std::optional<Bytes> MemoryBlockStore::get(const Cid& cid) const {
  std::shared_lock lock(mu_);
  auto it = blocks_.find(cid);
  if (it == blocks_.end()) return std::nullopt;
  return it->second;
}

bool MemoryBlockStore::has(const Cid& cid) const {
  std::shared_lock lock(mu_);
  return blocks_.count(cid) != 0;
}

bool MemoryBlockStore::remove(const Cid& cid) {
  std::unique_lock lock(mu_);
  return blocks_.erase(cid) != 0;
}

std::size_t MemoryBlockStore::block_count() const {
  std::shared_lock lock(mu_);
  return blocks_.size();
}

std::vector<Cid> MemoryBlockStore::keys() const {
  std::shared_lock lock(mu_);
  std::vector<Cid> out;
  out.reserve(blocks_.size());
  for (const auto& [k, v] : blocks_) out.push_back(k);
  return out;
}

FsBlockStore::FsBlockStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create block store at " + root_.string());
}

std::filesystem::path FsBlockStore::path_for(const Cid& cid) const {
  auto hex = to_hex(cid.digest());
  return root_ / hex.substr(0, 2) / hex;
}

Cid FsBlockStore::put(ByteView bytes) {
  static std::atomic<std::uint64_t> counter{0};
  auto cid = Cid::of(bytes);
  auto target = path_for(cid);
  std::lock_guard lock(write_mu_);
  if (std::filesystem::exists(target)) return cid;

  std::error_code ec;
  std::filesystem::create_directories(target.parent_path(), ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + target.parent_path().string());
  auto tmp = target;
  tmp += ".tmp" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::IoFailure, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw Error(Errc::IoFailure, "rename failed: " + target.string());
  return cid;
}

std::optional<Bytes> FsBlockStore::get(const Cid& cid) const {
  std::ifstream in(path_for(cid), std::ios::binary);
  if (!in) return std::nullopt;
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!verify_block(cid, out)) {
    throw Error(Errc::Malformed, "stored block " + cid.text() + " fails verification");
  }
  return out;
}

bool FsBlockStore::has(const Cid& cid) const { return std::filesystem::exists(path_for(cid)); }

bool FsBlockStore::remove(const Cid& cid) {
  std::lock_guard lock(write_mu_);
  std::error_code ec;
  return std::filesystem::remove(path_for(cid), ec);
}

std::size_t FsBlockStore::block_count() const { return keys().size(); }

std::vector<Cid> FsBlockStore::keys() const {
  std::vector<Cid> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root_)) {
    if (!entry.is_regular_file()) continue;
    auto name = entry.path().filename().string();
    if (name.size() != 64) continue;
    try {
      auto raw = from_hex(name);
      Hash256 digest;
      std::copy(raw.begin(), raw.end(), digest.begin());
      out.emplace_back(digest);
    } catch (const Error&) {
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

AddResult add_file(std::istream& in, BlockStore& store, const DagParams& params) {
  if (params.chunk_size == 0 || params.max_links < 2) {
    throw Error(Errc::InvalidArgument, "chunk_size must be > 0 and max_links >= 2");
  }
  std::vector<DagLink> level;
  Bytes chunk(params.chunk_size);
  std::uint64_t total = 0;
  while (true) {
    in.read(reinterpret_cast<char*>(chunk.data()), static_cast<std::streamsize>(chunk.size()));
    auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0 && !level.empty()) break;
    auto leaf = DagNode::leaf(Bytes(chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(got)));
    level.push_back({store.put(encode_node(leaf, params)), got});
    total += got;
    if (got < chunk.size()) break;
  }
  if (in.bad()) throw Error(Errc::IoFailure, "read error while adding file");

  while (level.size() > 1) {
    std::vector<DagLink> next;
    for (std::size_t i = 0; i < level.size(); i += params.max_links) {
      auto end = std::min(level.size(), i + params.max_links);
      auto node = DagNode::interior({level.begin() + static_cast<std::ptrdiff_t>(i),
                                     level.begin() + static_cast<std::ptrdiff_t>(end)});
      auto size = node.total_size();
      next.push_back({store.put(encode_node(node, params)), size});
    }
    level = std::move(next);
  }
  return {level.front().child, total};
}

namespace {

class ViewBuf : public std::streambuf {
 public:
  explicit ViewBuf(ByteView data) {
    auto* p = const_cast<char*>(reinterpret_cast<const char*>(data.data()));
    setg(p, p, p + data.size());
  }
};

// Discards everything; used when only the root CID is wanted.
class NullStore final : public BlockStore {
 public:
  Cid put(ByteView bytes) override { return Cid::of(bytes); }
  std::optional<Bytes> get(const Cid&) const override { return std::nullopt; }
  bool has(const Cid&) const override { return false; }
  bool remove(const Cid&) override { return false; }
  std::size_t block_count() const override { return 0; }
  std::vector<Cid> keys() const override { return {}; }
};

DagNode load_node(const Cid& cid, const BlockStore& store) {
  auto bytes = store.get(cid);
  if (!bytes) throw Error(Errc::MissingBlock, "missing block " + cid.text());
  return decode_node(*bytes);
}

void cat_into(const Cid& cid, const BlockStore& store, std::ostream& out) {
  auto node = load_node(cid, store);
  if (node.is_leaf()) {
    out.write(reinterpret_cast<const char*>(node.data.data()), static_cast<std::streamsize>(node.data.size()));
    return;
  }
  for (const auto& link : node.links) cat_into(link.child, store, out);
}

}  // namespace

AddResult add_file(ByteView data, BlockStore& store, const DagParams& params) {
  ViewBuf buf(data);
  std::istream in(&buf);
  return add_file(in, store, params);
}

Cid compute_root(ByteView data, const DagParams& params) {
  NullStore sink;
  return add_file(data, sink, params).root;
}

void cat_file(const Cid& root, const BlockStore& store, std::ostream& out) { cat_into(root, store, out); }

Bytes cat_file(const Cid& root, const BlockStore& store) {
  std::ostringstream out;
  cat_file(root, store, out);
  auto s = std::move(out).str();
  return {s.begin(), s.end()};
}

std::vector<Cid> missing_blocks(const Cid& root, const BlockStore& store) {
  std::vector<Cid> missing;
  std::deque<Cid> queue{root};
  std::set<Cid> seen{root};
  while (!queue.empty()) {
    auto cid = queue.front();
    queue.pop_front();
    auto bytes = store.get(cid);
    if (!bytes) {
      missing.push_back(cid);
      continue;
    }
    auto node = decode_node(*bytes);
    for (const auto& l : node.links) {
      if (seen.insert(l.child).second) queue.push_back(l.child);
    }
  }
  return missing;
}

std::vector<Cid> dag_blocks(const Cid& root, const BlockStore& store) {
  std::vector<Cid> out;
  std::deque<Cid> queue{root};
  std::set<Cid> seen{root};
  while (!queue.empty()) {
    auto cid = queue.front();
    queue.pop_front();
    out.push_back(cid);
    for (const auto& l : load_node(cid, store).links) {
      if (seen.insert(l.child).second) queue.push_back(l.child);
    }
  }
  return out;
}

}  // namespace cafs
