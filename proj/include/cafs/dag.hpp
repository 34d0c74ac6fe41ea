#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <variant>
#include <vector>

#include "cafs/cid.hpp"

namespace cafs {

struct DagParams {
  std::size_t chunk_size = 262144;
  std::size_t max_links = 174;
};

struct DagLink {
  Cid child;
  std::uint64_t subtree_size = 0;
  bool operator==(const DagLink&) const = default;
};

/// A node of the file Merkle DAG. Leaves carry raw chunk bytes, interior
/// nodes carry ordered links whose subtree sizes sum the leaf bytes below.
struct DagNode {
  enum class Kind : std::uint8_t { Leaf = 0x00, Interior = 0x01 };

  Kind kind = Kind::Leaf;
  Bytes data;
  std::vector<DagLink> links;

  static DagNode leaf(Bytes data) { return {Kind::Leaf, std::move(data), {}}; }
  static DagNode interior(std::vector<DagLink> links) { return {Kind::Interior, {}, std::move(links)}; }

  bool is_leaf() const { return kind == Kind::Leaf; }
  std::uint64_t total_size() const;
  bool operator==(const DagNode&) const = default;
};

// Leaf:     0x00 | u32 len | data
// Interior: 0x01 | u32 count | count * (34-byte cid | u64 subtree_size)
Bytes encode_node(const DagNode& node, const DagParams& params = {});
DagNode decode_node(ByteView bytes);

bool verify_block(const Cid& cid, ByteView bytes);

class BlockStore {
 public:
  virtual ~BlockStore() = default;

  virtual Cid put(ByteView bytes) = 0;
  virtual std::optional<Bytes> get(const Cid& cid) const = 0;
  virtual bool has(const Cid& cid) const = 0;
  virtual bool remove(const Cid& cid) = 0;
  virtual std::size_t block_count() const = 0;
  virtual std::vector<Cid> keys() const = 0;
};

class MemoryBlockStore final : public BlockStore {
 public:
  Cid put(ByteView bytes) override;
  std::optional<Bytes> get(const Cid& cid) const override;
  bool has(const Cid& cid) const override;
  bool remove(const Cid& cid) override;
  std::size_t block_count() const override;
  std::vector<Cid> keys() const override;

 private:
  mutable std::shared_mutex mu_;
  std::map<Cid, Bytes> blocks_;
};

/// One file per block at <root>/<first two hex digits>/<hex digest>.
/// Writes go to a temp file that is renamed into place.
class FsBlockStore final : public BlockStore {
 public:
  explicit FsBlockStore(std::filesystem::path root);

  Cid put(ByteView bytes) override;
  std::optional<Bytes> get(const Cid& cid) const override;
  bool has(const Cid& cid) const override;
  bool remove(const Cid& cid) override;
  std::size_t block_count() const override;
  std::vector<Cid> keys() const override;

  std::filesystem::path path_for(const Cid& cid) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex write_mu_;
};

struct AddResult {
  Cid root;
  std::uint64_t total_size = 0;
};

AddResult add_file(std::istream& in, BlockStore& store, const DagParams& params = {});
AddResult add_file(ByteView data, BlockStore& store, const DagParams& params = {});

// Root CID the given bytes would get, without touching any persistent store.
Cid compute_root(ByteView data, const DagParams& params = {});

void cat_file(const Cid& root, const BlockStore& store, std::ostream& out);
Bytes cat_file(const Cid& root, const BlockStore& store);

// CIDs reachable from root that are absent from the store, in breadth-first
// order; stops descending at missing nodes.
std::vector<Cid> missing_blocks(const Cid& root, const BlockStore& store);

// Every CID in the DAG under root (root first, breadth-first). All blocks
// must be present.
std::vector<Cid> dag_blocks(const Cid& root, const BlockStore& store);

}  // namespace cafs
