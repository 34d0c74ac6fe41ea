#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "cafs/dag.hpp"
#include "cafs/dht.hpp"
#include "cafs/exchange.hpp"
#include "cafs/identity.hpp"
#include "cafs/ledger.hpp"
#include "cafs/naming.hpp"

namespace cafs {

// Extension map first, then magic bytes, else application/octet-stream.
std::string sniff_file_type(std::string_view name, ByteView head);

struct NodeConfig {
  std::string listen_addr;
  std::vector<std::string> bootstrap;
  // Address of the mining node; ignored when is_registrar.
  std::string registrar_addr;
  bool is_registrar = false;

  DagParams dag;
  DhtParams dht;
  ExchangeParams exchange;
  LedgerParams ledger;
  std::uint64_t ledger_timeout_ms = 30000;
  std::uint64_t name_validity_s = 48 * 3600;
  // Announce blocks fetched by get_with_verify as a provider.
  bool provide_fetched = false;
};

enum class VerifyStatus { Verified, Tampered, UnknownToLedger };
const char* verify_status_name(VerifyStatus s);

struct VerifyReport {
  Cid cid;
  VerifyStatus status = VerifyStatus::UnknownToLedger;
  std::vector<LedgerHit> ledger_entries;
  std::string detail;
  Cid recomputed_cid;
  std::uint64_t size_bytes = 0;
};

// Verified iff a ledger entry describes cid (plain entry for it, or a
// modification record producing it), the recomputed root equals cid, and
// the latest describing entry's size equals the content size.
VerifyReport build_report(const Cid& requested, const Cid& recomputed, std::uint64_t size,
                          std::vector<LedgerHit> hits);

struct Added {
  Cid root;
  std::uint64_t size = 0;
  std::uint64_t height = 0;
};

struct Fetched {
  Bytes data;
  VerifyReport report;
  FetchReport fetch;
};

/// One peer: identity, block store, DHT, exchange and a ledger replica.
/// All methods must be called on the runtime's thread.
class Node {
 public:
  using BlockHook = std::function<void(const LedgerBlock&, std::uint64_t height)>;

  Node(NodeConfig config, Keypair identity, Runtime& rt, BlockStore& store, Chain& chain,
       BlockHook on_block = {});
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  void on_frame(ByteView frame);

  // Bootstrap into the DHT and pull the ledger from the registrar.
  void join(Callback<Unit> done);

  void add_with_metadata(Bytes data, std::string name, Callback<Added> done);
  void get_with_verify(const Cid& root, Callback<Fetched> done);
  // Like get_with_verify; the payload is not returned.
  void verify(const Cid& root, Callback<VerifyReport> done);
  void record_modification(const Cid& old_root, Bytes data, std::string name, Callback<Added> done);

  void publish(const Cid& value, Callback<NameRecord> done, std::optional<std::uint64_t> validity_s = {});
  void resolve(const NodeId& name_key, Callback<NameRecord> done);

  // Pull missing blocks from the registrar; fails with
  // LedgerValidationFailed if the received blocks do not extend our chain.
  void sync_ledger(Callback<std::uint64_t> done);
  void submit_entry(MetadataEntry e, Callback<std::uint64_t> done);

  const NodeId& id() const { return id_; }
  const Keypair& identity() const { return identity_; }
  const NodeConfig& config() const { return config_; }
  Contact contact() const { return {id_, config_.listen_addr, 0}; }
  Runtime& runtime() { return rt_; }
  BlockStore& store() { return store_; }
  const Chain& chain() const { return chain_; }
  Dht& dht() { return dht_; }
  const Dht& dht() const { return dht_; }
  Exchange& exchange() { return exchange_; }
  Rpc& rpc() { return rpc_; }
  LedgerWriter* ledger_writer() { return writer_.get(); }
  bool is_registrar() const { return config_.is_registrar; }

  std::map<NodeId, std::uint64_t>& name_sequences() { return name_seq_; }
  std::uint64_t frames_received() const { return frames_in_; }
  std::uint64_t frames_rejected() const { return frames_bad_; }

 private:
  void handle(const wire::Message& m);
  void handle_ledger_request(const wire::Message& m);
  void append_synced(std::vector<LedgerBlock> blocks, std::uint64_t remote_length, Callback<std::uint64_t> done);
  void submit_with_retry(MetadataEntry e, int attempts_left, Callback<std::uint64_t> done);
  void finish_get(const Cid& root, FetchReport fetch, Callback<Fetched> done);
  void fetch_and_verify(const Cid& root, Callback<Fetched> done);
  MetadataEntry make_entry(const Cid& cid, std::uint64_t size, std::string_view name, ByteView head);

  NodeConfig config_;
  Keypair identity_;
  NodeId id_;
  Runtime& rt_;
  BlockStore& store_;
  Chain& chain_;
  BlockHook on_block_;
  NameRecordValidator validator_;
  Rpc rpc_;
  Dht dht_;
  Exchange exchange_;
  std::unique_ptr<LedgerWriter> writer_;
  std::map<NodeId, std::uint64_t> name_seq_;
  std::map<NodeId, NameRecord> resolved_;
  std::uint64_t frames_in_ = 0;
  std::uint64_t frames_bad_ = 0;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace cafs
