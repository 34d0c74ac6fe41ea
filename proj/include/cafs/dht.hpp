#pragma once

#include <map>
#include <memory>
#include <set>

#include "cafs/kademlia.hpp"
#include "cafs/naming.hpp"
#include "cafs/rpc.hpp"

namespace cafs {

struct DhtParams {
  std::size_t k = 20;
  std::size_t alpha = 3;
  std::uint64_t rpc_timeout_ms = 2000;
  std::uint64_t provider_ttl_ms = 24ull * 3600 * 1000;
  std::uint64_t record_ttl_ms = 24ull * 3600 * 1000;
  std::uint64_t republish_ms = 12ull * 3600 * 1000;  // 0 disables
  bool refresh_on_join = true;
};

struct LookupResult {
  std::vector<Contact> closest;
  std::uint32_t rounds = 0;
  std::uint32_t queried = 0;
  std::uint32_t responded = 0;
};

struct LookupStat {
  NodeId target;
  std::uint32_t rounds = 0;
};

/// Kademlia engine of one node: routing table maintenance, iterative
/// lookups, provider records and validated key/value records.
class Dht {
 public:
  Dht(Rpc& rpc, DhtParams params, const RecordValidator* validator = nullptr);
  ~Dht();
  Dht(const Dht&) = delete;
  Dht& operator=(const Dht&) = delete;

  const DhtParams& params() const { return params_; }
  RoutingTable& table() { return table_; }
  const RoutingTable& table() const { return table_; }
  Contact self() const { return {rpc_.self_id(), rpc_.self_addr(), 0}; }

  // Feed every authenticated sender seen on the wire.
  void observe(const Contact& c);
  // Handles PING, FIND_NODE, FIND_PROVIDERS, ADD_PROVIDER, STORE, GET.
  bool handle_request(const wire::Message& m);

  void bootstrap(std::vector<std::string> addresses, Callback<Unit> done);
  void refresh_buckets(Callback<Unit> done);

  void find_node(const NodeId& target, Callback<LookupResult> done);
  void provide(const Cid& key, Callback<std::size_t> done);
  void find_providers(const Cid& key, Callback<std::vector<ProviderRecord>> done);
  void store_record(const NodeId& key, Bytes value, Callback<std::size_t> done);
  // All distinct values seen for key (local first), unvalidated.
  void get_values(const NodeId& key, Callback<std::vector<Bytes>> done);
  // Highest-sequence value passing the validator.
  void get_record(const NodeId& key, Callback<Bytes> done);

  std::vector<ProviderRecord> local_providers(const Cid& key) const;
  std::optional<Bytes> local_record(const NodeId& key) const;
  bool store_local_record(const NodeId& key, Bytes value);
  void add_local_provider(const ProviderRecord& r);
  const std::set<Cid>& provided() const { return provided_; }

  const std::vector<LookupStat>& lookup_stats() const { return stats_; }

 private:
  struct Lookup;
  struct StoredRecord {
    Bytes value;
    std::uint64_t expires_at;
  };

  using ResponseHook = std::function<void(const wire::Message&)>;
  void run_lookup(const NodeId& target, wire::Body request, ResponseHook hook, Callback<LookupResult> done);
  void lookup_round(const std::shared_ptr<Lookup>& l);
  void finish_lookup(const std::shared_ptr<Lookup>& l);
  // k closest of lookup result plus self.
  std::vector<Contact> storage_targets(const NodeId& key, const std::vector<Contact>& found) const;
  void probe_oldest(int bucket, const Contact& candidate, int attempt);
  void schedule_republish();

  Rpc& rpc_;
  Runtime& rt_;
  DhtParams params_;
  const RecordValidator* validator_;
  RoutingTable table_;
  std::map<NodeId, std::map<NodeId, ProviderRecord>> providers_;
  std::map<NodeId, StoredRecord> records_;
  std::set<Cid> provided_;
  std::set<int> probing_;
  std::optional<TimerId> republish_timer_;
  std::vector<LookupStat> stats_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace cafs
