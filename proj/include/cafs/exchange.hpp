#pragma once

#include <map>
#include <memory>
#include <set>

#include "cafs/dag.hpp"
#include "cafs/rpc.hpp"

namespace cafs {

struct ExchangeParams {
  std::size_t inflight_cap = 16;
  std::uint64_t want_timeout_ms = 10000;
  int retries = 2;
};

class Wantlist {
 public:
  struct Entry {
    Cid cid;
    int priority = 0;
  };

  // Returns false if the cid is already wanted.
  bool add(const Cid& cid, int priority);
  bool remove(const Cid& cid);
  bool contains(const Cid& cid) const { return entries_.count(cid) != 0; }
  std::size_t size() const { return entries_.size(); }
  std::vector<Entry> entries() const;

 private:
  std::map<Cid, int> entries_;
};

struct PeerLedger {
  NodeId peer;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
};

struct InvalidBlockEvent {
  NodeId peer;
  Cid cid;
};

struct FetchReport {
  std::size_t blocks_fetched = 0;
  std::size_t want_messages = 0;
  std::vector<InvalidBlockEvent> invalid_blocks;
  std::set<NodeId> demoted;
};

/// Wantlist block exchange. fetch_dag walks a DAG breadth-first, asking
/// providers round-robin for absent blocks; every block is checked against
/// its CID before it is stored or expanded.
class Exchange {
 public:
  Exchange(Rpc& rpc, BlockStore& store, DagParams dag, ExchangeParams params);
  ~Exchange();
  Exchange(const Exchange&) = delete;
  Exchange& operator=(const Exchange&) = delete;

  void fetch_dag(const Cid& root, std::vector<Contact> providers, Callback<FetchReport> done);

  // WANT handler: one BLOCK or DONT_HAVE reply per requested cid.
  bool handle_request(const wire::Message& m);

  struct Served {
    Cid cid;
    std::optional<Bytes> data;  // nullopt = DONT_HAVE
  };
  std::vector<Served> serve_wants(const NodeId& peer, const std::vector<Cid>& cids);

  const std::map<NodeId, PeerLedger>& ledgers() const { return ledgers_; }
  PeerLedger ledger_for(const NodeId& peer) const;
  const Wantlist& wantlist() const { return wantlist_; }

  // Byzantine test hook: flip a byte in every served block.
  void set_corrupt(bool on) { corrupt_ = on; }
  bool corrupt() const { return corrupt_; }

 private:
  struct Session;
  void start(const std::shared_ptr<Session>& s);
  void expand(const std::shared_ptr<Session>& s, const Cid& cid);
  void dispatch(const std::shared_ptr<Session>& s);
  void send_want(const std::shared_ptr<Session>& s, const Cid& cid, std::size_t peer);
  void on_reply(const std::shared_ptr<Session>& s, const Cid& cid, std::size_t peer,
                const std::optional<wire::Message>& reply);
  void finish(const std::shared_ptr<Session>& s, std::optional<Error> err);

  Rpc& rpc_;
  BlockStore& store_;
  DagParams dag_;
  ExchangeParams params_;
  Wantlist wantlist_;
  std::map<NodeId, PeerLedger> ledgers_;
  std::map<Cid, std::shared_ptr<Session>> sessions_;
  bool corrupt_ = false;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace cafs
