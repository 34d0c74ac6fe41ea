#pragma once

#include <deque>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cafs/node.hpp"

namespace cafs::sim {

// Virtual time zero maps to this unix instant (2018-06-12T00:00:00Z).
inline constexpr std::uint64_t kEpochMs = 1528761600000ull;

struct ChurnEvent {
  enum class Action { Join, Leave };
  std::uint64_t at_ms = 0;
  std::uint32_t node = 0;
  Action action = Action::Leave;
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::uint32_t node_count = 16;
  std::uint64_t latency_min_ms = 10;
  std::uint64_t latency_max_ms = 50;
  double drop_probability = 0.0;
  std::vector<ChurnEvent> churn;
  std::uint64_t duration_s = 3600;
  std::uint32_t registrar = 0;
  std::uint64_t join_spacing_ms = 200;
  // Parameters applied to every simulated node (listen/bootstrap are filled in).
  NodeConfig node = default_node_config();

  static NodeConfig default_node_config();
};

struct SimEvent {
  enum class Kind { Deliver, Churn, Timer };

  std::uint64_t at = 0;
  std::uint64_t seq = 0;
  Kind kind = Kind::Timer;
  // Deliver
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  bool dropped = false;
  Bytes frame;
  // Churn
  ChurnEvent::Action action = ChurnEvent::Action::Leave;
  // Timer: node == kGlobal for simulator-level timers
  std::uint32_t node = 0;
  std::uint64_t generation = 0;
  TimerId timer = 0;

  static constexpr std::uint32_t kGlobal = 0xffffffffu;
};

class Simulator;

/// Omniscient view for tests; never handed to simulated nodes.
class GlobalOracle {
 public:
  explicit GlobalOracle(const Simulator& sim) : sim_(sim) {}

  std::vector<std::uint32_t> membership() const;
  // True k closest online nodes to target (optionally excluding one id).
  std::vector<NodeId> k_closest(const NodeId& target, std::size_t k, std::optional<NodeId> exclude = {}) const;
  std::vector<std::uint32_t> block_locations(const Cid& cid) const;
  std::vector<std::uint32_t> provider_record_holders(const Cid& cid) const;
  std::optional<std::uint32_t> index_of(const NodeId& id) const;

 private:
  const Simulator& sim_;
};

/// Single-threaded discrete-event network. Events run in (at, seq) order;
/// all randomness comes from streams derived from the global seed.
class Simulator {
 public:
  explicit Simulator(SimConfig cfg);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const SimConfig& config() const { return cfg_; }
  std::size_t size() const { return slots_.size(); }
  bool online(std::uint32_t i) const { return slots_[i].node != nullptr; }
  Node& node(std::uint32_t i);
  const Node* node_ptr(std::uint32_t i) const { return slots_[i].node.get(); }
  MemoryBlockStore& store(std::uint32_t i) { return *slots_[i].store; }
  const MemoryBlockStore& store(std::uint32_t i) const { return *slots_[i].store; }
  const Chain& chain(std::uint32_t i) const { return slots_[i].chain; }
  const Keypair& identity(std::uint32_t i) const { return slots_[i].identity; }
  static std::string address_of(std::uint32_t i) { return "sim:" + std::to_string(i); }

  std::uint64_t now() const { return clock_; }  // virtual ms since start
  std::uint64_t now_ms() const { return kEpochMs + clock_; }

  // Schedules the initial staggered joins and configured churn.
  void start();
  // Runs until every initial join has completed (or the deadline passes).
  bool settle(std::uint64_t deadline_ms);

  bool step();
  void run_until(std::uint64_t t);
  bool run_until(const std::function<bool()>& pred, std::uint64_t deadline);

  // Starts an async node operation and runs the simulation until it
  // completes; Timeout if the deadline passes first.
  template <typename T>
  Outcome<T> await(const std::function<void(Callback<T>)>& op, std::uint64_t max_wait_ms = 600000) {
    std::optional<Outcome<T>> result;
    op([&result](Outcome<T> r) { result.emplace(std::move(r)); });
    run_until([&] { return result.has_value(); }, clock_ + max_wait_ms);
    if (!result) return Error(Errc::Timeout, "simulated operation did not finish");
    return std::move(*result);
  }

  void schedule_global(std::uint64_t delay_ms, std::function<void()> fn);

  void leave(std::uint32_t i);
  void join(std::uint32_t i);
  void partition(const std::vector<std::vector<std::uint32_t>>& groups);
  void heal();
  void set_corrupt(std::uint32_t i, bool on);

  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t events_processed() const { return events_; }
  std::string trace_digest() const;
  std::size_t joined_count() const { return joined_; }
  std::uint64_t bytes_on_wire() const { return wire_bytes_; }

  GlobalOracle oracle() const { return GlobalOracle(*this); }

  // Fires when a node leaves so callers can fail operations bound to it.
  std::function<void(std::uint32_t)> on_leave;

 private:
  class NodeRuntime;
  friend class NodeRuntime;
  friend class GlobalOracle;

  struct Slot {
    Keypair identity;
    std::unique_ptr<MemoryBlockStore> store;
    Chain chain;
    std::unique_ptr<NodeRuntime> runtime;
    std::unique_ptr<Node> node;
    std::uint64_t generation = 0;
    std::mt19937_64 link_rng;
    std::mt19937_64 node_rng;
  };

  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void push(SimEvent ev);
  void process(SimEvent& ev);
  void record(const SimEvent& ev, std::uint8_t outcome);
  void deliver_frame(std::uint32_t from, const std::string& address, Bytes frame);
  TimerId add_timer(std::uint32_t node, std::uint64_t generation, std::uint64_t delay_ms, std::function<void()> fn);
  void cancel_timer(TimerId id);
  bool reachable(std::uint32_t from, std::uint32_t to) const;

  SimConfig cfg_;
  std::vector<Slot> slots_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::unordered_map<TimerId, std::function<void()>> timers_;
  std::map<std::uint32_t, std::uint32_t> groups_;
  std::uint64_t clock_ = 0;
  std::uint64_t next_seq_ = 0;
  TimerId next_timer_ = 1;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t events_ = 0;
  std::uint64_t wire_bytes_ = 0;
  std::size_t joined_ = 0;
  std::mt19937_64 sim_rng_;
  Sha256 trace_;
};

// ---------------------------------------------------------------------------
// Scripted scenarios

struct ScriptAction {
  std::uint64_t at_ms = 0;
  std::string op;  // add get verify lookup publish resolve modify partition heal corrupt
  std::uint32_t node = 0;
  std::string file;
  std::string base;  // modify: label of the file being modified
  std::uint64_t size = 0;
  std::uint32_t publisher = 0;
  std::string target;  // lookup: hex key, empty = random
  std::vector<std::vector<std::uint32_t>> groups;
  bool flag = true;
};

struct Scenario {
  SimConfig config;
  std::vector<ScriptAction> script;
};

// TOML subset: [sim] table, [[churn]] and [[action]] arrays of tables.
// Throws Error(ScriptError) on malformed input.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::string& path);

struct OpResult {
  std::size_t index = 0;
  std::string op;
  std::uint32_t node = 0;
  std::uint64_t started_ms = 0;
  std::uint64_t finished_ms = 0;
  bool done = false;
  bool ok = false;
  std::string error;
  std::string cid;
  std::uint64_t height = 0;
  std::string status;
  bool bytes_match = false;
  std::uint32_t rounds = 0;
  bool exact = false;
  std::uint64_t sequence = 0;
};

struct PeerCounters {
  std::uint32_t node = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::vector<std::uint32_t> lookup_rounds;
};

struct TraceReport {
  std::uint64_t seed = 0;
  std::uint32_t nodes = 0;
  std::uint64_t end_ms = 0;
  std::uint64_t events = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::string trace_digest;
  std::vector<OpResult> ops;
  std::vector<PeerCounters> peers;

  std::string to_jsonl() const;
  std::string summary_table() const;
};

// Deterministic file body for a script label.
Bytes scenario_file(std::uint64_t seed, const std::string& label, std::uint64_t size);

TraceReport run_scenario(const SimConfig& cfg, const std::vector<ScriptAction>& script);
inline TraceReport run_scenario(const Scenario& s) { return run_scenario(s.config, s.script); }

}  // namespace cafs::sim
