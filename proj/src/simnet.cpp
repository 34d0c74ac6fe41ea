#include "cafs/simnet.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace cafs::sim {

namespace {

std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t index, std::string_view tag) {
  Writer w;
  w.u64(seed);
  w.u64(index);
  w.raw(as_bytes(tag));
  auto h = sha256(w.data());
  std::seed_seq seq{h[0] | h[1] << 8 | h[2] << 16 | static_cast<std::uint32_t>(h[3]) << 24,
                    h[4] | h[5] << 8 | h[6] << 16 | static_cast<std::uint32_t>(h[7]) << 24,
                    h[8] | h[9] << 8 | h[10] << 16 | static_cast<std::uint32_t>(h[11]) << 24,
                    h[12] | h[13] << 8 | h[14] << 16 | static_cast<std::uint32_t>(h[15]) << 24};
  return std::mt19937_64(seq);
}

std::optional<std::uint32_t> parse_address(const std::string& address) {
  if (address.rfind("sim:", 0) != 0) return std::nullopt;
  try {
    return static_cast<std::uint32_t>(std::stoul(address.substr(4)));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

NodeConfig SimConfig::default_node_config() {
  NodeConfig c;
  c.dht.rpc_timeout_ms = 1000;
  c.exchange.want_timeout_ms = 5000;
  c.ledger.flush_ms = 1000;
  c.ledger_timeout_ms = 10000;
  return c;
}

class Simulator::NodeRuntime final : public Runtime {
 public:
  NodeRuntime(Simulator& sim, std::uint32_t index, std::uint64_t generation)
      : sim_(sim), index_(index), generation_(generation) {}

  std::uint64_t now_ms() const override { return sim_.now_ms(); }
  TimerId schedule(std::uint64_t delay_ms, std::function<void()> fn) override {
    return sim_.add_timer(index_, generation_, delay_ms, std::move(fn));
  }
  void cancel(TimerId id) override { sim_.cancel_timer(id); }
  void send(const std::string& address, Bytes frame) override {
    sim_.deliver_frame(index_, address, std::move(frame));
  }
  std::mt19937_64& rng() override { return sim_.slots_[index_].node_rng; }

 private:
  Simulator& sim_;
  std::uint32_t index_;
  std::uint64_t generation_;
};

Simulator::Simulator(SimConfig cfg) : cfg_(std::move(cfg)), sim_rng_(derive_rng(cfg_.seed, 0, "sim")) {
  if (cfg_.latency_max_ms < cfg_.latency_min_ms) throw Error(Errc::InvalidArgument, "latency max < min");
  if (cfg_.drop_probability < 0.0 || cfg_.drop_probability > 1.0) {
    throw Error(Errc::InvalidArgument, "drop_probability outside [0,1]");
  }
  if (cfg_.node_count == 0 || cfg_.registrar >= cfg_.node_count) {
    throw Error(Errc::InvalidArgument, "registrar index outside node range");
  }
  slots_.resize(cfg_.node_count);
  for (std::uint32_t i = 0; i < cfg_.node_count; ++i) {
    auto& s = slots_[i];
    Writer w;
    w.u64(cfg_.seed);
    w.u64(i);
    w.raw(as_bytes("identity"));
    s.identity = Keypair::from_seed(sha256(w.data()));
    s.store = std::make_unique<MemoryBlockStore>();
    s.link_rng = derive_rng(cfg_.seed, i, "link");
    s.node_rng = derive_rng(cfg_.seed, i, "node");
  }
}

Simulator::~Simulator() {
  for (auto& s : slots_) {
    s.node.reset();
    s.runtime.reset();
  }
}

Node& Simulator::node(std::uint32_t i) {
  if (!slots_.at(i).node) throw Error(Errc::NodeLeft, "node " + std::to_string(i) + " is offline");
  return *slots_[i].node;
}

void Simulator::push(SimEvent ev) {
  ev.seq = next_seq_++;
  queue_.push(std::move(ev));
}

void Simulator::start() {
  for (std::uint32_t i = 0; i < cfg_.node_count; ++i) {
    SimEvent ev;
    ev.kind = SimEvent::Kind::Churn;
    ev.at = clock_ + i * cfg_.join_spacing_ms;
    ev.node = i;
    ev.action = ChurnEvent::Action::Join;
    push(std::move(ev));
  }
  for (const auto& c : cfg_.churn) {
    if (c.node >= cfg_.node_count) throw Error(Errc::ScriptError, "churn event for unknown node");
    SimEvent ev;
    ev.kind = SimEvent::Kind::Churn;
    ev.at = c.at_ms;
    ev.node = c.node;
    ev.action = c.action;
    push(std::move(ev));
  }
}

bool Simulator::settle(std::uint64_t deadline_ms) {
  return run_until([this] { return joined_ >= cfg_.node_count; }, deadline_ms);
}

bool Simulator::step() {
  if (queue_.empty()) return false;
  auto ev = queue_.top();
  queue_.pop();
  clock_ = std::max(clock_, ev.at);
  ++events_;
  process(ev);
  return true;
}

void Simulator::run_until(std::uint64_t t) {
  while (!queue_.empty() && queue_.top().at <= t) step();
  clock_ = std::max(clock_, t);
}

bool Simulator::run_until(const std::function<bool()>& pred, std::uint64_t deadline) {
  while (!pred()) {
    if (queue_.empty() || queue_.top().at > deadline) return pred();
    step();
  }
  return true;
}

void Simulator::record(const SimEvent& ev, std::uint8_t outcome) {
  Writer w;
  w.u64(ev.at);
  w.u64(ev.seq);
  w.u8(static_cast<std::uint8_t>(ev.kind));
  w.u32(ev.kind == SimEvent::Kind::Deliver ? ev.from : ev.node);
  w.u32(ev.to);
  w.u32(static_cast<std::uint32_t>(ev.frame.size()));
  w.u8(ev.frame.size() > 4 ? ev.frame[4] : 0);
  w.u8(outcome);
  trace_.update(w.data());
}

void Simulator::process(SimEvent& ev) {
  switch (ev.kind) {
    case SimEvent::Kind::Deliver: {
      bool ok = !ev.dropped && online(ev.to) && reachable(ev.from, ev.to);
      record(ev, ok ? 1 : 0);
      if (!ok) {
        ++dropped_;
        return;
      }
      ++delivered_;
      slots_[ev.to].node->on_frame(ev.frame);
      return;
    }
    case SimEvent::Kind::Churn:
      record(ev, static_cast<std::uint8_t>(ev.action));
      if (ev.action == ChurnEvent::Action::Join) {
        join(ev.node);
      } else {
        leave(ev.node);
      }
      return;
    case SimEvent::Kind::Timer: {
      auto it = timers_.find(ev.timer);
      if (it == timers_.end()) return;
      auto fn = std::move(it->second);
      timers_.erase(it);
      if (ev.node != SimEvent::kGlobal) {
        const auto& s = slots_[ev.node];
        if (!s.node || s.generation != ev.generation) return;
      }
      record(ev, 2);
      fn();
      return;
    }
  }
}

TimerId Simulator::add_timer(std::uint32_t node, std::uint64_t generation, std::uint64_t delay_ms,
                             std::function<void()> fn) {
  auto id = next_timer_++;
  timers_.emplace(id, std::move(fn));
  SimEvent ev;
  ev.kind = SimEvent::Kind::Timer;
  ev.at = clock_ + delay_ms;
  ev.node = node;
  ev.generation = generation;
  ev.timer = id;
  push(std::move(ev));
  return id;
}

void Simulator::cancel_timer(TimerId id) { timers_.erase(id); }

void Simulator::schedule_global(std::uint64_t delay_ms, std::function<void()> fn) {
  add_timer(SimEvent::kGlobal, 0, delay_ms, std::move(fn));
}

void Simulator::deliver_frame(std::uint32_t from, const std::string& address, Bytes frame) {
  auto to = parse_address(address);
  auto& link = slots_[from].link_rng;
  std::uniform_int_distribution<std::uint64_t> latency(cfg_.latency_min_ms, cfg_.latency_max_ms);
  SimEvent ev;
  ev.kind = SimEvent::Kind::Deliver;
  ev.at = clock_ + latency(link);
  ev.from = from;
  ev.to = to.value_or(0);
  ev.dropped = !to || *to >= slots_.size();
  if (cfg_.drop_probability > 0.0) {
    std::bernoulli_distribution drop(cfg_.drop_probability);
    ev.dropped = drop(link) || ev.dropped;
  }
  wire_bytes_ += frame.size();
  ev.frame = std::move(frame);
  push(std::move(ev));
}

bool Simulator::reachable(std::uint32_t from, std::uint32_t to) const {
  if (groups_.empty()) return true;
  auto group = [&](std::uint32_t n) {
    auto it = groups_.find(n);
    return it == groups_.end() ? SimEvent::kGlobal : it->second;
  };
  return group(from) == group(to);
}

void Simulator::join(std::uint32_t i) {
  auto& s = slots_.at(i);
  if (s.node) return;
  ++s.generation;
  NodeConfig nc = cfg_.node;
  nc.listen_addr = address_of(i);
  nc.is_registrar = i == cfg_.registrar;
  nc.registrar_addr = address_of(cfg_.registrar);
  nc.bootstrap.clear();
  std::vector<std::uint32_t> others;
  for (std::uint32_t j = 0; j < slots_.size(); ++j) {
    if (j != i && slots_[j].node) others.push_back(j);
  }
  if (!others.empty()) {
    if (i != cfg_.registrar && slots_[cfg_.registrar].node) nc.bootstrap.push_back(address_of(cfg_.registrar));
    std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
    auto j = others[pick(sim_rng_)];
    if (j != cfg_.registrar) nc.bootstrap.push_back(address_of(j));
  }
  s.runtime = std::make_unique<NodeRuntime>(*this, i, s.generation);
  s.node = std::make_unique<Node>(nc, s.identity, *s.runtime, *s.store, s.chain);
  s.node->join([this](Outcome<Unit>) { ++joined_; });
}

void Simulator::leave(std::uint32_t i) {
  auto& s = slots_.at(i);
  if (!s.node) return;
  s.node.reset();
  s.runtime.reset();
  if (on_leave) on_leave(i);
}

void Simulator::partition(const std::vector<std::vector<std::uint32_t>>& groups) {
  groups_.clear();
  for (std::uint32_t g = 0; g < groups.size(); ++g) {
    for (auto n : groups[g]) groups_[n] = g;
  }
}

void Simulator::heal() { groups_.clear(); }

void Simulator::set_corrupt(std::uint32_t i, bool on) { node(i).exchange().set_corrupt(on); }

std::string Simulator::trace_digest() const {
  auto copy = trace_;
  return to_hex(copy.finish());
}

// ---------------------------------------------------------------------------

std::vector<std::uint32_t> GlobalOracle::membership() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < sim_.slots_.size(); ++i) {
    if (sim_.slots_[i].node) out.push_back(i);
  }
  return out;
}

std::vector<NodeId> GlobalOracle::k_closest(const NodeId& target, std::size_t k, std::optional<NodeId> exclude) const {
  std::vector<NodeId> ids;
  for (auto i : membership()) {
    auto id = sim_.slots_[i].identity.node_id();
    if (exclude && id == *exclude) continue;
    ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end(),
            [&](const NodeId& a, const NodeId& b) { return xor_distance(a, target) < xor_distance(b, target); });
  if (ids.size() > k) ids.resize(k);
  return ids;
}

std::vector<std::uint32_t> GlobalOracle::block_locations(const Cid& cid) const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < sim_.slots_.size(); ++i) {
    if (sim_.slots_[i].store->has(cid)) out.push_back(i);
  }
  return out;
}

std::vector<std::uint32_t> GlobalOracle::provider_record_holders(const Cid& cid) const {
  std::vector<std::uint32_t> out;
  for (auto i : membership()) {
    auto recs = sim_.slots_[i].node->dht().local_providers(cid);
    if (!recs.empty()) out.push_back(i);
  }
  return out;
}

std::optional<std::uint32_t> GlobalOracle::index_of(const NodeId& id) const {
  for (std::uint32_t i = 0; i < sim_.slots_.size(); ++i) {
    if (sim_.slots_[i].identity.node_id() == id) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

Bytes scenario_file(std::uint64_t seed, const std::string& label, std::uint64_t size) {
  auto rng = derive_rng(seed, size, "file:" + label);
  Bytes out(size);
  std::size_t i = 0;
  for (; i + 8 <= size; i += 8) {
    auto v = rng();
    for (int b = 0; b < 8; ++b) out[i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(v >> (8 * b));
  }
  auto v = rng();
  for (; i < size; ++i, v >>= 8) out[i] = static_cast<std::uint8_t>(v);
  return out;
}

namespace {

const std::set<std::string> kOps = {"add", "get", "verify", "lookup", "publish",
                                    "resolve", "modify", "partition", "heal", "corrupt"};

struct FileInfo {
  Bytes content;
  Cid cid;
};

}  // namespace

TraceReport run_scenario(const SimConfig& cfg, const std::vector<ScriptAction>& script) {
  // Validate and precompute file contents before anything runs.
  std::map<std::string, FileInfo> files;
  std::vector<std::size_t> order(script.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return script[a].at_ms < script[b].at_ms; });
  for (auto idx : order) {
    const auto& a = script[idx];
    if (!kOps.count(a.op)) throw Error(Errc::ScriptError, "unknown op '" + a.op + "'");
    bool needs_node = a.op != "partition" && a.op != "heal";
    if (needs_node && a.node >= cfg.node_count) throw Error(Errc::ScriptError, "action node out of range");
    if (a.op == "add" || a.op == "modify") {
      if (a.file.empty()) throw Error(Errc::ScriptError, a.op + " requires a file label");
      if (a.op == "modify" && !files.count(a.base)) {
        throw Error(Errc::ScriptError, "modify of undefined file '" + a.base + "'");
      }
      auto content = scenario_file(cfg.seed, a.file, a.size);
      auto cid = compute_root(content, cfg.node.dag);
      files[a.file] = {std::move(content), cid};
    } else if (a.op == "get" || a.op == "verify" || a.op == "publish") {
      if (!files.count(a.file)) throw Error(Errc::ScriptError, a.op + " of undefined file '" + a.file + "'");
    } else if (a.op == "resolve" && a.publisher >= cfg.node_count) {
      throw Error(Errc::ScriptError, "resolve publisher out of range");
    } else if (a.op == "lookup" && !a.target.empty() && a.target.size() != 64) {
      throw Error(Errc::ScriptError, "lookup target must be 64 hex digits");
    }
  }

  Simulator sim(cfg);
  std::vector<OpResult> results(script.size());
  std::map<std::uint32_t, std::set<std::size_t>> in_flight;
  auto script_rng = derive_rng(cfg.seed, 0, "script");

  auto complete = [&](std::size_t idx, auto&& fill) {
    auto& r = results[idx];
    if (r.done) return;
    r.done = true;
    r.finished_ms = sim.now();
    fill(r);
    in_flight[r.node].erase(idx);
  };
  auto fail = [&](std::size_t idx, const Error& e) {
    complete(idx, [&](OpResult& r) {
      r.ok = false;
      r.error = std::string(errc_name(e.code())) + ": " + e.what();
    });
  };
  sim.on_leave = [&](std::uint32_t n) {
    auto pending = in_flight[n];
    for (auto idx : pending) fail(idx, Error(Errc::NodeLeft, "node left before the operation finished"));
  };

  auto launch = [&](std::size_t idx) {
    const auto& a = script[idx];
    auto& r = results[idx];
    r.started_ms = sim.now();
    if (a.op == "partition" || a.op == "heal") {
      if (a.op == "partition") {
        sim.partition(a.groups);
      } else {
        sim.heal();
      }
      complete(idx, [](OpResult& res) { res.ok = true; });
      return;
    }
    if (!sim.online(a.node)) {
      fail(idx, Error(Errc::NodeLeft, "node is offline"));
      return;
    }
    in_flight[a.node].insert(idx);
    auto& node = sim.node(a.node);
    if (a.op == "corrupt") {
      sim.set_corrupt(a.node, a.flag);
      complete(idx, [](OpResult& res) { res.ok = true; });
    } else if (a.op == "add") {
      const auto& f = files.at(a.file);
      node.add_with_metadata(f.content, a.file, [&, idx](Outcome<Added> out) {
        if (!out) return fail(idx, out.error());
        complete(idx, [&](OpResult& res) {
          res.ok = true;
          res.cid = out->root.text();
          res.height = out->height;
        });
      });
    } else if (a.op == "modify") {
      const auto& base = files.at(a.base);
      const auto& f = files.at(a.file);
      node.record_modification(base.cid, f.content, a.file, [&, idx](Outcome<Added> out) {
        if (!out) return fail(idx, out.error());
        complete(idx, [&](OpResult& res) {
          res.ok = true;
          res.cid = out->root.text();
          res.height = out->height;
        });
      });
    } else if (a.op == "get" || a.op == "verify") {
      const auto& f = files.at(a.file);
      node.get_with_verify(f.cid, [&, idx, label = a.file](Outcome<Fetched> out) {
        if (!out) return fail(idx, out.error());
        complete(idx, [&](OpResult& res) {
          res.ok = out->report.status == VerifyStatus::Verified;
          res.cid = out->report.cid.text();
          res.status = verify_status_name(out->report.status);
          res.bytes_match = out->data == files.at(label).content;
          if (!res.ok) res.error = out->report.detail;
        });
      });
    } else if (a.op == "lookup") {
      NodeId target;
      if (a.target.empty()) {
        for (auto& b : target.bytes) b = static_cast<std::uint8_t>(script_rng());
      } else {
        auto raw = from_hex(a.target);
        std::copy(raw.begin(), raw.end(), target.bytes.begin());
      }
      auto self = node.id();
      auto k = node.dht().params().k;
      node.dht().find_node(target, [&, idx, target, self, k](Outcome<LookupResult> out) {
        if (!out) return fail(idx, out.error());
        complete(idx, [&](OpResult& res) {
          res.ok = true;
          res.rounds = out->rounds;
          std::vector<NodeId> got;
          for (const auto& c : out->closest) got.push_back(c.id);
          res.exact = got == sim.oracle().k_closest(target, k, self);
        });
      });
    } else if (a.op == "publish") {
      node.publish(files.at(a.file).cid, [&, idx](Outcome<NameRecord> out) {
        if (!out) return fail(idx, out.error());
        complete(idx, [&](OpResult& res) {
          res.ok = true;
          res.cid = out->value.text();
          res.sequence = out->sequence;
        });
      });
    } else if (a.op == "resolve") {
      auto key = sim.identity(a.publisher).node_id();
      node.resolve(key, [&, idx](Outcome<NameRecord> out) {
        if (!out) return fail(idx, out.error());
        complete(idx, [&](OpResult& res) {
          res.ok = true;
          res.cid = out->value.text();
          res.sequence = out->sequence;
        });
      });
    }
  };

  for (std::size_t i = 0; i < script.size(); ++i) {
    results[i].index = i;
    results[i].op = script[i].op;
    results[i].node = script[i].node;
  }
  sim.start();
  for (auto idx : order) sim.schedule_global(script[idx].at_ms, [&, idx] { launch(idx); });

  auto end = cfg.duration_s * 1000;
  bool all_done = false;
  sim.run_until(
      [&] {
        all_done = std::all_of(results.begin(), results.end(), [](const OpResult& r) { return r.done; });
        return all_done && sim.joined_count() >= cfg.node_count;
      },
      end);
  for (auto& r : results) {
    if (!r.done) {
      r.done = true;
      r.finished_ms = sim.now();
      r.error = "Timeout: unfinished when the run ended";
    }
  }

  TraceReport report;
  report.seed = cfg.seed;
  report.nodes = cfg.node_count;
  report.end_ms = sim.now();
  report.events = sim.events_processed();
  report.delivered = sim.delivered();
  report.dropped = sim.dropped();
  report.trace_digest = sim.trace_digest();
  report.ops = std::move(results);
  for (std::uint32_t i = 0; i < cfg.node_count; ++i) {
    PeerCounters pc;
    pc.node = i;
    if (const auto* n = sim.node_ptr(i)) {
      for (const auto& [peer, l] : const_cast<Node*>(n)->exchange().ledgers()) {
        pc.bytes_sent += l.bytes_sent;
        pc.bytes_received += l.bytes_received;
      }
      for (const auto& s : n->dht().lookup_stats()) pc.lookup_rounds.push_back(s.rounds);
    }
    report.peers.push_back(std::move(pc));
  }
  return report;
}

std::string TraceReport::to_jsonl() const {
  using nlohmann::json;
  std::ostringstream out;
  out << json{{"type", "summary"}, {"seed", seed},       {"nodes", nodes},
              {"end_ms", end_ms},  {"events", events},   {"delivered", delivered},
              {"dropped", dropped}, {"trace_digest", trace_digest}}
             .dump()
      << "\n";
  for (const auto& op : ops) {
    json j{{"type", "op"},        {"index", op.index},     {"op", op.op},
           {"node", op.node},     {"started_ms", op.started_ms}, {"finished_ms", op.finished_ms},
           {"ok", op.ok}};
    if (!op.error.empty()) j["error"] = op.error;
    if (!op.cid.empty()) j["cid"] = op.cid;
    if (op.op == "add" || op.op == "modify") j["height"] = op.height;
    if (!op.status.empty()) {
      j["status"] = op.status;
      j["bytes_match"] = op.bytes_match;
    }
    if (op.op == "lookup") {
      j["rounds"] = op.rounds;
      j["exact"] = op.exact;
    }
    if (op.op == "publish" || op.op == "resolve") j["sequence"] = op.sequence;
    out << j.dump() << "\n";
  }
  for (const auto& p : peers) {
    out << json{{"type", "peer"},
                {"node", p.node},
                {"bytes_sent", p.bytes_sent},
                {"bytes_received", p.bytes_received},
                {"lookup_rounds", p.lookup_rounds}}
               .dump()
        << "\n";
  }
  return out.str();
}

std::string TraceReport::summary_table() const {
  std::ostringstream out;
  out << "seed " << seed << ", " << nodes << " nodes, ended at " << end_ms << " ms, " << delivered
      << " delivered / " << dropped << " dropped\n";
  out << std::left << std::setw(5) << "#" << std::setw(10) << "op" << std::setw(6) << "node" << std::setw(11)
      << "start_ms" << std::setw(11) << "end_ms" << std::setw(5) << "ok"
      << "detail\n";
  for (const auto& op : ops) {
    std::string detail = op.error;
    if (detail.empty()) {
      detail = op.cid;
      if (op.op == "lookup") detail = "rounds=" + std::to_string(op.rounds) + (op.exact ? " exact" : "");
      if (!op.status.empty()) detail += " " + op.status;
    }
    out << std::left << std::setw(5) << op.index << std::setw(10) << op.op << std::setw(6) << op.node
        << std::setw(11) << op.started_ms << std::setw(11) << op.finished_ms << std::setw(5)
        << (op.ok ? "yes" : "no") << detail << "\n";
  }
  std::size_t lookups = 0;
  std::uint64_t rounds = 0;
  for (const auto& p : peers) {
    lookups += p.lookup_rounds.size();
    for (auto r : p.lookup_rounds) rounds += r;
  }
  if (lookups > 0) {
    out << "lookups: " << lookups << ", mean rounds " << std::fixed << std::setprecision(2)
        << static_cast<double>(rounds) / static_cast<double>(lookups) << "\n";
  }
  return out.str();
}

}  // namespace cafs::sim
