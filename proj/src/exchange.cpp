#include "cafs/exchange.hpp"

#include <deque>

namespace cafs {

using namespace wire;

bool Wantlist::add(const Cid& cid, int priority) { return entries_.emplace(cid, priority).second; }

bool Wantlist::remove(const Cid& cid) { return entries_.erase(cid) != 0; }

std::vector<Wantlist::Entry> Wantlist::entries() const {
  std::vector<Entry> out;
  for (const auto& [cid, prio] : entries_) out.push_back({cid, prio});
  return out;
}

struct Exchange::Session {
  struct Peer {
    Contact contact;
    std::size_t in_flight = 0;
    bool demoted = false;
  };
  struct Want {
    std::set<std::size_t> excluded;
    std::optional<std::size_t> assigned;
    int attempts = 0;  // on the assigned peer
    bool in_flight = false;
  };

  Cid root;
  std::vector<Peer> peers;
  std::size_t cursor = 0;
  std::deque<Cid> queue;  // wants waiting for a peer
  std::map<Cid, Want> wants;
  std::set<Cid> seen;
  std::vector<Callback<FetchReport>> waiters;
  FetchReport report;
  int next_priority = 1 << 20;
  bool finished = false;
};

Exchange::Exchange(Rpc& rpc, BlockStore& store, DagParams dag, ExchangeParams params)
    : rpc_(rpc), store_(store), dag_(dag), params_(params) {}

Exchange::~Exchange() { *alive_ = false; }

PeerLedger Exchange::ledger_for(const NodeId& peer) const {
  auto it = ledgers_.find(peer);
  return it == ledgers_.end() ? PeerLedger{peer, 0, 0} : it->second;
}

std::vector<Exchange::Served> Exchange::serve_wants(const NodeId& peer, const std::vector<Cid>& cids) {
  std::vector<Served> out;
  for (const auto& cid : cids) {
    auto data = store_.get(cid);
    if (data) {
      if (corrupt_ && !data->empty()) (*data)[data->size() / 2] ^= 0xff;
      auto& l = ledgers_[peer];
      l.peer = peer;
      l.bytes_sent += data->size();
    }
    out.push_back({cid, std::move(data)});
  }
  return out;
}

bool Exchange::handle_request(const Message& m) {
  auto* want = std::get_if<wire::Want>(&m.body);
  if (!want) return false;
  for (auto& s : serve_wants(m.sender, want->cids)) {
    if (s.data) {
      rpc_.reply(m, Block{s.cid, std::move(*s.data)});
    } else {
      rpc_.reply(m, DontHave{s.cid});
    }
  }
  return true;
}

void Exchange::fetch_dag(const Cid& root, std::vector<Contact> providers, Callback<FetchReport> done) {
  if (auto it = sessions_.find(root); it != sessions_.end()) {
    it->second->waiters.push_back(std::move(done));
    return;
  }
  auto s = std::make_shared<Session>();
  s->root = root;
  for (auto& p : providers) {
    if (p.id == rpc_.self_id()) continue;
    bool dup = std::any_of(s->peers.begin(), s->peers.end(),
                           [&](const Session::Peer& x) { return x.contact.id == p.id; });
    if (!dup) s->peers.push_back({std::move(p)});
  }
  s->waiters.push_back(std::move(done));
  sessions_[root] = s;
  start(s);
}

void Exchange::start(const std::shared_ptr<Session>& s) {
  s->seen.insert(s->root);
  try {
    expand(s, s->root);
  } catch (const Error& e) {
    finish(s, e);
    return;
  }
  if (s->wants.empty()) {
    finish(s, std::nullopt);
    return;
  }
  dispatch(s);
}

// Walks locally present nodes breadth-first from cid, queueing absent ones.
void Exchange::expand(const std::shared_ptr<Session>& s, const Cid& cid) {
  std::deque<Cid> walk{cid};
  while (!walk.empty()) {
    auto cur = walk.front();
    walk.pop_front();
    auto bytes = store_.get(cur);
    if (!bytes) {
      s->wants[cur];
      s->queue.push_back(cur);
      wantlist_.add(cur, s->next_priority--);
      continue;
    }
    for (const auto& l : decode_node(*bytes).links) {
      if (s->seen.insert(l.child).second) walk.push_back(l.child);
    }
  }
}

void Exchange::dispatch(const std::shared_ptr<Session>& s) {
  if (s->finished) return;
  std::deque<Cid> waiting;
  while (!s->queue.empty()) {
    auto cid = s->queue.front();
    s->queue.pop_front();
    auto& want = s->wants[cid];
    auto n = s->peers.size();
    std::optional<std::size_t> choice;
    bool servable = false;
    for (std::size_t i = 0; i < n; ++i) {
      auto p = (s->cursor + i) % n;
      const auto& peer = s->peers[p];
      if (peer.demoted || want.excluded.count(p)) continue;
      servable = true;
      if (peer.in_flight < params_.inflight_cap) {
        choice = p;
        break;
      }
    }
    if (!servable) {
      finish(s, Error(Errc::Unretrievable, "no provider could supply block " + cid.text()));
      return;
    }
    if (!choice) {
      waiting.push_back(cid);
      continue;
    }
    s->cursor = (*choice + 1) % n;
    want.assigned = choice;
    want.attempts = 0;
    send_want(s, cid, *choice);
  }
  s->queue = std::move(waiting);
}

void Exchange::send_want(const std::shared_ptr<Session>& s, const Cid& cid, std::size_t peer) {
  auto& want = s->wants[cid];
  want.in_flight = true;
  ++want.attempts;
  ++s->peers[peer].in_flight;
  ++s->report.want_messages;
  std::weak_ptr<bool> alive = alive_;
  rpc_.request(s->peers[peer].contact.address, wire::Want{{cid}}, params_.want_timeout_ms,
               [this, alive, s, cid, peer](std::optional<Message> reply) {
                 if (alive.expired()) return;
                 on_reply(s, cid, peer, reply);
               });
}

void Exchange::on_reply(const std::shared_ptr<Session>& s, const Cid& cid, std::size_t peer,
                        const std::optional<Message>& reply) {
  auto& p = s->peers[peer];
  --p.in_flight;
  if (s->finished) return;
  auto it = s->wants.find(cid);
  if (it == s->wants.end()) return;
  auto& want = it->second;
  want.in_flight = false;

  if (!reply) {
    if (want.attempts <= params_.retries && !p.demoted) {
      send_want(s, cid, peer);
      return;
    }
    want.excluded.insert(peer);
    s->queue.push_back(cid);
  } else if (std::get_if<DontHave>(&reply->body)) {
    want.excluded.insert(peer);
    s->queue.push_back(cid);
  } else if (auto* b = std::get_if<Block>(&reply->body)) {
    auto& l = ledgers_[p.contact.id];
    l.peer = p.contact.id;
    l.bytes_received += b->data.size();
    if (b->cid != cid || !verify_block(cid, b->data)) {
      s->report.invalid_blocks.push_back({p.contact.id, cid});
      s->report.demoted.insert(p.contact.id);
      p.demoted = true;
      s->queue.push_back(cid);
    } else {
      store_.put(b->data);
      ++s->report.blocks_fetched;
      s->wants.erase(it);
      wantlist_.remove(cid);
      try {
        for (const auto& link : decode_node(b->data).links) {
          if (s->seen.insert(link.child).second) expand(s, link.child);
        }
      } catch (const Error& e) {
        finish(s, e);
        return;
      }
    }
  } else {
    want.excluded.insert(peer);
    s->queue.push_back(cid);
  }

  if (s->wants.empty()) {
    finish(s, std::nullopt);
    return;
  }
  dispatch(s);
}

void Exchange::finish(const std::shared_ptr<Session>& s, std::optional<Error> err) {
  if (s->finished) return;
  s->finished = true;
  for (const auto& [cid, w] : s->wants) wantlist_.remove(cid);
  sessions_.erase(s->root);
  auto waiters = std::move(s->waiters);
  for (auto& w : waiters) {
    if (err) {
      w(*err);
    } else {
      w(s->report);
    }
  }
}

}  // namespace cafs
