#include "cafs/dht.hpp"

#include <algorithm>

namespace cafs {

using namespace wire;

struct Dht::Lookup {
  enum class State { Fresh, Waiting, Responded, Failed };
  struct Entry {
    Contact contact;
    State state = State::Fresh;
  };

  NodeId target;
  Body request;
  ResponseHook hook;
  Callback<LookupResult> done;
  std::vector<Entry> entries;  // ascending distance to target
  std::uint32_t rounds = 0;
  std::uint32_t queried = 0;
  std::uint32_t responded = 0;
  std::size_t in_flight = 0;
  bool improved = true;
  std::optional<NodeId> best_before;

  void merge(const Contact& c, const NodeId& self) {
    if (c.id == self) return;
    auto d = xor_distance(c.id, target);
    auto it = std::lower_bound(entries.begin(), entries.end(), d, [&](const Entry& e, const NodeId& dist) {
      return xor_distance(e.contact.id, target) < dist;
    });
    if (it != entries.end() && it->contact.id == c.id) return;
    entries.insert(it, Entry{c, State::Fresh});
  }

  std::optional<NodeId> best_live() const {
    for (const auto& e : entries) {
      if (e.state != State::Failed) return xor_distance(e.contact.id, target);
    }
    return std::nullopt;
  }
};

Dht::Dht(Rpc& rpc, DhtParams params, const RecordValidator* validator)
    : rpc_(rpc), rt_(rpc.runtime()), params_(params), validator_(validator), table_(rpc.self_id(), params.k) {}

Dht::~Dht() {
  *alive_ = false;
  if (republish_timer_) rt_.cancel(*republish_timer_);
}

void Dht::observe(const Contact& c) {
  if (c.id == rpc_.self_id() || c.address.empty()) return;
  auto res = table_.update(c, rt_.now_ms());
  if (res != RoutingTable::Update::BucketFull) return;
  int bucket = bucket_index(table_.owner(), c.id);
  if (probing_.count(bucket)) return;
  probing_.insert(bucket);
  probe_oldest(bucket, c, 0);
}

void Dht::probe_oldest(int bucket, const Contact& candidate, int attempt) {
  auto oldest = table_.oldest(bucket);
  if (!oldest) {
    probing_.erase(bucket);
    table_.update(candidate, rt_.now_ms());
    return;
  }
  std::weak_ptr<bool> alive = alive_;
  rpc_.request(oldest->address, Ping{}, params_.rpc_timeout_ms,
               [this, alive, bucket, candidate, attempt, old_id = oldest->id](std::optional<Message> reply) {
                 if (alive.expired()) return;
                 if (reply) {
                   table_.touch(old_id, rt_.now_ms());
                   probing_.erase(bucket);
                 } else if (attempt == 0) {
                   probe_oldest(bucket, candidate, 1);
                 } else {
                   auto cur = table_.oldest(bucket);
                   if (cur && cur->id == old_id) table_.replace_oldest(bucket, candidate, rt_.now_ms());
                   probing_.erase(bucket);
                 }
               });
}

bool Dht::handle_request(const Message& m) {
  auto now = rt_.now_ms();
  if (std::holds_alternative<Ping>(m.body)) {
    rpc_.reply(m, Pong{});
  } else if (auto* b = std::get_if<FindNode>(&m.body)) {
    rpc_.reply(m, Nodes{table_.closest(b->target, params_.k)});
  } else if (auto* b = std::get_if<FindProviders>(&m.body)) {
    Providers out;
    out.providers = local_providers(b->key);
    out.closer = table_.closest(NodeId::from_cid(b->key), params_.k);
    rpc_.reply(m, std::move(out));
  } else if (auto* b = std::get_if<AddProvider>(&m.body)) {
    add_local_provider({b->key, m.sender, m.sender_addr, now + params_.provider_ttl_ms});
    rpc_.reply(m, Ack{});
  } else if (auto* b = std::get_if<Store>(&m.body)) {
    if (b->value.size() > kMaxRecordValue) {
      rpc_.reply(m, Ack{Errc::ValueTooLarge, "record value exceeds 4 KiB"});
    } else if (!store_local_record(b->key, b->value)) {
      rpc_.reply(m, Ack{Errc::Rejected, "record failed validation"});
    } else {
      rpc_.reply(m, Ack{});
    }
  } else if (auto* b = std::get_if<Get>(&m.body)) {
    Value out;
    if (auto v = local_record(b->key)) out.values.push_back(*v);
    out.closer = table_.closest(b->key, params_.k);
    rpc_.reply(m, std::move(out));
  } else {
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

void Dht::bootstrap(std::vector<std::string> addresses, Callback<Unit> done) {
  if (addresses.empty()) {
    done(Unit{});
    return;
  }
  auto remaining = std::make_shared<std::size_t>(addresses.size());
  std::weak_ptr<bool> alive = alive_;
  for (const auto& addr : addresses) {
    rpc_.request(addr, Ping{}, params_.rpc_timeout_ms, [this, alive, remaining, done](std::optional<Message>) {
      // the PONG sender has already been observed by the node's dispatcher
      if (alive.expired() || --*remaining > 0) return;
      if (table_.size() == 0) {
        done(Error(Errc::NoPeers, "no bootstrap peer answered"));
        return;
      }
      find_node(rpc_.self_id(), [this, alive, done](Outcome<LookupResult> r) {
        if (alive.expired()) return;
        if (!r) {
          done(r.error());
          return;
        }
        if (!params_.refresh_on_join) {
          done(Unit{});
          return;
        }
        refresh_buckets(done);
      });
    });
  }
}

void Dht::refresh_buckets(Callback<Unit> done) {
  // Refresh every bucket farther than the closest known neighbour.
  int nearest = 256;
  for (int i = 0; i < 256; ++i) {
    if (!table_.bucket(i).empty()) {
      nearest = i;
      break;
    }
  }
  std::vector<NodeId> targets;
  for (int i = nearest + 1; i < 256; ++i) {
    NodeId t = table_.owner();
    std::uniform_int_distribution<int> byte(0, 255);
    std::size_t byte_idx = static_cast<std::size_t>(31 - i / 8);
    int bit = i % 8;
    // flip bit i, randomise everything below it
    t.bytes[byte_idx] ^= static_cast<std::uint8_t>(1 << bit);
    std::uint8_t low_mask = static_cast<std::uint8_t>((1 << bit) - 1);
    t.bytes[byte_idx] = static_cast<std::uint8_t>((t.bytes[byte_idx] & ~low_mask) |
                                                  (byte(rt_.rng()) & low_mask));
    for (std::size_t j = byte_idx + 1; j < 32; ++j) t.bytes[j] = static_cast<std::uint8_t>(byte(rt_.rng()));
    targets.push_back(t);
  }
  if (targets.empty()) {
    done(Unit{});
    return;
  }
  auto remaining = std::make_shared<std::size_t>(targets.size());
  for (const auto& t : targets) {
    find_node(t, [remaining, done](Outcome<LookupResult>) {
      if (--*remaining == 0) done(Unit{});
    });
  }
}

void Dht::run_lookup(const NodeId& target, Body request, ResponseHook hook, Callback<LookupResult> done) {
  auto l = std::make_shared<Lookup>();
  l->target = target;
  l->request = std::move(request);
  l->hook = std::move(hook);
  l->done = std::move(done);
  for (const auto& c : table_.closest(target, params_.k)) l->merge(c, rpc_.self_id());
  if (l->entries.empty()) {
    l->done(Error(Errc::NoPeers, "routing table is empty"));
    return;
  }
  lookup_round(l);
}

void Dht::lookup_round(const std::shared_ptr<Lookup>& l) {
  using State = Lookup::State;
  std::vector<Lookup::Entry*> top;
  for (auto& e : l->entries) {
    if (e.state == State::Failed) continue;
    top.push_back(&e);
    if (top.size() == params_.k) break;
  }
  std::vector<Lookup::Entry*> pick;
  for (auto* e : top) {
    if (e->state != State::Fresh) continue;
    if (l->improved && pick.size() == params_.alpha) break;
    pick.push_back(e);
  }
  if (pick.empty()) {
    finish_lookup(l);
    return;
  }
  ++l->rounds;
  l->best_before = l->best_live();
  l->in_flight = pick.size();
  std::weak_ptr<bool> alive = alive_;
  for (auto* e : pick) {
    e->state = State::Waiting;
    ++l->queried;
    auto id = e->contact.id;
    rpc_.request(e->contact.address, l->request, params_.rpc_timeout_ms,
                 [this, alive, l, id](std::optional<Message> reply) {
                   if (alive.expired()) return;
                   auto it = std::find_if(l->entries.begin(), l->entries.end(),
                                          [&](const Lookup::Entry& x) { return x.contact.id == id; });
                   if (reply) {
                     if (it != l->entries.end()) it->state = State::Responded;
                     ++l->responded;
                     const std::vector<Contact>* closer = nullptr;
                     if (auto* n = std::get_if<Nodes>(&reply->body)) closer = &n->contacts;
                     if (auto* p = std::get_if<Providers>(&reply->body)) closer = &p->closer;
                     if (auto* v = std::get_if<Value>(&reply->body)) closer = &v->closer;
                     if (closer) {
                       for (const auto& c : *closer) l->merge(c, rpc_.self_id());
                     }
                     if (l->hook) l->hook(*reply);
                   } else if (it != l->entries.end()) {
                     it->state = State::Failed;
                   }
                   if (--l->in_flight > 0) return;
                   auto best = l->best_live();
                   l->improved = best && (!l->best_before || *best < *l->best_before);
                   lookup_round(l);
                 });
  }
}

void Dht::finish_lookup(const std::shared_ptr<Lookup>& l) {
  LookupResult result;
  result.rounds = l->rounds;
  result.queried = l->queried;
  result.responded = l->responded;
  for (const auto& e : l->entries) {
    if (e.state != Lookup::State::Responded) continue;
    result.closest.push_back(e.contact);
    if (result.closest.size() == params_.k) break;
  }
  stats_.push_back({l->target, l->rounds});
  auto done = std::move(l->done);
  done(std::move(result));
}

void Dht::find_node(const NodeId& target, Callback<LookupResult> done) {
  run_lookup(target, FindNode{target}, {}, std::move(done));
}

std::vector<Contact> Dht::storage_targets(const NodeId& key, const std::vector<Contact>& found) const {
  auto all = found;
  all.push_back(self());
  sort_by_distance(all, key);
  if (all.size() > params_.k) all.resize(params_.k);
  return all;
}

void Dht::provide(const Cid& key, Callback<std::size_t> done) {
  provided_.insert(key);
  schedule_republish();
  auto coord = NodeId::from_cid(key);
  std::weak_ptr<bool> alive = alive_;
  auto store_on = [this, alive, key, done](std::vector<Contact> targets) {
    auto stored = std::make_shared<std::size_t>(0);
    auto remaining = std::make_shared<std::size_t>(targets.size());
    for (const auto& t : targets) {
      if (t.id == rpc_.self_id()) {
        add_local_provider({key, t.id, t.address, rt_.now_ms() + params_.provider_ttl_ms});
        ++*stored;
        if (--*remaining == 0) done(*stored);
        continue;
      }
      rpc_.request(t.address, AddProvider{key}, params_.rpc_timeout_ms,
                   [alive, stored, remaining, done](std::optional<Message> reply) {
                     if (alive.expired()) return;
                     if (reply) {
                       if (auto* a = std::get_if<Ack>(&reply->body); a && !a->error) ++*stored;
                     }
                     if (--*remaining == 0) done(*stored);
                   });
    }
  };
  if (table_.size() == 0) {
    store_on({self()});
    return;
  }
  find_node(coord, [this, alive, coord, store_on, done](Outcome<LookupResult> r) {
    if (alive.expired()) return;
    store_on(storage_targets(coord, r ? r->closest : std::vector<Contact>{}));
  });
}

void Dht::find_providers(const Cid& key, Callback<std::vector<ProviderRecord>> done) {
  auto found = std::make_shared<std::vector<ProviderRecord>>(local_providers(key));
  if (table_.size() == 0) {
    done(*found);
    return;
  }
  auto hook = [this, found, key](const Message& m) {
    auto* p = std::get_if<Providers>(&m.body);
    if (!p) return;
    for (auto rec : p->providers) {
      rec.key = key;
      if (rec.expires_at <= rt_.now_ms()) continue;
      bool dup = std::any_of(found->begin(), found->end(),
                             [&](const ProviderRecord& x) { return x.provider == rec.provider; });
      if (!dup) found->push_back(rec);
    }
  };
  run_lookup(NodeId::from_cid(key), FindProviders{key}, hook,
             [found, done](Outcome<LookupResult>) { done(*found); });
}

void Dht::store_record(const NodeId& key, Bytes value, Callback<std::size_t> done) {
  if (value.size() > kMaxRecordValue) {
    done(Error(Errc::ValueTooLarge, "record value exceeds 4 KiB"));
    return;
  }
  if (validator_ && !validator_->valid(key, value)) {
    done(Error(Errc::Rejected, "record failed validation"));
    return;
  }
  std::weak_ptr<bool> alive = alive_;
  auto store_on = [this, alive, key, value, done](std::vector<Contact> targets) {
    auto stored = std::make_shared<std::size_t>(0);
    auto remaining = std::make_shared<std::size_t>(targets.size());
    for (const auto& t : targets) {
      if (t.id == rpc_.self_id()) {
        if (store_local_record(key, value)) ++*stored;
        if (--*remaining == 0) done(*stored);
        continue;
      }
      rpc_.request(t.address, Store{key, value}, params_.rpc_timeout_ms,
                   [alive, stored, remaining, done](std::optional<Message> reply) {
                     if (alive.expired()) return;
                     if (reply) {
                       if (auto* a = std::get_if<Ack>(&reply->body); a && !a->error) ++*stored;
                     }
                     if (--*remaining == 0) done(*stored);
                   });
    }
  };
  if (table_.size() == 0) {
    store_on({self()});
    return;
  }
  find_node(key, [this, alive, key, store_on](Outcome<LookupResult> r) {
    if (alive.expired()) return;
    store_on(storage_targets(key, r ? r->closest : std::vector<Contact>{}));
  });
}

void Dht::get_values(const NodeId& key, Callback<std::vector<Bytes>> done) {
  auto values = std::make_shared<std::vector<Bytes>>();
  if (auto v = local_record(key)) values->push_back(*v);
  if (table_.size() == 0) {
    done(*values);
    return;
  }
  auto hook = [values](const Message& m) {
    auto* v = std::get_if<Value>(&m.body);
    if (!v) return;
    for (const auto& val : v->values) {
      if (std::find(values->begin(), values->end(), val) == values->end()) values->push_back(val);
    }
  };
  run_lookup(key, Get{key}, hook, [values, done](Outcome<LookupResult> r) {
    if (values->empty() && r && r->queried > 0 && r->responded == 0) {
      done(Error(Errc::Timeout, "no peer answered the record lookup"));
      return;
    }
    done(*values);
  });
}

void Dht::get_record(const NodeId& key, Callback<Bytes> done) {
  get_values(key, [this, key, done](Outcome<std::vector<Bytes>> r) {
    if (!r) {
      done(r.error());
      return;
    }
    std::optional<Bytes> best;
    std::uint64_t best_seq = 0;
    for (const auto& v : *r) {
      if (validator_ && !validator_->valid(key, v)) continue;
      auto seq = validator_ ? validator_->sequence(v) : 0;
      if (!best || seq > best_seq) {
        best = v;
        best_seq = seq;
      }
    }
    if (!best) {
      done(Error(Errc::NotFound, "no record stored under key"));
      return;
    }
    done(*best);
  });
}

// ---------------------------------------------------------------------------

std::vector<ProviderRecord> Dht::local_providers(const Cid& key) const {
  std::vector<ProviderRecord> out;
  auto it = providers_.find(NodeId::from_cid(key));
  if (it == providers_.end()) return out;
  auto now = rt_.now_ms();
  for (const auto& [id, rec] : it->second) {
    if (rec.expires_at > now) out.push_back(rec);
  }
  return out;
}

void Dht::add_local_provider(const ProviderRecord& r) {
  auto& slot = providers_[NodeId::from_cid(r.key)];
  auto now = rt_.now_ms();
  for (auto it = slot.begin(); it != slot.end();) {
    it = it->second.expires_at <= now ? slot.erase(it) : std::next(it);
  }
  slot[r.provider] = r;
}

std::optional<Bytes> Dht::local_record(const NodeId& key) const {
  auto it = records_.find(key);
  if (it == records_.end() || it->second.expires_at <= rt_.now_ms()) return std::nullopt;
  return it->second.value;
}

bool Dht::store_local_record(const NodeId& key, Bytes value) {
  if (value.size() > kMaxRecordValue) return false;
  if (validator_ && !validator_->valid(key, value)) return false;
  auto it = records_.find(key);
  auto expires = rt_.now_ms() + params_.record_ttl_ms;
  if (it != records_.end() && it->second.expires_at > rt_.now_ms() && validator_ &&
      validator_->sequence(it->second.value) > validator_->sequence(value)) {
    return true;  // keep the newer record; the store itself succeeded
  }
  records_[key] = {std::move(value), expires};
  return true;
}

void Dht::schedule_republish() {
  if (params_.republish_ms == 0 || republish_timer_) return;
  republish_timer_ = rt_.schedule(params_.republish_ms, [this] {
    republish_timer_.reset();
    for (const auto& key : std::vector<Cid>(provided_.begin(), provided_.end())) {
      provide(key, [](Outcome<std::size_t>) {});
    }
  });
}

}  // namespace cafs
