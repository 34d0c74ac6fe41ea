#include "cafs/node.hpp"

#include <algorithm>

namespace cafs {

using namespace wire;

namespace {
constexpr std::size_t kChainBatch = 128;
constexpr int kSubmitAttempts = 8;
}  // namespace

const char* verify_status_name(VerifyStatus s) {
  switch (s) {
    case VerifyStatus::Verified: return "Verified";
    case VerifyStatus::Tampered: return "Tampered";
    case VerifyStatus::UnknownToLedger: return "UnknownToLedger";
  }
  return "Unknown";
}

VerifyReport build_report(const Cid& requested, const Cid& recomputed, std::uint64_t size,
                          std::vector<LedgerHit> hits) {
  VerifyReport r;
  r.cid = requested;
  r.recomputed_cid = recomputed;
  r.size_bytes = size;
  r.ledger_entries = std::move(hits);

  std::vector<LedgerHit> describing;
  for (const auto& h : r.ledger_entries) {
    bool plain = !h.is_modification() && h.entry.file_cid == requested;
    bool produced = h.is_modification() && h.entry.modified_cid == requested;
    if (plain || produced) describing.push_back(h);
  }
  if (r.ledger_entries.empty()) {
    r.status = VerifyStatus::UnknownToLedger;
    r.detail = "no ledger entry references " + requested.text();
  } else if (describing.empty()) {
    r.status = VerifyStatus::UnknownToLedger;
    r.detail = "ledger only records " + requested.text() + " as the source of a modification";
  } else if (recomputed != requested) {
    r.status = VerifyStatus::Tampered;
    r.detail = "content hashes to " + recomputed.text();
  } else if (auto latest = latest_hit(describing); latest->entry.size_bytes != size) {
    r.status = VerifyStatus::Tampered;
    r.detail = "ledger records " + std::to_string(latest->entry.size_bytes) + " bytes, content has " +
               std::to_string(size);
  } else {
    r.status = VerifyStatus::Verified;
    r.detail = "matches ledger entry at height " + std::to_string(latest->height);
  }
  return r;
}

Node::Node(NodeConfig config, Keypair identity, Runtime& rt, BlockStore& store, Chain& chain, BlockHook on_block)
    : config_(std::move(config)),
      identity_(identity),
      id_(identity.node_id()),
      rt_(rt),
      store_(store),
      chain_(chain),
      on_block_(std::move(on_block)),
      rpc_(rt, id_, config_.listen_addr),
      dht_(rpc_, config_.dht, &validator_),
      exchange_(rpc_, store, config_.dag, config_.exchange) {
  if (config_.is_registrar) {
    writer_ = std::make_unique<LedgerWriter>(rt_, chain_, config_.ledger, [this](const LedgerBlock& b, std::uint64_t h) {
      if (on_block_) on_block_(b, h);
    });
  }
}

Node::~Node() { *alive_ = false; }

void Node::on_frame(ByteView frame) {
  ++frames_in_;
  Message m;
  try {
    m = decode_frame(frame);
  } catch (const Error&) {
    ++frames_bad_;
    return;
  }
  handle(m);
}

void Node::handle(const Message& m) {
  if (m.sender == id_) return;
  dht_.observe({m.sender, m.sender_addr, 0});
  if (rpc_.dispatch_response(m)) return;
  if (dht_.handle_request(m)) return;
  if (exchange_.handle_request(m)) return;
  handle_ledger_request(m);
}

void Node::handle_ledger_request(const Message& m) {
  if (auto* sub = std::get_if<SubmitEntry>(&m.body)) {
    if (!writer_) {
      rpc_.reply(m, Submitted{Errc::Rejected, 0, "not the registrar"});
      return;
    }
    MetadataEntry e;
    try {
      e = decode_entry(sub->entry);
    } catch (const Error& err) {
      rpc_.reply(m, Submitted{Errc::Malformed, 0, err.what()});
      return;
    }
    std::weak_ptr<bool> alive = alive_;
    writer_->append_entry(std::move(e), [this, alive, m](Outcome<std::uint64_t> r) {
      if (alive.expired()) return;
      if (r) {
        rpc_.reply(m, Submitted{std::nullopt, *r, ""});
      } else {
        rpc_.reply(m, Submitted{r.error().code(), 0, r.error().what()});
      }
    });
  } else if (auto* get = std::get_if<GetChain>(&m.body)) {
    ChainBlocks out;
    out.chain_length = chain_.length();
    for (auto h = get->from_height; h < chain_.length() && out.blocks.size() < kChainBatch; ++h) {
      out.blocks.push_back(encode_block(chain_.blocks()[h]));
    }
    rpc_.reply(m, std::move(out));
  }
}

// ---------------------------------------------------------------------------

void Node::join(Callback<Unit> done) {
  std::weak_ptr<bool> alive = alive_;
  dht_.bootstrap(config_.bootstrap, [this, alive, done](Outcome<Unit>) {
    if (alive.expired()) return;
    if (config_.is_registrar || config_.registrar_addr.empty()) {
      done(Unit{});
      return;
    }
    sync_ledger([done](Outcome<std::uint64_t> r) {
      if (!r && r.error().code() == Errc::LedgerValidationFailed) {
        done(r.error());
        return;
      }
      done(Unit{});
    });
  });
}

void Node::sync_ledger(Callback<std::uint64_t> done) {
  if (config_.is_registrar || config_.registrar_addr.empty()) {
    done(chain_.length());
    return;
  }
  std::weak_ptr<bool> alive = alive_;
  rpc_.request(config_.registrar_addr, GetChain{chain_.length()}, config_.dht.rpc_timeout_ms * 2,
               [this, alive, done](std::optional<Message> reply) {
                 if (alive.expired()) return;
                 ChainBlocks* cb = reply ? std::get_if<ChainBlocks>(&reply->body) : nullptr;
                 if (!cb) {
                   done(Error(Errc::Timeout, "registrar did not answer the chain request"));
                   return;
                 }
                 std::vector<LedgerBlock> blocks;
                 try {
                   for (const auto& raw : cb->blocks) blocks.push_back(decode_block(raw));
                 } catch (const Error& e) {
                   done(Error(Errc::LedgerValidationFailed, std::string("undecodable block: ") + e.what()));
                   return;
                 }
                 append_synced(std::move(blocks), cb->chain_length, done);
               });
}

void Node::append_synced(std::vector<LedgerBlock> blocks, std::uint64_t remote_length,
                         Callback<std::uint64_t> done) {
  const LedgerBlock* tip = chain_.empty() ? nullptr : &chain_.blocks().back();
  if (auto v = validate_blocks(blocks, config_.ledger.difficulty, tip, chain_.length())) {
    done(Error(Errc::LedgerValidationFailed, std::string("received chain invalid at height ") +
                                                 std::to_string(v->height) + ": " + violation_name(v->kind)));
    return;
  }
  for (auto& b : blocks) {
    auto h = chain_.length();
    chain_.append(std::move(b));
    if (on_block_) on_block_(chain_.blocks().back(), h);
  }
  if (!blocks.empty() && chain_.length() < remote_length) {
    sync_ledger(done);
    return;
  }
  done(chain_.length());
}

void Node::submit_entry(MetadataEntry e, Callback<std::uint64_t> done) {
  if (writer_) {
    writer_->append_entry(std::move(e), std::move(done));
    return;
  }
  if (config_.registrar_addr.empty()) {
    done(Error(Errc::NoPeers, "no registrar configured"));
    return;
  }
  std::weak_ptr<bool> alive = alive_;
  rpc_.request(config_.registrar_addr, SubmitEntry{encode_entry(e)}, config_.ledger_timeout_ms,
               [alive, done](std::optional<Message> reply) {
                 if (alive.expired()) return;
                 auto* s = reply ? std::get_if<Submitted>(&reply->body) : nullptr;
                 if (!s) {
                   done(Error(Errc::Timeout, "registrar did not confirm the entry"));
                 } else if (s->error) {
                   done(Error(*s->error, s->detail));
                 } else {
                   done(s->height);
                 }
               });
}

void Node::submit_with_retry(MetadataEntry e, int attempts_left, Callback<std::uint64_t> done) {
  std::weak_ptr<bool> alive = alive_;
  auto retry = e;
  submit_entry(std::move(e), [this, alive, retry, attempts_left, done](Outcome<std::uint64_t> r) mutable {
    if (alive.expired()) return;
    if (!r && r.error().code() == Errc::DuplicatePending && attempts_left > 1) {
      ++retry.accessed_at;
      submit_with_retry(std::move(retry), attempts_left - 1, done);
      return;
    }
    done(std::move(r));
  });
}

MetadataEntry Node::make_entry(const Cid& cid, std::uint64_t size, std::string_view name, ByteView head) {
  MetadataEntry e;
  e.file_cid = cid;
  e.created_at = rt_.now_s();
  e.accessed_at = e.created_at;
  for (const auto& h : chain_.lookup(cid)) {
    if (h.entry.file_cid == cid) e.accessed_at = std::max(e.accessed_at, h.entry.accessed_at + 1);
  }
  e.size_bytes = size;
  e.file_type = sniff_file_type(name, head.subspan(0, std::min<std::size_t>(head.size(), 16)));
  e.author = fingerprint(identity_.public_key());
  return e;
}

void Node::add_with_metadata(Bytes data, std::string name, Callback<Added> done) {
  AddResult added;
  try {
    added = add_file(data, store_, config_.dag);
  } catch (const Error& e) {
    done(e);
    return;
  }
  auto entry = make_entry(added.root, added.total_size, name, data);
  std::weak_ptr<bool> alive = alive_;
  dht_.provide(added.root, [this, alive, entry, added, done](Outcome<std::size_t>) {
    if (alive.expired()) return;
    submit_with_retry(entry, kSubmitAttempts, [this, alive, added, done](Outcome<std::uint64_t> h) {
      if (alive.expired()) return;
      if (!h) {
        done(h.error());
        return;
      }
      Added out{added.root, added.total_size, *h};
      sync_ledger([out, done](Outcome<std::uint64_t>) { done(out); });
    });
  });
}

void Node::record_modification(const Cid& old_root, Bytes data, std::string name, Callback<Added> done) {
  auto history = chain_.lookup(old_root);
  if (history.empty() && !store_.has(old_root)) {
    done(Error(Errc::NotFound, "unknown original " + old_root.text()));
    return;
  }
  AddResult added;
  try {
    added = add_file(data, store_, config_.dag);
  } catch (const Error& e) {
    done(e);
    return;
  }
  if (added.root == old_root) {
    done(Error(Errc::SameContent, "modified content is identical to " + old_root.text()));
    return;
  }
  auto entry = make_entry(added.root, added.total_size, name, data);
  entry.file_cid = old_root;
  entry.modified_cid = added.root;
  for (const auto& h : history) entry.created_at = std::min(entry.created_at, h.entry.created_at);
  for (const auto& h : history) {
    if (h.entry.file_cid == old_root) entry.accessed_at = std::max(entry.accessed_at, h.entry.accessed_at + 1);
  }
  std::weak_ptr<bool> alive = alive_;
  dht_.provide(added.root, [this, alive, entry, added, done](Outcome<std::size_t>) {
    if (alive.expired()) return;
    submit_with_retry(entry, kSubmitAttempts, [this, alive, added, done](Outcome<std::uint64_t> h) {
      if (alive.expired()) return;
      if (!h) {
        done(h.error());
        return;
      }
      Added out{added.root, added.total_size, *h};
      sync_ledger([out, done](Outcome<std::uint64_t>) { done(out); });
    });
  });
}

void Node::get_with_verify(const Cid& root, Callback<Fetched> done) {
  std::vector<Cid> missing;
  try {
    missing = missing_blocks(root, store_);
  } catch (const Error& e) {
    done(e);
    return;
  }
  if (missing.empty()) {
    finish_get(root, {}, std::move(done));
    return;
  }
  fetch_and_verify(root, std::move(done));
}

void Node::fetch_and_verify(const Cid& root, Callback<Fetched> done) {
  std::weak_ptr<bool> alive = alive_;
  dht_.find_providers(root, [this, alive, root, done](Outcome<std::vector<ProviderRecord>> r) {
    if (alive.expired()) return;
    if (!r) {
      done(r.error());
      return;
    }
    std::vector<Contact> providers;
    for (const auto& p : *r) {
      if (p.provider != id_) providers.push_back({p.provider, p.address, 0});
    }
    exchange_.fetch_dag(root, std::move(providers), [this, alive, root, done](Outcome<FetchReport> f) {
      if (alive.expired()) return;
      if (!f) {
        done(f.error());
        return;
      }
      finish_get(root, *f, done);
    });
  });
}

void Node::finish_get(const Cid& root, FetchReport fetch, Callback<Fetched> done) {
  Bytes data;
  try {
    data = cat_file(root, store_);
  } catch (const Error& e) {
    done(e);
    return;
  }
  auto recomputed = compute_root(data, config_.dag);
  if (config_.provide_fetched && fetch.blocks_fetched > 0) dht_.provide(root, [](Outcome<std::size_t>) {});
  std::weak_ptr<bool> alive = alive_;
  auto shared = std::make_shared<Bytes>(std::move(data));
  sync_ledger([this, alive, root, recomputed, shared, fetch, done](Outcome<std::uint64_t> synced) {
    if (alive.expired()) return;
    auto report = build_report(root, recomputed, shared->size(), chain_.lookup(root));
    if (!synced) report.detail += " (ledger sync failed: " + std::string(synced.error().what()) + ")";
    done(Fetched{std::move(*shared), std::move(report), fetch});
  });
}

void Node::verify(const Cid& root, Callback<VerifyReport> done) {
  get_with_verify(root, [done](Outcome<Fetched> r) {
    if (!r) {
      done(r.error());
      return;
    }
    done(std::move(r->report));
  });
}

// ---------------------------------------------------------------------------

void Node::publish(const Cid& value, Callback<NameRecord> done, std::optional<std::uint64_t> validity_s) {
  auto it = name_seq_.find(id_);
  std::uint64_t seq = it == name_seq_.end() ? 0 : it->second + 1;
  auto record = sign_record(identity_, value, seq, rt_.now_s() + validity_s.value_or(config_.name_validity_s));
  std::weak_ptr<bool> alive = alive_;
  dht_.store_record(id_, encode_record(record), [this, alive, record, done](Outcome<std::size_t> r) {
    if (alive.expired()) return;
    if (!r) {
      done(r.error());
      return;
    }
    if (*r == 0) {
      done(Error(Errc::Timeout, "no node accepted the name record"));
      return;
    }
    name_seq_[id_] = record.sequence;
    resolved_[id_] = record;
    done(record);
  });
}

void Node::resolve(const NodeId& name_key, Callback<NameRecord> done) {
  std::weak_ptr<bool> alive = alive_;
  dht_.get_values(name_key, [this, alive, name_key, done](Outcome<std::vector<Bytes>> values) {
    if (alive.expired()) return;
    auto now = rt_.now_s();
    auto cached = resolved_.find(name_key);
    bool cache_valid = cached != resolved_.end() && cached->second.validity > now;
    if (!values) {
      if (cache_valid) {
        done(cached->second);
      } else {
        done(values.error());
      }
      return;
    }
    auto picked = select_record(name_key, *values, now);
    if (!picked) {
      if (cache_valid) {
        done(cached->second);
      } else {
        done(picked.error());
      }
      return;
    }
    if (cache_valid && cached->second.sequence > picked->sequence) {
      done(cached->second);
      return;
    }
    resolved_[name_key] = *picked;
    done(*picked);
  });
}

}  // namespace cafs
