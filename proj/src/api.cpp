#include "cafs/api.hpp"

#include <fstream>
#include <sstream>

namespace cafs {

Json error_to_json(const Error& e) {
  return {{"ok", false}, {"error", errc_name(e.code())}, {"message", e.what()}};
}

Json entry_to_json(const LedgerHit& hit) {
  const auto& e = hit.entry;
  Json j{{"height", hit.height},
         {"index", hit.index},
         {"cid", e.file_cid.text()},
         {"created", e.created_at},
         {"accessed", e.accessed_at},
         {"accessed_date", format_date(e.accessed_at)},
         {"accessed_time", format_time(e.accessed_at)},
         {"size", e.size_bytes},
         {"type", e.file_type},
         {"author", e.author},
         {"modified_cid", nullptr}};
  if (e.modified_cid) j["modified_cid"] = e.modified_cid->text();
  return j;
}

Json report_to_json(const VerifyReport& r) {
  Json entries = Json::array();
  for (const auto& h : r.ledger_entries) entries.push_back(entry_to_json(h));
  return {{"cid", r.cid.text()},
          {"status", verify_status_name(r.status)},
          {"detail", r.detail},
          {"recomputed_cid", r.recomputed_cid.text()},
          {"size", r.size_bytes},
          {"ledger_entries", entries}};
}

std::map<std::string, std::string> load_petnames(const std::filesystem::path& data_dir) {
  std::map<std::string, std::string> out;
  std::ifstream in(data_dir / "petnames.txt");
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string name, key;
    if (ss >> name >> key && name[0] != '#') out[name] = key;
  }
  return out;
}

void load_name_sequences(const std::filesystem::path& data_dir, std::map<NodeId, std::uint64_t>& out) {
  std::ifstream in(data_dir / "names.json");
  if (!in) return;
  auto j = Json::parse(in, nullptr, false);
  if (!j.is_object()) throw Error(Errc::Malformed, "names.json is not a JSON object");
  for (const auto& [key, seq] : j.items()) out[NodeId::from_text(key)] = seq.get<std::uint64_t>();
}

void save_name_sequences(const std::filesystem::path& data_dir, const std::map<NodeId, std::uint64_t>& seqs) {
  Json j = Json::object();
  for (const auto& [key, seq] : seqs) j[key.text()] = seq;
  auto tmp = data_dir / "names.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << j.dump(2) << "\n";
    if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, data_dir / "names.json");
}

namespace {

Cid cid_field(const Json& req) {
  if (!req.contains("cid") || !req["cid"].is_string()) throw Error(Errc::InvalidArgument, "missing \"cid\"");
  return Cid::from_text(req["cid"].get<std::string>());
}

NodeId resolve_key(ApiContext& ctx, const std::string& key) {
  if (key == "self") return ctx.node.id();
  auto pets = load_petnames(ctx.data_dir);
  if (auto it = pets.find(key); it != pets.end()) return NodeId::from_text(it->second);
  try {
    return NodeId::from_text(key);
  } catch (const Error&) {
    throw Error(Errc::NotFound, "'" + key + "' is neither a name key nor a petname");
  }
}

Json record_to_json(const NameRecord& r) {
  return {{"ok", true},
          {"key", r.name_key.text()},
          {"cid", r.value.text()},
          {"sequence", r.sequence},
          {"validity", r.validity}};
}

template <typename T>
Callback<T> guarded(std::function<void(Json)> reply, std::function<Json(T&)> ok) {
  return [reply = std::move(reply), ok = std::move(ok)](Outcome<T> out) {
    if (!out) {
      reply(error_to_json(out.error()));
      return;
    }
    try {
      reply(ok(*out));
    } catch (const Error& e) {
      reply(error_to_json(e));
    }
  };
}

void dispatch(ApiContext& ctx, const Json& req, std::function<void(Json)> reply) {
  if (!req.is_object() || !req.contains("op") || !req["op"].is_string()) {
    throw Error(Errc::InvalidArgument, "request needs an \"op\" string");
  }
  auto op = req["op"].get<std::string>();
  auto& node = ctx.node;

  if (op == "id") {
    reply({{"ok", true},
           {"node_id", node.id().text()},
           {"listen_addr", node.config().listen_addr},
           {"fingerprint", fingerprint(node.identity().public_key())},
           {"registrar", node.is_registrar()},
           {"ledger_length", node.chain().length()},
           {"routing_table", node.dht().table().size()}});
  } else if (op == "add") {
    if (!req.contains("data_b64") || !req["data_b64"].is_string()) {
      throw Error(Errc::InvalidArgument, "missing \"data_b64\"");
    }
    auto data = base64_decode(req["data_b64"].get<std::string>());
    auto name = req.value("name", std::string());
    node.add_with_metadata(std::move(data), name, guarded<Added>(reply, [](Added& a) {
                             return Json{{"ok", true}, {"cid", a.root.text()}, {"height", a.height}, {"size", a.size}};
                           }));
  } else if (op == "get") {
    node.get_with_verify(cid_field(req), guarded<Fetched>(reply, [](Fetched& f) {
                           return Json{{"ok", true},
                                       {"data_b64", base64_encode(f.data)},
                                       {"report", report_to_json(f.report)},
                                       {"blocks_fetched", f.fetch.blocks_fetched},
                                       {"invalid_blocks", f.fetch.invalid_blocks.size()}};
                         }));
  } else if (op == "verify") {
    node.verify(cid_field(req), guarded<VerifyReport>(reply, [](VerifyReport& r) {
                  return Json{{"ok", true}, {"report", report_to_json(r)}};
                }));
  } else if (op == "publish") {
    std::optional<std::uint64_t> validity;
    if (req.contains("validity_s")) validity = req["validity_s"].get<std::uint64_t>();
    auto data_dir = ctx.data_dir;
    Node* n = &node;
    node.publish(
        cid_field(req),
        guarded<NameRecord>(reply,
                            [data_dir, n](NameRecord& r) {
                              save_name_sequences(data_dir, n->name_sequences());
                              return record_to_json(r);
                            }),
        validity);
  } else if (op == "resolve") {
    if (!req.contains("key") || !req["key"].is_string()) throw Error(Errc::InvalidArgument, "missing \"key\"");
    node.resolve(resolve_key(ctx, req["key"].get<std::string>()),
                 guarded<NameRecord>(reply, [](NameRecord& r) { return record_to_json(r); }));
  } else if (op == "ledger_export") {
    Json entries = Json::array();
    const auto& blocks = node.chain().blocks();
    for (std::uint64_t h = 0; h < blocks.size(); ++h) {
      for (std::size_t i = 0; i < blocks[h].entries.size(); ++i) {
        entries.push_back(entry_to_json({h, i, blocks[h].entries[i]}));
      }
    }
    reply({{"ok", true}, {"length", blocks.size()}, {"entries", entries}});
  } else if (op == "ledger_validate") {
    // Re-read from disk so out-of-band edits to the chain file are caught.
    std::vector<LedgerBlock> blocks;
    try {
      blocks = read_chain_file(ctx.chain_file);
    } catch (const Error& e) {
      reply({{"ok", true}, {"valid", false}, {"length", 0}, {"detail", e.what()}});
      return;
    }
    Chain chain(std::move(blocks));
    auto v = validate_chain(chain, ctx.difficulty);
    Json out{{"ok", true}, {"valid", !v}, {"length", chain.length()}};
    if (v) out["violation"] = {{"height", v->height}, {"kind", violation_name(v->kind)}};
    reply(out);
  } else {
    throw Error(Errc::InvalidArgument, "unknown op '" + op + "'");
  }
}

}  // namespace

void handle_api_request(ApiContext& ctx, const Json& request, std::function<void(Json)> reply) {
  try {
    dispatch(ctx, request, reply);
  } catch (const Error& e) {
    reply(error_to_json(e));
  } catch (const Json::exception& e) {
    reply(error_to_json(Error(Errc::InvalidArgument, e.what())));
  }
}

}  // namespace cafs
