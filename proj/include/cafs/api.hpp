#pragma once

#include <filesystem>
#include <functional>

#include "cafs/node.hpp"
#include "json.hpp"

namespace cafs {

using Json = nlohmann::json;

// Everything the local client API needs besides the node itself.
struct ApiContext {
  Node& node;
  std::filesystem::path data_dir;
  std::filesystem::path chain_file;
  unsigned difficulty = 12;
};

// Requests: {"op": ..., ...}. Replies carry "ok"; failures add "error"
// (an Errc name) and "message". `reply` may run after this returns.
void handle_api_request(ApiContext& ctx, const Json& request, std::function<void(Json)> reply);

Json report_to_json(const VerifyReport& r);
Json entry_to_json(const LedgerHit& hit);
Json error_to_json(const Error& e);

// name -> key pairs from <data_dir>/petnames.txt ("name key" per line).
std::map<std::string, std::string> load_petnames(const std::filesystem::path& data_dir);
void load_name_sequences(const std::filesystem::path& data_dir, std::map<NodeId, std::uint64_t>& out);
void save_name_sequences(const std::filesystem::path& data_dir, const std::map<NodeId, std::uint64_t>& seqs);

}  // namespace cafs
