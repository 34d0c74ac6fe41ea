#include "cafs/rpc.hpp"

namespace cafs {

Rpc::Rpc(Runtime& rt, NodeId self, std::string self_addr) : rt_(rt), self_(self), addr_(std::move(self_addr)) {}

Rpc::~Rpc() {
  for (auto& [id, p] : pending_) rt_.cancel(p.timer);
}

bool Rpc::is_response(wire::MsgType t) {
  using wire::MsgType;
  switch (t) {
    case MsgType::Pong:
    case MsgType::Nodes:
    case MsgType::Providers:
    case MsgType::Ack:
    case MsgType::Value:
    case MsgType::Block:
    case MsgType::DontHave:
    case MsgType::Submitted:
    case MsgType::ChainBlocks:
      return true;
    default:
      return false;
  }
}

void Rpc::send(const std::string& to, std::uint64_t request_id, wire::Body body) {
  wire::Message m{request_id, self_, addr_, std::move(body)};
  ++sent_;
  rt_.send(to, wire::encode_frame(m));
}

void Rpc::request(const std::string& to, wire::Body body, std::uint64_t timeout_ms, Reply on_reply) {
  auto id = next_id_++;
  auto timer = rt_.schedule(timeout_ms, [this, id] {
    auto it = pending_.find(id);
    if (it == pending_.end()) return;
    auto cb = std::move(it->second.on_reply);
    pending_.erase(it);
    cb(std::nullopt);
  });
  pending_.emplace(id, Pending{std::move(on_reply), timer});
  send(to, id, std::move(body));
}

void Rpc::reply(const wire::Message& req, wire::Body body) { send(req.sender_addr, req.request_id, std::move(body)); }

bool Rpc::dispatch_response(const wire::Message& m) {
  if (!is_response(m.type())) return false;
  auto it = pending_.find(m.request_id);
  if (it == pending_.end()) return true;  // late or unsolicited; dropped
  rt_.cancel(it->second.timer);
  auto cb = std::move(it->second.on_reply);
  pending_.erase(it);
  cb(m);
  return true;
}

}  // namespace cafs
