#pragma once

#include <functional>
#include <map>
#include <optional>

#include "cafs/runtime.hpp"
#include "cafs/wire.hpp"

namespace cafs {

/// Request/response correlation over the fire-and-forget transport.
/// A reply is matched by request id; a missing reply completes with
/// nullopt after the timeout.
class Rpc {
 public:
  using Reply = std::function<void(std::optional<wire::Message>)>;

  Rpc(Runtime& rt, NodeId self, std::string self_addr);
  ~Rpc();
  Rpc(const Rpc&) = delete;
  Rpc& operator=(const Rpc&) = delete;

  void request(const std::string& to, wire::Body body, std::uint64_t timeout_ms, Reply on_reply);
  void reply(const wire::Message& req, wire::Body body);
  void send(const std::string& to, std::uint64_t request_id, wire::Body body);

  // True when m answered an outstanding request (and was consumed).
  bool dispatch_response(const wire::Message& m);

  const NodeId& self_id() const { return self_; }
  const std::string& self_addr() const { return addr_; }
  Runtime& runtime() { return rt_; }
  std::uint64_t messages_sent() const { return sent_; }

  static bool is_response(wire::MsgType t);

 private:
  struct Pending {
    Reply on_reply;
    TimerId timer;
  };

  Runtime& rt_;
  NodeId self_;
  std::string addr_;
  std::uint64_t next_id_ = 1;
  std::uint64_t sent_ = 0;
  std::map<std::uint64_t, Pending> pending_;
};

}  // namespace cafs
