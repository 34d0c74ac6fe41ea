#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cafs/kademlia.hpp"

namespace cafs::wire {

inline constexpr std::size_t kMaxFrame = 16u << 20;
inline constexpr std::size_t kMaxRecordValue = 4096;

enum class MsgType : std::uint8_t {
  Ping = 0x01,
  Pong = 0x02,
  FindNode = 0x03,
  Nodes = 0x04,
  FindProviders = 0x05,
  Providers = 0x06,
  AddProvider = 0x07,
  Ack = 0x08,
  Store = 0x09,
  Get = 0x0a,
  Value = 0x0b,
  Want = 0x20,
  Block = 0x21,
  DontHave = 0x22,
  SubmitEntry = 0x30,
  Submitted = 0x31,
  GetChain = 0x32,
  ChainBlocks = 0x33,
};

struct Ping {};
struct Pong {};
struct FindNode { NodeId target; };
struct Nodes { std::vector<Contact> contacts; };
struct FindProviders { Cid key; };
struct Providers {
  std::vector<ProviderRecord> providers;  // key field is implied by the request
  std::vector<Contact> closer;
};
struct AddProvider { Cid key; };
struct Ack {
  std::optional<Errc> error;
  std::string detail;
};
struct Store {
  NodeId key;
  Bytes value;
};
struct Get { NodeId key; };
struct Value {
  std::vector<Bytes> values;
  std::vector<Contact> closer;
};
struct Want { std::vector<Cid> cids; };
struct Block {
  Cid cid;
  Bytes data;
};
struct DontHave { Cid cid; };
struct SubmitEntry { Bytes entry; };
struct Submitted {
  std::optional<Errc> error;
  std::uint64_t height = 0;
  std::string detail;
};
struct GetChain { std::uint64_t from_height = 0; };
struct ChainBlocks {
  std::uint64_t chain_length = 0;
  std::vector<Bytes> blocks;
};

using Body = std::variant<Ping, Pong, FindNode, Nodes, FindProviders, Providers, AddProvider, Ack, Store,
                          Get, Value, Want, Block, DontHave, SubmitEntry, Submitted, GetChain, ChainBlocks>;

/// Frame: u32 length | u8 type | u64 request_id | sender id (32) |
/// str16 sender address | body. Integers big-endian, CIDs in 34-byte form.
struct Message {
  std::uint64_t request_id = 0;
  NodeId sender;
  std::string sender_addr;
  Body body;

  MsgType type() const;
};

MsgType type_of(const Body& body);
const char* type_name(MsgType t);

Bytes encode_frame(const Message& m);
// Decodes a frame including its 4-byte length prefix. Throws Error(Malformed).
Message decode_frame(ByteView frame);
// Length of the frame starting at data (prefix included), if complete.
std::optional<std::size_t> frame_length(ByteView data);

}  // namespace cafs::wire
