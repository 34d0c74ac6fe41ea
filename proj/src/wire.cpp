#include "cafs/wire.hpp"

namespace cafs::wire {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr MsgType kTypes[] = {
    MsgType::Ping,  MsgType::Pong,     MsgType::FindNode, MsgType::Nodes,       MsgType::FindProviders,
    MsgType::Providers, MsgType::AddProvider, MsgType::Ack, MsgType::Store,     MsgType::Get,
    MsgType::Value, MsgType::Want,     MsgType::Block,    MsgType::DontHave,    MsgType::SubmitEntry,
    MsgType::Submitted, MsgType::GetChain, MsgType::ChainBlocks,
};
static_assert(std::size(kTypes) == std::variant_size_v<Body>);

void put_contacts(Writer& w, const std::vector<Contact>& cs) {
  w.u16(static_cast<std::uint16_t>(cs.size()));
  for (const auto& c : cs) {
    w.raw(c.id.bytes);
    w.str16(c.address);
  }
}

std::vector<Contact> get_contacts(Reader& r) {
  std::vector<Contact> out(r.u16());
  for (auto& c : out) {
    c.id.bytes = r.fixed<32>();
    c.address = r.str16(255);
  }
  return out;
}

void put_error(Writer& w, const std::optional<Errc>& e) { w.u8(e ? static_cast<std::uint8_t>(*e) + 1 : 0); }

std::optional<Errc> get_error(Reader& r) {
  auto v = r.u8();
  if (v == 0) return std::nullopt;
  if (v - 1 > static_cast<int>(Errc::InvalidArgument)) throw Error(Errc::Malformed, "bad error code");
  return static_cast<Errc>(v - 1);
}

Cid get_cid(Reader& r) {
  try {
    return Cid::from_binary(r.raw(Cid::kBinarySize));
  } catch (const Error& e) {
    throw Error(Errc::Malformed, e.what());
  }
}

void encode_body(Writer& w, const Body& body) {
  std::visit(overloaded{
                 [](const Ping&) {},
                 [](const Pong&) {},
                 [&](const FindNode& b) { w.raw(b.target.bytes); },
                 [&](const Nodes& b) { put_contacts(w, b.contacts); },
                 [&](const FindProviders& b) { w.raw(b.key.binary()); },
                 [&](const Providers& b) {
                   w.u16(static_cast<std::uint16_t>(b.providers.size()));
                   for (const auto& p : b.providers) {
                     w.raw(p.provider.bytes);
                     w.str16(p.address);
                     w.u64(p.expires_at);
                   }
                   put_contacts(w, b.closer);
                 },
                 [&](const AddProvider& b) { w.raw(b.key.binary()); },
                 [&](const Ack& b) {
                   put_error(w, b.error);
                   w.str16(b.detail);
                 },
                 [&](const Store& b) {
                   w.raw(b.key.bytes);
                   w.bytes32(b.value);
                 },
                 [&](const Get& b) { w.raw(b.key.bytes); },
                 [&](const Value& b) {
                   w.u16(static_cast<std::uint16_t>(b.values.size()));
                   for (const auto& v : b.values) w.bytes32(v);
                   put_contacts(w, b.closer);
                 },
                 [&](const Want& b) {
                   w.u16(static_cast<std::uint16_t>(b.cids.size()));
                   for (const auto& c : b.cids) w.raw(c.binary());
                 },
                 [&](const Block& b) {
                   w.raw(b.cid.binary());
                   w.bytes32(b.data);
                 },
                 [&](const DontHave& b) { w.raw(b.cid.binary()); },
                 [&](const SubmitEntry& b) { w.bytes32(b.entry); },
                 [&](const Submitted& b) {
                   put_error(w, b.error);
                   w.u64(b.height);
                   w.str16(b.detail);
                 },
                 [&](const GetChain& b) { w.u64(b.from_height); },
                 [&](const ChainBlocks& b) {
                   w.u64(b.chain_length);
                   w.u32(static_cast<std::uint32_t>(b.blocks.size()));
                   for (const auto& blk : b.blocks) w.bytes32(blk);
                 },
             },
             body);
}

Body decode_body(MsgType type, Reader& r) {
  switch (type) {
    case MsgType::Ping: return Ping{};
    case MsgType::Pong: return Pong{};
    case MsgType::FindNode: return FindNode{{r.fixed<32>()}};
    case MsgType::Nodes: return Nodes{get_contacts(r)};
    case MsgType::FindProviders: return FindProviders{get_cid(r)};
    case MsgType::Providers: {
      Providers b;
      b.providers.resize(r.u16());
      for (auto& p : b.providers) {
        p.provider.bytes = r.fixed<32>();
        p.address = r.str16(255);
        p.expires_at = r.u64();
      }
      b.closer = get_contacts(r);
      return b;
    }
    case MsgType::AddProvider: return AddProvider{get_cid(r)};
    case MsgType::Ack: {
      Ack b;
      b.error = get_error(r);
      b.detail = r.str16();
      return b;
    }
    case MsgType::Store: {
      Store b;
      b.key.bytes = r.fixed<32>();
      b.value = r.bytes32(kMaxFrame);
      return b;
    }
    case MsgType::Get: return Get{{r.fixed<32>()}};
    case MsgType::Value: {
      Value b;
      auto n = r.u16();
      for (int i = 0; i < n; ++i) b.values.push_back(r.bytes32(kMaxFrame));
      b.closer = get_contacts(r);
      return b;
    }
    case MsgType::Want: {
      Want b;
      auto n = r.u16();
      for (int i = 0; i < n; ++i) b.cids.push_back(get_cid(r));
      return b;
    }
    case MsgType::Block: {
      Block b;
      b.cid = get_cid(r);
      b.data = r.bytes32(kMaxFrame);
      return b;
    }
    case MsgType::DontHave: return DontHave{get_cid(r)};
    case MsgType::SubmitEntry: return SubmitEntry{r.bytes32(kMaxFrame)};
    case MsgType::Submitted: {
      Submitted b;
      b.error = get_error(r);
      b.height = r.u64();
      b.detail = r.str16();
      return b;
    }
    case MsgType::GetChain: return GetChain{r.u64()};
    case MsgType::ChainBlocks: {
      ChainBlocks b;
      b.chain_length = r.u64();
      auto n = r.u32();
      if (n > r.remaining() / 4) throw Error(Errc::Malformed, "bad block count");
      for (std::uint32_t i = 0; i < n; ++i) b.blocks.push_back(r.bytes32(kMaxFrame));
      return b;
    }
  }
  throw Error(Errc::Malformed, "unknown message type");
}

}  // namespace

MsgType type_of(const Body& body) { return kTypes[body.index()]; }

MsgType Message::type() const { return type_of(body); }

const char* type_name(MsgType t) {
  switch (t) {
    case MsgType::Ping: return "PING";
    case MsgType::Pong: return "PONG";
    case MsgType::FindNode: return "FIND_NODE";
    case MsgType::Nodes: return "NODES";
    case MsgType::FindProviders: return "FIND_PROVIDERS";
    case MsgType::Providers: return "PROVIDERS";
    case MsgType::AddProvider: return "ADD_PROVIDER";
    case MsgType::Ack: return "ACK";
    case MsgType::Store: return "STORE";
    case MsgType::Get: return "GET";
    case MsgType::Value: return "VALUE";
    case MsgType::Want: return "WANT";
    case MsgType::Block: return "BLOCK";
    case MsgType::DontHave: return "DONT_HAVE";
    case MsgType::SubmitEntry: return "SUBMIT_ENTRY";
    case MsgType::Submitted: return "SUBMITTED";
    case MsgType::GetChain: return "GET_CHAIN";
    case MsgType::ChainBlocks: return "CHAIN_BLOCKS";
  }
  return "UNKNOWN";
}

Bytes encode_frame(const Message& m) {
  Writer w;
  w.u32(0);
  w.u8(static_cast<std::uint8_t>(m.type()));
  w.u64(m.request_id);
  w.raw(m.sender.bytes);
  w.str16(m.sender_addr);
  encode_body(w, m.body);
  auto out = w.take();
  auto len = out.size() - 4;
  if (len > kMaxFrame) throw Error(Errc::InvalidArgument, "frame too large");
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (24 - 8 * i));
  return out;
}

Message decode_frame(ByteView frame) {
  Reader r(frame);
  auto len = r.u32();
  if (len != r.remaining()) throw Error(Errc::Malformed, "frame length mismatch");
  auto raw_type = r.u8();
  bool known = false;
  for (auto t : kTypes) known = known || static_cast<std::uint8_t>(t) == raw_type;
  if (!known) throw Error(Errc::Malformed, "unknown message type");
  Message m;
  m.request_id = r.u64();
  m.sender.bytes = r.fixed<32>();
  m.sender_addr = r.str16(255);
  m.body = decode_body(static_cast<MsgType>(raw_type), r);
  r.expect_done();
  return m;
}

std::optional<std::size_t> frame_length(ByteView data) {
  if (data.size() < 4) return std::nullopt;
  std::size_t len = static_cast<std::size_t>(data[0]) << 24 | static_cast<std::size_t>(data[1]) << 16 |
                    static_cast<std::size_t>(data[2]) << 8 | data[3];
  if (len > kMaxFrame) throw Error(Errc::Malformed, "frame exceeds maximum size");
  if (data.size() < len + 4) return std::nullopt;
  return len + 4;
}

}  // namespace cafs::wire
