#include "doctest.h"
#include "support.hpp"

#include "cafs/ledger.hpp"
#include "cafs/wire.hpp"

using namespace cafs;
using namespace cafs::wire;

namespace {

NodeId id_of(std::uint8_t b) {
  NodeId n;
  n.bytes.fill(b);
  return n;
}

std::vector<Body> samples() {
  auto cid = Cid::of(to_bytes("block"));
  std::vector<Contact> contacts{{id_of(1), "127.0.0.1:4001", 0}, {id_of(2), "sim:7", 0}};
  MetadataEntry e;
  e.file_cid = cid;
  e.author = "me";
  LedgerBlock blk;
  blk.entries = {e};
  return {
      Ping{},
      Pong{},
      FindNode{id_of(9)},
      Nodes{contacts},
      FindProviders{cid},
      Providers{{{cid, id_of(3), "sim:3", 123456}}, contacts},
      AddProvider{cid},
      Ack{std::nullopt, ""},
      Ack{Errc::ValueTooLarge, "too big"},
      Store{id_of(4), to_bytes("record")},
      Get{id_of(4)},
      Value{{to_bytes("a"), to_bytes("bb")}, contacts},
      Want{{cid, Cid::of({})}},
      Block{cid, to_bytes("block")},
      DontHave{cid},
      SubmitEntry{encode_entry(e)},
      Submitted{Errc::DuplicatePending, 0, "dup"},
      Submitted{std::nullopt, 17, ""},
      GetChain{3},
      ChainBlocks{9, {encode_block(blk)}},
  };
}

}  // namespace

TEST_SUITE("wire") {
  TEST_CASE("every message type round trips") {
    std::uint64_t rid = 1;
    for (auto& body : samples()) {
      Message m{rid++, id_of(0xee), "sim:42", body};
      auto frame = encode_frame(m);
      CHECK(frame_length(frame) == frame.size());
      auto back = decode_frame(frame);
      CHECK(back.request_id == m.request_id);
      CHECK(back.sender == m.sender);
      CHECK(back.sender_addr == m.sender_addr);
      CHECK(back.type() == m.type());
      CHECK(encode_frame(back) == frame);
    }
  }

  TEST_CASE("truncated or padded frames are rejected") {
    for (auto& body : samples()) {
      auto frame = encode_frame({1, id_of(1), "x", body});
      for (std::size_t cut = 0; cut < frame.size(); cut += 7) {
        CHECK_THROWS_AS(decode_frame(ByteView(frame).first(cut)), Error);
      }
      auto padded = frame;
      padded.push_back(0);
      CHECK_THROWS_AS(decode_frame(padded), Error);
    }
  }

  TEST_CASE("unknown type and oversized length") {
    auto frame = encode_frame({1, id_of(1), "x", Ping{}});
    frame[4] = 0x7f;
    CHECK_THROWS_AS(decode_frame(frame), Error);
    Bytes huge{0x10, 0x00, 0x00, 0x01};
    CHECK_THROWS_AS(frame_length(huge), Error);
    CHECK_FALSE(frame_length(Bytes{0, 0}).has_value());
  }

  TEST_CASE("random bytes never crash the decoder") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 2000; ++i) {
      auto junk = test::random_bytes(rng, rng() % 120);
      if (junk.size() >= 5) {
        auto len = junk.size() - 4;
        junk[0] = 0;
        junk[1] = 0;
        junk[2] = static_cast<std::uint8_t>(len >> 8);
        junk[3] = static_cast<std::uint8_t>(len);
        junk[4] = static_cast<std::uint8_t>(1 + rng() % 0x33);
      }
      try {
        decode_frame(junk);
      } catch (const Error&) {
      }
    }
  }
}
