// Constants below come from tests/oracle/vectors.py, an independent encoder
// written against the documented byte layouts.
#include "doctest.h"

#include "cafs/dag.hpp"
#include "cafs/identity.hpp"
#include "cafs/ledger.hpp"
#include "cafs/naming.hpp"
#include "cafs/wire.hpp"

using namespace cafs;

namespace {

Bytes text(std::string_view s) { return to_bytes(s); }

MetadataEntry sample_entry() {
  MetadataEntry e;
  e.file_cid = Cid::of(text("hello world"));
  e.created_at = 1528761600;
  e.accessed_at = 1528765200;
  e.size_bytes = 11;
  e.file_type = "text/plain";
  e.author = "alice";
  return e;
}

}  // namespace

TEST_SUITE("golden") {
  TEST_CASE("sha256 and cid text") {
    CHECK(to_hex(sha256({})) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(Cid::of({}).text() == "QmdfTbBqBPQ7VNxZEYEj14VmRuZBkqFbiwReogJgS1zR1n");
    CHECK(Cid::of(text("hello world")).text() == "QmaozNR7DZHQK1ZcU9p7QdrshMvXqWK6gpu5rmrkPdT3L4");
    CHECK(Cid(Hash256{}).text() == "QmNLei78zWmzUdbeRB3CiUfAizWUrbeeZh5K1rhAQKCh51");
  }

  TEST_CASE("dag node encodings") {
    CHECK(to_hex(encode_node(DagNode::leaf({}))) == "0000000000");
    CHECK(to_hex(encode_node(DagNode::leaf(text("ab")))) == "00000000026162");
    CHECK(Cid::of(encode_node(DagNode::leaf({}))).text() == "QmXWqcHJmXLJa6nvWKLjKNjHVF3eAx64eBpCirzZb86LP5");

    auto l1 = encode_node(DagNode::leaf(text("ab")));
    auto l2 = encode_node(DagNode::leaf(text("cde")));
    auto two = encode_node(DagNode::interior({{Cid::of(l1), 2}, {Cid::of(l2), 3}}));
    CHECK(two.size() == 5 + 2 * 42);
    CHECK(to_hex(two) ==
          "01000000021220a150586f85a38a21842447c61ac5102d0d35a8466837d5cee3259ce94ede74de0000000000000002"
          "12200f86f7e0df89e48ca83cfb151ea6a89ce5fbf084c17ac458cc881f0def6371ef0000000000000003");
    CHECK(Cid::of(two).text() == "QmZMdFQQPTqy9bv4uF8KWv9ywh5DQV8Lh4H1qS8VXVdGQL");
  }

  TEST_CASE("file roots") {
    CHECK(compute_root(text("abcdefghij"), {4, 2}).text() == "QmPPNUy2f8BfWkx2XTG4HnSqC19RC4XvApRdx3Qw88Pvky");
    Bytes a(262145, 'a');
    CHECK(compute_root(a, {}).text() == "QmSUCpGQThBNx6S4KgDoLNA3wkEEB1tJRU5qDxN2hJdpbK");
    CHECK(compute_root({}, {}).text() == "QmXWqcHJmXLJa6nvWKLjKNjHVF3eAx64eBpCirzZb86LP5");
  }

  TEST_CASE("ledger entry, merkle root and header") {
    auto e = sample_entry();
    CHECK(to_hex(encode_entry(e)) ==
          "1220b94d27b9934d3e08a52e52d7da7dabfac484efe37a5380ee9088f7ace2efcde9000000005b1f0d00000000005b1f1b10"
          "000000000000000b000a746578742f706c61696e0005616c69636500");
    CHECK(to_hex(entry_hash(e)) == "4561e8cc345f19230ee4ba9c6a002b66feee7f10272f075f0b0f805350359c3d");

    auto m = e;
    m.size_bytes = 12;
    m.modified_cid = Cid::of(text("hello world!"));
    CHECK(to_hex(entry_hash(m)) == "6fd8ded46c46c53eea99e6706e7bd224ebc07225d8580bab94f2b5243eb4e6a9");

    std::vector<Hash256> hs;
    for (std::uint8_t i = 0; i < 3; ++i) hs.push_back(sha256(Bytes{i}));
    CHECK(to_hex(merkle_root(hs)) == "f2dcdd96791b6bac5d554f2d320e594b834f5da1981812c3707e7772234cb0ad");
    CHECK(to_hex(merkle_root(std::span(hs).first(1))) ==
          "b289dea92ca5aba5f2e1891a1af11be27914c48854db0fe5b4bb95c137e0f2d6");

    LedgerBlock b;
    b.entries = {e};
    b.merkle_root = b.compute_merkle_root();
    b.timestamp = 1528761600;
    b.nonce = 42;
    CHECK(b.header().size() == 80);
    CHECK(to_hex(b.hash()) == "7ef806dc211709903acc7c4ddd9b217e9764a27e75575166f3ca109572d8e841");
  }

  TEST_CASE("name record") {
    Hash256 seed;
    for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = static_cast<std::uint8_t>(i + 1);
    auto kp = Keypair::from_seed(seed);
    CHECK(to_hex(kp.public_key()) == "79b5562e8fe654f94078b112e8a98ba7901f853ae695bed7e0e3910bad049664");
    CHECK(kp.node_id().text() == "7r3ANFFNoFyQJAtiK7JdF65mT62dXLPas7d1CEDmNvEB");

    auto rec = sign_record(kp, Cid::of(text("hello world")), 3, 1700000000);
    auto enc = encode_record(rec);
    CHECK(enc.size() == 178);
    CHECK(to_hex(enc) ==
          "65b60673d6ed884bf01c2c222d82ada0740f29ac3355d6a925c81f17f47a27b81220b94d27b9934d3e08a52e52d7da7dabfac4"
          "84efe37a5380ee9088f7ace2efcde90000000000000003000000006553f10079b5562e8fe654f94078b112e8a98ba7901f853a"
          "e695bed7e0e3910bad049664f18a645c28a9d0907906aef84143273394a397fd1067d208dbdca8375d6c0fbb01f5708e54aa"
          "a407d157934e44555310594cb1c37df9086cbcceeca75693a70b");
    CHECK(decode_record(enc) == rec);
  }

  TEST_CASE("wire frames") {
    NodeId sender;
    sender.bytes.fill(0xab);
    auto frame = [&](std::uint64_t id, wire::Body body) {
      return to_hex(wire::encode_frame({id, sender, "sim:1", std::move(body)}));
    };
    const std::string head = "abababababababababababababababababababababababababababababababab000573696d3a31";
    CHECK(frame(7, wire::Ping{}) == "00000030010000000000000007" + head);
    NodeId target;
    target.bytes[31] = 1;
    CHECK(frame(8, wire::FindNode{target}) ==
          "00000050030000000000000008" + head + "0000000000000000000000000000000000000000000000000000000000000001");
    CHECK(frame(9, wire::Want{{Cid::of({})}}) ==
          "00000054200000000000000009" + head +
              "00011220e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(frame(10, wire::GetChain{5}) == "0000003832000000000000000a" + head + "0000000000000005");
  }
}
