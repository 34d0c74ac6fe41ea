#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"

#include "cafs/ledger.hpp"

using namespace cafs;

namespace {

constexpr unsigned kDifficulty = 6;

MetadataEntry entry_for(std::uint64_t i, std::uint64_t accessed = 1600000000) {
  MetadataEntry e;
  e.file_cid = Cid::of(to_bytes("file-" + std::to_string(i % 7)));
  e.created_at = 1500000000 + i;
  e.accessed_at = accessed + i;
  e.size_bytes = 100 * i;
  e.file_type = "text/plain";
  e.author = "author-" + std::to_string(i % 3);
  if (i % 5 == 4) e.modified_cid = Cid::of(to_bytes("mod-" + std::to_string(i)));
  return e;
}

Chain build_chain(std::size_t blocks, std::size_t per_block = 3) {
  Chain c;
  std::uint64_t t = 1600000000;
  std::uint64_t n = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    std::vector<MetadataEntry> es;
    for (std::size_t i = 0; i < per_block; ++i) es.push_back(entry_for(n++));
    t += 10;
    c.append(mine_block(es, c.tip_hash(), kDifficulty, [t] { return t; }));
  }
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / (name + "-" + std::to_string(::getpid()));
}

}  // namespace

TEST_SUITE("ledger") {
  TEST_CASE("entry encoding round trip and limits") {
    for (std::uint64_t i = 0; i < 50; ++i) {
      auto e = entry_for(i);
      CHECK(decode_entry(encode_entry(e)) == e);
    }
    auto e = entry_for(1);
    e.file_type = std::string(65, 't');
    CHECK_THROWS_AS(encode_entry(e), Error);
    e = entry_for(1);
    e.author = std::string(257, 'a');
    CHECK_THROWS_AS(encode_entry(e), Error);
    auto bytes = encode_entry(entry_for(1));
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_entry(bytes), Error);
  }

  TEST_CASE("entry hash covers every field") {
    auto base = entry_for(2);
    auto h = entry_hash(base);
    std::vector<MetadataEntry> variants(7, base);
    variants[0].file_cid = Cid::of(to_bytes("other"));
    variants[1].created_at += 1;
    variants[2].accessed_at += 1;
    variants[3].size_bytes += 1;
    variants[4].file_type = "text/html";
    variants[5].author = "mallory";
    variants[6].modified_cid = Cid::of(to_bytes("m"));
    for (const auto& v : variants) CHECK(entry_hash(v) != h);
  }

  TEST_CASE("merkle root") {
    CHECK_THROWS_AS(merkle_root({}), Error);
    std::vector<Hash256> hs;
    for (std::uint8_t i = 0; i < 5; ++i) hs.push_back(sha256(Bytes{i}));
    // Odd levels duplicate the last element.
    auto five = merkle_root(hs);
    auto six = hs;
    six.push_back(hs.back());
    CHECK(merkle_root(six) == five);
    auto swapped = hs;
    std::swap(swapped[0], swapped[1]);
    CHECK(merkle_root(swapped) != five);
  }

  TEST_CASE("mined blocks meet the target and count attempts") {
    for (unsigned d : {0u, 4u, 8u}) {
      std::uint64_t attempts = 0;
      auto b = mine_block({entry_for(1)}, Hash256{}, d, [] { return 1600000000; }, &attempts);
      CHECK(leading_zero_bits(b.hash()) >= d);
      CHECK(attempts == b.nonce + 1);
      CHECK(b.merkle_root == b.compute_merkle_root());
    }
    Hash256 h{};
    CHECK(leading_zero_bits(h) == 256);
    h[0] = 0x01;
    CHECK(leading_zero_bits(h) == 7);
    h[0] = 0;
    h[1] = 0x80;
    CHECK(leading_zero_bits(h) == 8);
  }

  TEST_CASE("mean nonce attempts track the difficulty") {
    for (unsigned d : {8u, 12u}) {
      std::uint64_t total = 0;
      for (int i = 0; i < 30; ++i) {
        std::uint64_t attempts = 0;
        mine_block({entry_for(static_cast<std::uint64_t>(i))}, Hash256{}, d, [] { return 1600000000; }, &attempts);
        total += attempts;
      }
      double mean = static_cast<double>(total) / 30.0;
      CAPTURE(d);
      CAPTURE(mean);
      CHECK(mean >= std::ldexp(1.0, static_cast<int>(d) - 1));
      CHECK(mean <= std::ldexp(1.0, static_cast<int>(d) + 1));
    }
  }

  TEST_CASE("block encoding round trip") {
    auto c = build_chain(3);
    for (const auto& b : c.blocks()) CHECK(decode_block(encode_block(b)) == b);
  }

  TEST_CASE("valid chain validates") {
    CHECK_FALSE(validate_chain(Chain{}, kDifficulty).has_value());
    CHECK_FALSE(validate_chain(build_chain(8), kDifficulty).has_value());
  }

  TEST_CASE("each violation kind is reported at the right height") {
    auto blocks = build_chain(6).blocks();
    auto check = [&](std::vector<LedgerBlock> bs, Violation expect) {
      auto v = validate_chain(Chain(std::move(bs)), kDifficulty);
      REQUIRE(v.has_value());
      CHECK(*v == expect);
    };
    {
      auto bs = blocks;
      bs[0].prev_hash[0] ^= 1;
      check(bs, {0, ViolationKind::BadGenesis});
    }
    {
      auto bs = blocks;
      bs[3].prev_hash[5] ^= 1;
      check(bs, {3, ViolationKind::BadLink});
    }
    {
      auto bs = blocks;
      bs[2].entries[1].size_bytes += 1;
      check(bs, {2, ViolationKind::BadRoot});
    }
    {
      auto bs = blocks;
      bs[4].entries.clear();
      check(bs, {4, ViolationKind::BadRoot});
    }
    {
      // Re-mine block 5 with an earlier timestamp.
      auto bs = blocks;
      auto early = bs[4].timestamp - 1;
      bs[5] = mine_block(bs[5].entries, bs[4].hash(), kDifficulty, [early] { return early; });
      check(bs, {5, ViolationKind::BadTimestamp});
    }
    {
      // Find a nonce that misses the target.
      auto bs = blocks;
      auto& last = bs.back();
      while (leading_zero_bits(last.hash()) >= kDifficulty) ++last.nonce;
      check(bs, {5, ViolationKind::BadPow});
    }
  }

  TEST_CASE("index lookup equals linear scan") {
    auto c = build_chain(12, 5);
    for (std::uint64_t i = 0; i < 70; ++i) {
      auto e = entry_for(i);
      CHECK(c.lookup(e.file_cid) == c.lookup_scan(e.file_cid));
      if (e.modified_cid) CHECK(c.lookup(*e.modified_cid) == c.lookup_scan(*e.modified_cid));
    }
    CHECK(c.lookup(Cid::of(to_bytes("absent"))).empty());
    auto hits = lookup_metadata(c, entry_for(0).file_cid);
    REQUIRE_FALSE(hits.empty());
    for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1].height <= hits[i].height);
    // Index rebuilt from a block list agrees with incremental appends.
    Chain rebuilt(c.blocks());
    CHECK(rebuilt.lookup(entry_for(3).file_cid) == c.lookup(entry_for(3).file_cid));
  }

  TEST_CASE("latest hit and version history") {
    auto a = Cid::of(to_bytes("v0")), b = Cid::of(to_bytes("v1")), d = Cid::of(to_bytes("v2"));
    auto mk = [](Cid f, std::optional<Cid> m, std::uint64_t acc) {
      MetadataEntry e;
      e.file_cid = f;
      e.modified_cid = m;
      e.accessed_at = acc;
      return e;
    };
    Chain c;
    c.append(mine_block({mk(a, std::nullopt, 10)}, c.tip_hash(), 0, [] { return 1; }));
    c.append(mine_block({mk(a, b, 20)}, c.tip_hash(), 0, [] { return 2; }));
    c.append(mine_block({mk(b, d, 30), mk(a, std::nullopt, 25)}, c.tip_hash(), 0, [] { return 3; }));
    CHECK(version_history(c, a) == std::vector<Cid>{a, b, d});
    auto hits = c.lookup(a);
    auto latest = latest_hit(hits);
    REQUIRE(latest);
    CHECK(latest->entry.accessed_at == 25);
    CHECK(latest_hit(std::vector<LedgerHit>{}) == std::nullopt);
  }

  TEST_CASE("chain file persistence") {
    auto path = temp_path("cafs-chain");
    std::filesystem::remove(path);
    auto c = build_chain(4);
    for (const auto& b : c.blocks()) append_block_file(path, b);
    CHECK(read_chain_file(path) == c.blocks());
    write_chain_file(path, c);
    CHECK(read_chain_file(path) == c.blocks());
    CHECK(read_chain_file(temp_path("cafs-no-such-chain")).empty());
    {
      std::ofstream out(path, std::ios::binary | std::ios::app);
      out.write("\x00\x00\x00\x09trunc", 9);
    }
    CHECK_THROWS_AS(read_chain_file(path), Error);
    std::filesystem::remove(path);
  }

  TEST_CASE("date and time rendering") {
    CHECK(format_date(1528761600) == "12/06/18");
    CHECK(format_time(1528761600) == "12:00 AM");
    CHECK(format_time(1528761600 + 13 * 3600 + 5 * 60) == "01:05 PM");
  }
}

TEST_SUITE("ledger_writer") {
  TEST_CASE("batches on max_entries and on the flush timer") {
    test::ManualRuntime rt;
    Chain chain;
    std::vector<std::uint64_t> commits;
    LedgerWriter w(rt, chain, {kDifficulty, 3, 1000}, [&](const LedgerBlock&, std::uint64_t h) { commits.push_back(h); });
    std::vector<std::uint64_t> heights;
    auto record = [&](Outcome<std::uint64_t> r) {
      REQUIRE(r.ok());
      heights.push_back(*r);
    };
    for (std::uint64_t i = 0; i < 3; ++i) w.append_entry(entry_for(i), record);
    CHECK(chain.length() == 1);
    CHECK(heights == std::vector<std::uint64_t>{0, 0, 0});
    w.append_entry(entry_for(10), record);
    CHECK(w.pending() == 1);
    rt.advance(999);
    CHECK(chain.length() == 1);
    rt.advance(1);
    CHECK(chain.length() == 2);
    CHECK(heights.back() == 1);
    CHECK(commits == std::vector<std::uint64_t>{0, 1});
    CHECK_FALSE(validate_chain(chain, kDifficulty).has_value());
    CHECK(rt.pending_timers() == 0);
  }

  TEST_CASE("duplicate pending entries are refused") {
    test::ManualRuntime rt;
    Chain chain;
    LedgerWriter w(rt, chain, {kDifficulty, 64, 1000});
    std::optional<Errc> err;
    w.append_entry(entry_for(1), [](Outcome<std::uint64_t>) {});
    w.append_entry(entry_for(1), [&](Outcome<std::uint64_t> r) {
      if (!r) err = r.error().code();
    });
    CHECK(err == Errc::DuplicatePending);
    CHECK(w.pending() == 1);
    rt.advance(1000);
    // After commit the same entry may be appended again.
    bool ok = false;
    w.append_entry(entry_for(1), [&](Outcome<std::uint64_t> r) { ok = r.ok(); });
    w.flush();
    CHECK(ok);
    CHECK(chain.length() == 2);
  }

  TEST_CASE("block timestamps never go backwards") {
    test::ManualRuntime rt(5000000);
    Chain chain;
    std::uint64_t future = 4000000000;
    chain.append(mine_block({entry_for(0)}, Hash256{}, kDifficulty, [future] { return future; }));
    LedgerWriter w(rt, chain, {kDifficulty, 1, 1000});
    w.append_entry(entry_for(1), [](Outcome<std::uint64_t>) {});
    REQUIRE(chain.length() == 2);
    CHECK(chain.blocks()[1].timestamp == future);
    CHECK_FALSE(validate_chain(chain, kDifficulty).has_value());
  }
}
