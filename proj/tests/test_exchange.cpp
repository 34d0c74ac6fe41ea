#include "doctest.h"
#include "sim_support.hpp"
#include "support.hpp"

using namespace cafs;
using cafs::test::run;

namespace {

struct Fixture {
  std::unique_ptr<sim::Simulator> s;
  Bytes data;
  Cid root;
  std::vector<Cid> blocks;

  // A file of `leaves` chunks (plus one interior root) added on node 0's
  // store only; nothing is announced through the DHT.
  Fixture(std::uint32_t nodes, std::size_t leaves, std::uint64_t seed) {
    auto cfg = test::sim_config(nodes, seed);
    cfg.node.dag.chunk_size = 1024;
    s = test::started(cfg);
    std::mt19937_64 rng(seed);
    data = test::random_bytes(rng, leaves * 1024);
    MemoryBlockStore scratch;
    root = add_file(data, scratch, cfg.node.dag).root;
    blocks = dag_blocks(root, scratch);
    for (const auto& c : blocks) stash.emplace(c, *scratch.get(c));
  }

  void give(std::uint32_t node, std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to && i < blocks.size(); ++i) s->store(node).put(stash.at(blocks[i]));
  }
  void give_all(std::uint32_t node) { give(node, 0, blocks.size()); }

  Outcome<FetchReport> fetch(std::uint32_t node, std::vector<std::uint32_t> providers) {
    std::vector<Contact> cs;
    for (auto p : providers) cs.push_back(s->node(p).contact());
    return run<FetchReport>(*s, [&](auto cb) { s->node(node).exchange().fetch_dag(root, cs, cb); });
  }

  std::map<Cid, Bytes> stash;
};

}  // namespace

TEST_SUITE("exchange") {
  TEST_CASE("two full providers share the load") {
    Fixture f(6, 20, 1);
    f.give_all(1);
    f.give_all(2);
    auto r = f.fetch(5, {1, 2});
    REQUIRE(r.ok());
    CHECK(r->blocks_fetched == f.blocks.size());
    CHECK(cat_file(f.root, f.s->store(5)) == f.data);
    auto& ex = f.s->node(5).exchange();
    CHECK(ex.ledger_for(f.s->node(1).id()).bytes_received > 0);
    CHECK(ex.ledger_for(f.s->node(2).id()).bytes_received > 0);
    auto sent1 = f.s->node(1).exchange().ledger_for(f.s->node(5).id()).bytes_sent;
    auto sent2 = f.s->node(2).exchange().ledger_for(f.s->node(5).id()).bytes_sent;
    CHECK(sent1 == ex.ledger_for(f.s->node(1).id()).bytes_received);
    CHECK(sent2 == ex.ledger_for(f.s->node(2).id()).bytes_received);
    CHECK(ex.wantlist().size() == 0);
  }

  TEST_CASE("disjoint halves are each fetched from their holder") {
    Fixture f(6, 20, 2);
    auto half = f.blocks.size() / 2;
    f.s->store(1).put(f.stash.at(f.root));
    f.give(1, 1, half);
    f.give(2, half, f.blocks.size());
    auto r = f.fetch(4, {1, 2});
    REQUIRE(r.ok());
    CHECK(cat_file(f.root, f.s->store(4)) == f.data);
  }

  TEST_CASE("missing block everywhere is unretrievable") {
    Fixture f(5, 8, 3);
    f.give_all(1);
    f.s->store(1).remove(f.blocks.back());
    auto r = f.fetch(3, {1});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code() == Errc::Unretrievable);
    auto none = f.fetch(3, {});
    REQUIRE_FALSE(none.ok());
    CHECK(none.error().code() == Errc::Unretrievable);
  }

  TEST_CASE("a corrupt provider is demoted and its blocks never stored") {
    Fixture f(6, 12, 4);
    f.give_all(1);
    f.give_all(2);
    f.s->set_corrupt(1, true);
    auto r = f.fetch(4, {1, 2});
    REQUIRE(r.ok());
    CHECK(r->invalid_blocks.size() >= 1);
    CHECK(r->demoted.count(f.s->node(1).id()) == 1);
    for (const auto& c : f.s->store(4).keys()) CHECK(verify_block(c, *f.s->store(4).get(c)));
    CHECK(cat_file(f.root, f.s->store(4)) == f.data);
  }

  TEST_CASE("only corrupt providers means unretrievable, not bad data") {
    Fixture f(4, 4, 5);
    f.give_all(1);
    f.s->set_corrupt(1, true);
    auto r = f.fetch(2, {1});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code() == Errc::Unretrievable);
    CHECK(f.s->store(2).block_count() == 0);
  }

  TEST_CASE("unresponsive provider times out and the other finishes") {
    Fixture f(6, 10, 6);
    f.give_all(1);
    f.give_all(2);
    f.s->leave(1);
    std::vector<Contact> cs{{f.s->identity(1).node_id(), sim::Simulator::address_of(1), 0},
                            f.s->node(2).contact()};
    auto r = run<FetchReport>(*f.s, [&](auto cb) { f.s->node(3).exchange().fetch_dag(f.root, cs, cb); });
    REQUIRE(r.ok());
    CHECK(cat_file(f.root, f.s->store(3)) == f.data);
  }

  TEST_CASE("serve_wants answers DONT_HAVE for absent blocks") {
    Fixture f(3, 3, 7);
    f.give(1, 0, 1);
    auto served = f.s->node(1).exchange().serve_wants(f.s->node(2).id(), {f.blocks[0], f.blocks[1]});
    REQUIRE(served.size() == 2);
    CHECK(served[0].data.has_value());
    CHECK_FALSE(served[1].data.has_value());
    CHECK(f.s->node(1).exchange().ledger_for(f.s->node(2).id()).bytes_sent == served[0].data->size());
  }

  TEST_CASE("wantlist bookkeeping") {
    Wantlist w;
    auto a = Cid::of(to_bytes("a")), b = Cid::of(to_bytes("b"));
    CHECK(w.add(a, 1));
    CHECK_FALSE(w.add(a, 2));
    CHECK(w.add(b, 0));
    CHECK(w.size() == 2);
    CHECK(w.contains(a));
    CHECK(w.remove(a));
    CHECK_FALSE(w.remove(a));
    CHECK(w.entries().size() == 1);
  }
}
