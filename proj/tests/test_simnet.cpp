#include "doctest.h"
#include "sim_support.hpp"
#include "support.hpp"

#include <sstream>

#include "json.hpp"

using namespace cafs;

namespace {

const char* kScenario = R"(
# comment line
[sim]
seed = 5
nodes = 10
latency_ms = [5, 40]
duration_s = 900
difficulty = 8

[[churn]]
at_s = 200
node = 9
action = "leave"

[[action]]
at_s = 5
op = "add"
node = 2
file = "a.txt"
size = 5000

[[action]]
at_s = 20
op = "get"
node = 7
file = "a.txt"

[[action]]
at_s = 25
op = "lookup"
node = 4

[[action]]
at_s = 30
op = "publish"
node = 2
file = "a.txt"

[[action]]
at_s = 40
op = "resolve"
node = 8
publisher = 2

[[action]]
at_s = 50
op = "modify"
node = 2
base = "a.txt"
file = "a2.txt"
size = 5001

[[action]]
at_s = 70
op = "verify"
node = 3
file = "a2.txt"
)";

sim::TraceReport run_text(const std::string& text) { return sim::run_scenario(sim::parse_scenario(text)); }

Errc script_error(const std::string& text) {
  try {
    run_text(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected ScriptError");
  return Errc::InvalidArgument;
}

}  // namespace

TEST_SUITE("simnet") {
  TEST_CASE("scenario parses into config and script") {
    auto sc = sim::parse_scenario(kScenario);
    CHECK(sc.config.seed == 5);
    CHECK(sc.config.node_count == 10);
    CHECK(sc.config.latency_min_ms == 5);
    CHECK(sc.config.latency_max_ms == 40);
    CHECK(sc.config.node.ledger.difficulty == 8);
    REQUIRE(sc.config.churn.size() == 1);
    CHECK(sc.config.churn[0].at_ms == 200000);
    CHECK(sc.script.size() == 7);
    CHECK(sc.script[5].base == "a.txt");
  }

  TEST_CASE("scripted run succeeds end to end") {
    auto report = run_text(kScenario);
    REQUIRE(report.ops.size() == 7);
    for (const auto& op : report.ops) {
      INFO(op.op << " " << op.error);
      CHECK(op.ok);
    }
    CHECK(report.ops[1].bytes_match);
    CHECK(report.ops[1].status == "Verified");
    CHECK(report.ops[2].exact);
    CHECK(report.ops[4].cid == report.ops[0].cid);
    CHECK(report.ops[6].status == "Verified");
    CHECK(report.delivered > 0);
  }

  TEST_CASE("equal seeds give identical traces, different seeds differ") {
    auto a = run_text(kScenario);
    auto b = run_text(kScenario);
    CHECK(a.to_jsonl() == b.to_jsonl());
    CHECK(a.trace_digest == b.trace_digest);
    std::string other = kScenario;
    other.replace(other.find("seed = 5"), 8, "seed = 6");
    auto c = run_text(other);
    CHECK(c.trace_digest != a.trace_digest);
  }

  TEST_CASE("total message loss terminates with failures") {
    std::string text = R"(
[sim]
seed = 2
nodes = 6
drop_probability = 1.0
duration_s = 600

[[action]]
at_s = 5
op = "add"
node = 1
file = "f"
size = 3000

[[action]]
at_s = 10
op = "get"
node = 3
file = "f"

[[action]]
at_s = 10
op = "get"
node = 4
file = "f"
)";
    auto r = run_text(text);
    CHECK(r.delivered == 0);
    for (const auto& op : r.ops) CHECK(op.finished_ms < 600000);
    CHECK(r.ops[1].error.rfind("Unretrievable", 0) == 0);
    CHECK(r.ops[2].error.rfind("Unretrievable", 0) == 0);
    CHECK_FALSE(r.ops[1].ok);
  }

  TEST_CASE("operations on a departing node fail with NodeLeft") {
    std::string text = R"(
[sim]
nodes = 5

[[churn]]
at_ms = 4000
node = 3
action = "leave"

[[action]]
at_ms = 3990
op = "add"
node = 3
file = "f"
size = 10

[[action]]
at_ms = 5000
op = "lookup"
node = 3
)";
    auto r = run_text(text);
    CHECK(r.ops[0].error.rfind("NodeLeft", 0) == 0);
    CHECK(r.ops[1].error.rfind("NodeLeft", 0) == 0);
  }

  TEST_CASE("partition blocks retrieval until healed") {
    std::string text = R"(
[sim]
seed = 9
nodes = 6

[[action]]
at_s = 5
op = "add"
node = 1
file = "f"
size = 2000

[[action]]
at_s = 20
op = "partition"
groups = [[0, 1, 2], [3, 4, 5]]

[[action]]
at_s = 21
op = "get"
node = 4
file = "f"

[[action]]
at_s = 200
op = "heal"

[[action]]
at_s = 210
op = "get"
node = 5
file = "f"
)";
    auto r = run_text(text);
    CHECK(r.ops[0].ok);
    CHECK_FALSE(r.ops[2].ok);
    CHECK(r.ops[4].ok);
    CHECK(r.ops[4].bytes_match);
  }

  TEST_CASE("malformed scripts raise ScriptError") {
    CHECK(script_error("[sim]\nnodes = 3\n[[action]]\nat_s = 1\nop = \"dance\"\nnode = 0\n") == Errc::ScriptError);
    CHECK(script_error("[sim]\nnodes = 3\n[[action]]\nat_s = 1\nop = \"get\"\nnode = 0\nfile = \"x\"\n") ==
          Errc::ScriptError);
    CHECK(script_error("[sim]\nnodes = 3\n[[action]]\nat_s = 1\nop = \"add\"\nnode = 7\nfile = \"x\"\n") ==
          Errc::ScriptError);
    CHECK(script_error("[sim]\nnodes = 3\nbogus = 1\n") == Errc::ScriptError);
    CHECK(script_error("[sim]\nnodes = [1,\n") == Errc::ScriptError);
    CHECK(script_error("[table]\n") == Errc::ScriptError);
    CHECK(script_error("[sim]\nnodes = 3\n[[action]]\nop = \"heal\"\n") == Errc::ScriptError);
    CHECK(script_error("[sim]\ndrop_probability = 1.5\n") == Errc::ScriptError);
    CHECK(script_error("[sim]\nnodes = 2\n[[churn]]\nat_s = 1\nnode = 5\naction = \"leave\"\n") == Errc::ScriptError);
  }

  TEST_CASE("oracle membership reflects churn immediately") {
    auto s = test::started(test::sim_config(5, 40));
    CHECK(s->oracle().membership().size() == 5);
    s->leave(2);
    CHECK(s->oracle().membership() == std::vector<std::uint32_t>{0, 1, 3, 4});
    s->join(2);
    CHECK(s->oracle().membership().size() == 5);
  }

  TEST_CASE("jsonl output parses line by line") {
    auto r = run_text(kScenario);
    std::istringstream in(r.to_jsonl());
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
      auto j = nlohmann::json::parse(line);
      CHECK(j.contains("type"));
      ++lines;
    }
    CHECK(lines == 1 + r.ops.size() + r.peers.size());
    CHECK(r.summary_table().find("lookup") != std::string::npos);
  }
}
