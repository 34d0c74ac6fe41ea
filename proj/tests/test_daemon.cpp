#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include "cafs/api_client.hpp"
#include "cafs/dag.hpp"
#include "cafs/daemon.hpp"
#include "cafs/error.hpp"
#include "cafs/ledger.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cafs;
using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("cafs-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

DaemonConfig local_config(const fs::path& dir, bool registrar, const std::string& registrar_addr = {}) {
  DaemonConfig c;
  c.listen_addr = "127.0.0.1:0";
  c.api_addr = "127.0.0.1:0";
  c.data_dir = dir / "data";
  c.key_file = dir / "identity.key";
  c.difficulty = 8;
  c.chunk_size = 4096;
  c.flush_ms = 100;
  c.registrar = registrar;
  if (!registrar) {
    c.bootstrap = {registrar_addr};
    c.registrar_addr = registrar_addr;
  }
  return c;
}

bool wait_for(const std::function<bool()>& pred, std::chrono::milliseconds limit = std::chrono::seconds(20)) {
  auto until = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < until) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return pred();
}

Json add_file(const std::string& api, const Bytes& data, const std::string& name) {
  return api_call(api, {{"op", "add"}, {"name", name}, {"data_b64", base64_encode(data)}});
}

struct Run {
  int code;
  std::string out;
};

Run cafs_cli(const std::string& args) {
  std::string cmd = std::string(CAFS_BIN) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  while (auto n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

void write_file(const fs::path& p, const Bytes& data) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Rewrites the chain file with one entry's size changed, leaving hashes stale.
void tamper_chain_file(const fs::path& chain_file) {
  auto blocks = read_chain_file(chain_file);
  REQUIRE(!blocks.empty());
  blocks.back().entries.front().size_bytes += 1;
  fs::remove(chain_file);
  for (const auto& b : blocks) append_block_file(chain_file, b);
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("key = value lines with comments, lists and relative paths") {
    auto c = parse_config(R"(# a peer
listen_addr = 0.0.0.0:4002
api_addr = "127.0.0.1:5102"
bootstrap = ["10.0.0.1:4001", "10.0.0.2:4001"]
bootstrap = 10.0.0.3:4001
key_file = keys/id.key
data_dir = /var/lib/cafs   # absolute stays put
difficulty = 10
role = peer
)",
                          "/etc/cafs");
    CHECK(c.listen_addr == "0.0.0.0:4002");
    CHECK(c.api_addr == "127.0.0.1:5102");
    CHECK(c.bootstrap == std::vector<std::string>{"10.0.0.1:4001", "10.0.0.2:4001", "10.0.0.3:4001"});
    CHECK(c.key_file == fs::path("/etc/cafs/keys/id.key"));
    CHECK(c.data_dir == fs::path("/var/lib/cafs"));
    CHECK(c.difficulty == 10);
    CHECK_FALSE(c.registrar);
    CHECK(c.registrar_addr == "10.0.0.1:4001");
  }

  TEST_CASE("defaults") {
    auto c = parse_config("role = registrar\n", "/srv");
    CHECK(c.registrar);
    CHECK(c.registrar_addr.empty());
    CHECK(c.listen_addr == "127.0.0.1:4001");
    CHECK(c.api_addr == "127.0.0.1:5101");
    CHECK(c.difficulty == 12);
    CHECK(c.chunk_size == 262144);
    CHECK(c.data_dir == fs::path("/srv/data"));
  }

  TEST_CASE("bad input is rejected") {
    for (const char* text : {"nonsense\n", "colour = blue\n", "listen_addr = nowhere\n", "difficulty = -1\n",
                             "difficulty = 65\n", "role = boss\n", "chunk_size = 0\n", "bootstrap = [a:1\n",
                             "api_addr = h:70000\n"}) {
      CAPTURE(text);
      try {
        parse_config(text);
        FAIL("accepted");
      } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidArgument);
      }
    }
  }

  TEST_CASE("missing config file") {
    CHECK_THROWS_AS(load_config("/nonexistent/cafs.conf"), Error);
  }
}

TEST_SUITE("daemon") {
  TEST_CASE("key files open only with the right passphrase") {
    TempDir dir;
    auto kp = Keypair::generate();
    save_key_file(dir.path / "k", kp, "correct horse");
    CHECK(load_key_file(dir.path / "k", "correct horse").node_id() == kp.node_id());
    try {
      load_key_file(dir.path / "k", "wrong");
      FAIL("opened");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadKeyPassphrase);
    }
  }

  TEST_CASE("two daemons over loopback share files and the ledger") {
    TempDir a_dir, b_dir;
    Daemon a(local_config(a_dir.path, true), Keypair::generate());
    a.start();
    a.run_in_background();
    Daemon b(local_config(b_dir.path, false, a.peer_address()), Keypair::generate());
    b.start();
    b.run_in_background();
    REQUIRE(wait_for([&] { return a.joined() && b.joined(); }));

    auto id = api_call(b.api_address(), {{"op", "id"}});
    CHECK(id["ok"] == true);

    std::mt19937_64 rng(1);
    auto data = test::random_bytes(rng, 20000);
    auto added = add_file(b.api_address(), data, "notes.txt");
    REQUIRE(added["ok"] == true);
    CHECK(added["size"] == data.size());
    auto cid = added["cid"].get<std::string>();

    auto got = api_call(a.api_address(), {{"op", "get"}, {"cid", cid}});
    REQUIRE(got["ok"] == true);
    CHECK(base64_decode(got["data_b64"].get<std::string>()) == data);
    CHECK(got["report"]["status"] == "Verified");
    CHECK(got["report"]["ledger_entries"].size() == 1);
    CHECK(got["report"]["ledger_entries"][0]["type"] == "text/plain");

    auto exported = api_call(b.api_address(), {{"op", "ledger_export"}});
    REQUIRE(wait_for([&] {
      exported = api_call(b.api_address(), {{"op", "ledger_export"}});
      return exported["entries"].size() == 1;
    }));
    CHECK(exported["entries"][0]["cid"] == cid);

    auto pub = api_call(b.api_address(), {{"op", "publish"}, {"cid", cid}});
    REQUIRE(pub["ok"] == true);
    auto res = api_call(a.api_address(), {{"op", "resolve"}, {"key", pub["key"]}});
    REQUIRE(res["ok"] == true);
    CHECK(res["cid"] == cid);
    CHECK(res["sequence"] == pub["sequence"]);

    auto missing = api_call(a.api_address(), {{"op", "get"}, {"cid", "QmNLei78zWmzUdbeRB3CiUfAizWUrbeeZh5K1rhAQKCh51"}});
    CHECK(missing["ok"] == false);
    CHECK(missing["error"] == "Unretrievable");
    auto bad = api_call(a.api_address(), {{"op", "frobnicate"}});
    CHECK(bad["ok"] == false);

    b.stop();
    a.stop();
  }

  TEST_CASE("restart keeps the chain and identity") {
    TempDir dir;
    auto kp = Keypair::generate();
    std::string cid;
    {
      Daemon d(local_config(dir.path, true), kp);
      d.start();
      d.run_in_background();
      REQUIRE(wait_for([&] { return d.joined(); }));
      cid = add_file(d.api_address(), to_bytes("persist me"), "p.bin")["cid"].get<std::string>();
      d.stop();
    }
    Daemon d(local_config(dir.path, true), kp);
    d.start();
    d.run_in_background();
    CHECK(d.id() == kp.node_id());
    auto v = api_call(d.api_address(), {{"op", "verify"}, {"cid", cid}});
    CHECK(v["report"]["status"] == "Verified");
    auto valid = api_call(d.api_address(), {{"op", "ledger_validate"}});
    CHECK(valid["valid"] == true);
    CHECK(valid["length"] == 1);
    d.stop();
  }

  TEST_CASE("a tampered chain file is refused at start") {
    TempDir dir;
    auto kp = Keypair::generate();
    {
      Daemon d(local_config(dir.path, true), kp);
      d.start();
      d.run_in_background();
      REQUIRE(wait_for([&] { return d.joined(); }));
      add_file(d.api_address(), to_bytes("one"), "1");
      d.stop();
    }
    tamper_chain_file(dir.path / "data" / "chain.bin");
    Daemon d(local_config(dir.path, true), kp);
    try {
      d.start();
      FAIL("started");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::LedgerValidationFailed);
    }
  }

  TEST_CASE("a taken port is reported") {
    TempDir a_dir, b_dir;
    Daemon a(local_config(a_dir.path, true), Keypair::generate());
    a.start();
    auto cfg = local_config(b_dir.path, true);
    cfg.listen_addr = a.peer_address();
    Daemon b(cfg, Keypair::generate());
    try {
      b.start();
      FAIL("bound twice");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::AddrInUse);
    }
  }
}

TEST_SUITE("cli") {
  TEST_CASE("unreachable daemon exits 2") {
    auto r = cafs_cli("--api 127.0.0.1:1 verify QmNLei78zWmzUdbeRB3CiUfAizWUrbeeZh5K1rhAQKCh51");
    CHECK(r.code == 2);
    auto j = cafs_cli("--api 127.0.0.1:1 --output json ledger export");
    CHECK(j.code == 2);
    CHECK(Json::parse(j.out)["ok"] == false);
  }

  TEST_CASE("usage errors exit 1") {
    CHECK(cafs_cli("").code == 1);
    CHECK(cafs_cli("get").code == 1);
    CHECK(cafs_cli("--output xml verify x").code == 1);
  }

  TEST_CASE("init writes a key file that the passphrase opens") {
    TempDir dir;
    auto key = (dir.path / "id.key").string();
    auto r = cafs_cli("--output json init --key-file " + key + " < /dev/null");
    REQUIRE(r.code == 0);
    auto node_id = Json::parse(r.out)["node_id"].get<std::string>();
    CHECK(load_key_file(key, "").node_id().text() == node_id);
    CHECK(cafs_cli("init --key-file " + key + " < /dev/null").code == 1);
  }

  TEST_CASE("add, get, verify, export and validate against a live daemon") {
    TempDir dir;
    Daemon d(local_config(dir.path, true), Keypair::generate());
    d.start();
    d.run_in_background();
    REQUIRE(wait_for([&] { return d.joined(); }));
    auto api = "--api " + d.api_address() + " ";

    std::mt19937_64 rng(2);
    auto data = test::random_bytes(rng, 10000);
    write_file(dir.path / "in.bin", data);
    auto add = cafs_cli(api + "--output json add " + (dir.path / "in.bin").string());
    REQUIRE(add.code == 0);
    auto cid = Json::parse(add.out)["cid"].get<std::string>();

    auto get = cafs_cli(api + "get " + cid + " -o " + (dir.path / "out.bin").string());
    CHECK(get.code == 0);
    CHECK(get.out.find("Verified") != std::string::npos);
    CHECK(read_file(dir.path / "out.bin") == data);

    CHECK(cafs_cli(api + "verify " + cid).code == 0);
    // Nobody holds the blocks.
    CHECK(cafs_cli(api + "verify QmNLei78zWmzUdbeRB3CiUfAizWUrbeeZh5K1rhAQKCh51").code == 3);
    // Stored but never recorded on the ledger.
    FsBlockStore blocks(dir.path / "data" / "blocks");
    auto unregistered = add_file(to_bytes("off the books"), blocks, DagParams{4096}).root.text();
    auto off = cafs_cli(api + "--output json get " + unregistered + " -o " + (dir.path / "off.bin").string());
    CHECK(off.code == 5);
    CHECK(Json::parse(off.out)["report"]["status"] == "UnknownToLedger");
    CHECK(read_file(dir.path / "off.bin") == to_bytes("off the books"));

    auto exported = cafs_cli(api + "--output json ledger export");
    CHECK(exported.code == 0);
    CHECK(Json::parse(exported.out.substr(0, exported.out.find('\n')))["cid"] == cid);

    CHECK(cafs_cli(api + "ledger validate").code == 0);
    tamper_chain_file(dir.path / "data" / "chain.bin");
    auto invalid = cafs_cli(api + "--output json ledger validate");
    CHECK(invalid.code == 6);
    auto j = Json::parse(invalid.out);
    CHECK(j["valid"] == false);
    CHECK(j["violation"]["height"] == 0);
    CHECK(j["violation"]["kind"] == "BadRoot");
    d.stop();
  }

  TEST_CASE("sim run prints a trace") {
    TempDir dir;
    auto scenario = dir.path / "s.toml";
    std::ofstream(scenario) << R"([sim]
seed = 3
nodes = 4
duration_s = 120
difficulty = 6

[[action]]
at_s = 10
op = "add"
node = 1
file = "f"
size = 5000

[[action]]
at_s = 40
op = "get"
node = 2
file = "f"
)";
    auto trace = dir.path / "t.jsonl";
    auto r = cafs_cli("--output json sim run " + scenario.string() + " --trace " + trace.string());
    REQUIRE(r.code == 0);
    std::ifstream in(trace);
    std::string first;
    std::getline(in, first);
    auto summary = Json::parse(first);
    CHECK(summary.contains("trace_digest"));
    auto again = cafs_cli("--output json sim run " + scenario.string());
    CHECK(again.out == r.out);
    CHECK(cafs_cli("sim run /nonexistent.toml").code == 1);
  }
}
