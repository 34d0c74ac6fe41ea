#include <spdlog/spdlog.h>
#include <termios.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cafs/api.hpp"
#include "cafs/api_client.hpp"
#include "cafs/daemon.hpp"
#include "cafs/simnet.hpp"

using namespace cafs;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kUnreachable = 2,
  kUnretrievable = 3,
  kTampered = 4,
  kUnknownToLedger = 5,
  kLedgerInvalid = 6,
};

struct Options {
  std::string api_addr;
  std::string output = "human";
  bool json() const { return output == "json"; }
};

void emit(const Options& o, const Json& j, const std::string& human) {
  if (o.json()) {
    std::cout << j.dump() << "\n";
  } else {
    std::cout << human;
  }
}

int fail(const Options& o, const std::string& code, const std::string& message, int exit_code) {
  if (o.json()) {
    std::cout << Json{{"ok", false}, {"error", code}, {"message", message}}.dump() << "\n";
  } else {
    std::cerr << "error: " << message << "\n";
  }
  return exit_code;
}

int exit_for_error(const std::string& code) {
  if (code == "Unretrievable" || code == "NoPeers" || code == "MissingBlock") return kUnretrievable;
  if (code == "LedgerValidationFailed") return kLedgerInvalid;
  return kUsage;
}

int exit_for_status(const std::string& status) {
  if (status == "Verified") return kOk;
  if (status == "Tampered") return kTampered;
  return kUnknownToLedger;
}

// Returns nullopt after printing the failure; *code receives the exit code.
std::optional<Json> call(const Options& o, const Json& req, int* code) {
  Json reply;
  try {
    reply = api_call(o.api_addr, req);
  } catch (const Error& e) {
    *code = fail(o, errc_name(e.code()), e.what(), kUnreachable);
    return std::nullopt;
  }
  if (!reply.value("ok", false)) {
    auto err = reply.value("error", std::string("Malformed"));
    *code = fail(o, err, reply.value("message", err), exit_for_error(err));
    return std::nullopt;
  }
  return reply;
}

std::string read_passphrase(const std::string& prompt) {
  if (const char* env = std::getenv("CAFS_PASSPHRASE")) return env;
  std::string line;
  if (isatty(STDIN_FILENO)) {
    std::cerr << prompt << std::flush;
    termios old{};
    tcgetattr(STDIN_FILENO, &old);
    termios quiet = old;
    quiet.c_lflag &= ~static_cast<tcflag_t>(ECHO);
    tcsetattr(STDIN_FILENO, TCSANOW, &quiet);
    std::getline(std::cin, line);
    tcsetattr(STDIN_FILENO, TCSANOW, &old);
    std::cerr << "\n";
  } else {
    std::getline(std::cin, line);
  }
  return line;
}

std::string entry_line(const Json& e) {
  std::ostringstream out;
  out << "  height " << e["height"].get<std::uint64_t>() << "  " << e["accessed_date"].get<std::string>() << " "
      << e["accessed_time"].get<std::string>() << "  " << e["cid"].get<std::string>();
  if (!e["modified_cid"].is_null()) out << " -> " << e["modified_cid"].get<std::string>();
  out << "  " << e["size"].get<std::uint64_t>() << " B  " << e["type"].get<std::string>() << "\n";
  return out.str();
}

std::string report_text(const Json& r) {
  std::ostringstream out;
  out << "cid:      " << r["cid"].get<std::string>() << "\n"
      << "status:   " << r["status"].get<std::string>() << "\n"
      << "size:     " << r["size"].get<std::uint64_t>() << " bytes\n";
  if (!r["detail"].get<std::string>().empty()) out << "detail:   " << r["detail"].get<std::string>() << "\n";
  out << "ledger entries: " << r["ledger_entries"].size() << "\n";
  for (const auto& e : r["ledger_entries"]) out << entry_line(e);
  return out.str();
}

int cmd_init(const Options& o, const std::string& key_file, bool force) {
  if (std::filesystem::exists(key_file) && !force) {
    return fail(o, "InvalidArgument", key_file + " exists; pass --force to overwrite", kUsage);
  }
  auto pass = read_passphrase("passphrase: ");
  if (!std::getenv("CAFS_PASSPHRASE") && isatty(STDIN_FILENO)) {
    if (read_passphrase("repeat passphrase: ") != pass) return fail(o, "InvalidArgument", "passphrases differ", kUsage);
  }
  auto kp = Keypair::generate();
  save_key_file(key_file, kp, pass);
  emit(o, {{"ok", true}, {"node_id", kp.node_id().text()}, {"key_file", key_file}},
       "node id: " + kp.node_id().text() + "\nkey written to " + key_file + "\n");
  return kOk;
}

int cmd_daemon(const Options& o, const std::string& config_path) {
  DaemonConfig cfg;
  Keypair kp;
  try {
    cfg = load_config(config_path);
    kp = load_key_file(cfg.key_file, read_passphrase("passphrase: "));
  } catch (const Error& e) {
    return fail(o, errc_name(e.code()), e.what(), kUsage);
  }
  Daemon daemon(cfg, kp);
  try {
    daemon.start();
  } catch (const Error& e) {
    return fail(o, errc_name(e.code()), e.what(), exit_for_error(errc_name(e.code())));
  }
  if (o.json()) {
    std::cout << Json{{"ok", true}, {"node_id", daemon.id().text()}, {"listen_addr", daemon.peer_address()},
                      {"api_addr", daemon.api_address()}}
                     .dump()
              << std::endl;
  }
  daemon.run();
  return kOk;
}

int cmd_add(const Options& o, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return fail(o, "IoFailure", "cannot read " + path, kUsage);
  std::ostringstream ss;
  ss << in.rdbuf();
  auto data = ss.str();
  int code = kOk;
  auto reply = call(o,
                    {{"op", "add"},
                     {"name", std::filesystem::path(path).filename().string()},
                     {"data_b64", base64_encode(as_bytes(data))}},
                    &code);
  if (!reply) return code;
  emit(o, *reply,
       (*reply)["cid"].get<std::string>() + "\nheight " + std::to_string((*reply)["height"].get<std::uint64_t>()) +
           "\n");
  return kOk;
}

int cmd_get(const Options& o, const std::string& cid, const std::string& out_path) {
  int code = kOk;
  auto reply = call(o, {{"op", "get"}, {"cid", cid}}, &code);
  if (!reply) return code;
  auto data = base64_decode((*reply)["data_b64"].get<std::string>());
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) return fail(o, "IoFailure", "cannot write " + out_path, kUsage);
  const auto& report = (*reply)["report"];
  emit(o, {{"ok", true}, {"path", out_path}, {"bytes", data.size()}, {"report", report}},
       report_text(report) + "wrote " + std::to_string(data.size()) + " bytes to " + out_path + "\n");
  return exit_for_status(report["status"].get<std::string>());
}

int cmd_verify(const Options& o, const std::string& cid) {
  int code = kOk;
  auto reply = call(o, {{"op", "verify"}, {"cid", cid}}, &code);
  if (!reply) return code;
  const auto& report = (*reply)["report"];
  emit(o, {{"ok", true}, {"report", report}}, report_text(report));
  return exit_for_status(report["status"].get<std::string>());
}

int cmd_name(const Options& o, const Json& req) {
  int code = kOk;
  auto reply = call(o, req, &code);
  if (!reply) return code;
  const auto& r = *reply;
  emit(o, r,
       "key:      " + r["key"].get<std::string>() + "\ncid:      " + r["cid"].get<std::string>() +
           "\nsequence: " + std::to_string(r["sequence"].get<std::uint64_t>()) + "\n");
  return kOk;
}

int cmd_ledger_validate(const Options& o) {
  int code = kOk;
  auto reply = call(o, {{"op", "ledger_validate"}}, &code);
  if (!reply) return code;
  const auto& r = *reply;
  bool valid = r["valid"].get<bool>();
  std::string human = valid ? "chain valid, " + std::to_string(r["length"].get<std::uint64_t>()) + " blocks\n" : "";
  if (!valid && r.contains("violation")) {
    human = "chain INVALID at height " + std::to_string(r["violation"]["height"].get<std::uint64_t>()) + ": " +
            r["violation"]["kind"].get<std::string>() + "\n";
  } else if (!valid) {
    human = "chain INVALID: " + r.value("detail", std::string()) + "\n";
  }
  emit(o, r, human);
  return valid ? kOk : kLedgerInvalid;
}

int cmd_ledger_export(const Options& o) {
  int code = kOk;
  auto reply = call(o, {{"op", "ledger_export"}}, &code);
  if (!reply) return code;
  const auto& entries = (*reply)["entries"];
  if (o.json()) {
    for (const auto& e : entries) std::cout << e.dump() << "\n";
  } else {
    std::cout << (*reply)["length"].get<std::uint64_t>() << " blocks, " << entries.size() << " entries\n";
    for (const auto& e : entries) std::cout << entry_line(e);
  }
  return kOk;
}

int cmd_sim_run(const Options& o, const std::string& path, const std::string& trace_path) {
  sim::Scenario scenario;
  try {
    scenario = sim::load_scenario(path);
  } catch (const Error& e) {
    return fail(o, errc_name(e.code()), e.what(), kUsage);
  }
  sim::TraceReport report;
  try {
    report = sim::run_scenario(scenario);
  } catch (const Error& e) {
    return fail(o, errc_name(e.code()), e.what(), kUsage);
  }
  auto jsonl = report.to_jsonl();
  if (!trace_path.empty()) {
    std::ofstream out(trace_path, std::ios::trunc);
    out << jsonl;
  }
  std::cout << (o.json() ? jsonl : report.summary_table());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("CAFS_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

  Options o;
  const char* env_api = std::getenv("CAFS_API_ADDR");
  o.api_addr = env_api ? env_api : "127.0.0.1:5101";

  CLI::App app{"cafs: content-addressed file store with a metadata ledger"};
  app.require_subcommand(1);
  app.add_option("--api", o.api_addr, "daemon API address (host:port)")->envname("CAFS_API_ADDR");
  app.add_option("--output", o.output, "output format")->check(CLI::IsMember({"human", "json"}));

  std::string key_file = "identity.key";
  bool force = false;
  auto* init = app.add_subcommand("init", "generate an identity and write the encrypted key file");
  init->add_option("--key-file", key_file, "key file path");
  init->add_flag("--force", force, "overwrite an existing key file");

  std::string config_path;
  auto* daemon = app.add_subcommand("daemon", "run a node");
  daemon->add_option("--config", config_path, "config file")->required();

  std::string path;
  auto* add = app.add_subcommand("add", "add a file and record its metadata");
  add->add_option("path", path)->required();

  std::string cid, out_path;
  auto* get = app.add_subcommand("get", "fetch a file and verify it against the ledger");
  get->add_option("cid", cid)->required();
  get->add_option("-o,--out", out_path, "output file")->required();

  auto* verify = app.add_subcommand("verify", "verify a CID against the ledger");
  verify->add_option("cid", cid)->required();

  std::uint64_t validity_s = 0;
  std::string key;
  auto* name = app.add_subcommand("name", "signed names");
  name->require_subcommand(1);
  auto* publish = name->add_subcommand("publish", "point this node's name at a CID");
  publish->add_option("cid", cid)->required();
  publish->add_option("--validity", validity_s, "record lifetime in seconds");
  auto* resolve = name->add_subcommand("resolve", "resolve a name key or petname");
  resolve->add_option("key", key)->required();

  auto* ledger = app.add_subcommand("ledger", "metadata ledger");
  ledger->require_subcommand(1);
  auto* validate = ledger->add_subcommand("validate", "re-validate the daemon's chain file");
  auto* ledger_export = ledger->add_subcommand("export", "list every ledger entry");

  std::string scenario, trace_path;
  auto* simcmd = app.add_subcommand("sim", "deterministic simulator");
  simcmd->require_subcommand(1);
  auto* sim_run = simcmd->add_subcommand("run", "run a scenario file");
  sim_run->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
  sim_run->add_option("--trace", trace_path, "also write the JSONL trace here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }

  try {
    if (*init) return cmd_init(o, key_file, force);
    if (*daemon) return cmd_daemon(o, config_path);
    if (*add) return cmd_add(o, path);
    if (*get) return cmd_get(o, cid, out_path);
    if (*verify) return cmd_verify(o, cid);
    if (*publish) {
      Json req{{"op", "publish"}, {"cid", cid}};
      if (validity_s > 0) req["validity_s"] = validity_s;
      return cmd_name(o, req);
    }
    if (*resolve) return cmd_name(o, {{"op", "resolve"}, {"key", key}});
    if (*validate) return cmd_ledger_validate(o);
    if (*ledger_export) return cmd_ledger_export(o);
    if (*sim_run) return cmd_sim_run(o, scenario, trace_path);
  } catch (const Error& e) {
    return fail(o, errc_name(e.code()), e.what(), kUsage);
  } catch (const std::exception& e) {
    return fail(o, "Internal", e.what(), kUsage);
  }
  return kUsage;
}
