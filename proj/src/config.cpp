#include "cafs/config.hpp"

#include <fstream>
#include <sstream>

#include "cafs/error.hpp"

namespace cafs {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

std::vector<std::string> split_list(std::string v) {
  v = trim(v);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw Error(Errc::InvalidArgument, "unterminated list");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw Error(Errc::InvalidArgument, key + " must be a non-negative integer, got '" + v + "'");
  }
}

}  // namespace

std::pair<std::string, std::uint16_t> split_host_port(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error(Errc::InvalidArgument, "expected host:port, got " + addr);
  auto port = parse_uint("port", addr.substr(colon + 1));
  if (port > 65535) throw Error(Errc::InvalidArgument, "port out of range in " + addr);
  return {addr.substr(0, colon), static_cast<std::uint16_t>(port)};
}

DaemonConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  DaemonConfig c;
  bool saw_key_file = false;
  bool saw_data_dir = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(std::string_view(line).substr(0, eq));
    auto value = unquote(line.substr(eq + 1));
    if (key == "listen_addr") {
      split_host_port(value);
      c.listen_addr = value;
    } else if (key == "api_addr") {
      split_host_port(value);
      c.api_addr = value;
    } else if (key == "bootstrap") {
      for (auto& b : split_list(line.substr(eq + 1))) {
        split_host_port(b);
        c.bootstrap.push_back(b);
      }
    } else if (key == "key_file") {
      c.key_file = value;
      saw_key_file = true;
    } else if (key == "data_dir") {
      c.data_dir = value;
      saw_data_dir = true;
    } else if (key == "difficulty") {
      auto d = parse_uint(key, value);
      if (d > 64) throw Error(Errc::InvalidArgument, "difficulty must be at most 64");
      c.difficulty = static_cast<unsigned>(d);
    } else if (key == "chunk_size") {
      c.chunk_size = parse_uint(key, value);
      if (c.chunk_size == 0) throw Error(Errc::InvalidArgument, "chunk_size must be positive");
    } else if (key == "role") {
      if (value != "registrar" && value != "peer") {
        throw Error(Errc::InvalidArgument, "role must be registrar or peer");
      }
      c.registrar = value == "registrar";
    } else if (key == "registrar") {
      split_host_port(value);
      c.registrar_addr = value;
    } else if (key == "flush_ms") {
      c.flush_ms = parse_uint(key, value);
    } else {
      throw Error(Errc::InvalidArgument, "unknown config key '" + key + "'");
    }
  }
  if (!saw_key_file || c.key_file.is_relative()) c.key_file = base_dir / c.key_file;
  if (!saw_data_dir || c.data_dir.is_relative()) c.data_dir = base_dir / c.data_dir;
  if (c.registrar_addr.empty() && !c.registrar && !c.bootstrap.empty()) c.registrar_addr = c.bootstrap.front();
  return c;
}

DaemonConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace cafs
