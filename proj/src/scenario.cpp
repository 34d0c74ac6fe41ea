#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cafs/simnet.hpp"

namespace cafs::sim {

namespace {

struct Value {
  enum class Kind { Int, Float, String, Bool, Array };
  Kind kind = Kind::Int;
  std::int64_t i = 0;
  double f = 0;
  std::string s;
  bool b = false;
  std::vector<Value> items;
};

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw Error(Errc::ScriptError, "line " + std::to_string(line) + ": " + msg);
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line) : t_(text), line_(line) {}

  Value parse_all() {
    auto v = parse();
    skip_ws();
    if (pos_ != t_.size()) fail(line_, "trailing characters after value");
    return v;
  }

 private:
  void skip_ws() {
    while (pos_ < t_.size() && std::isspace(static_cast<unsigned char>(t_[pos_]))) ++pos_;
  }

  Value parse() {
    skip_ws();
    if (pos_ >= t_.size()) fail(line_, "missing value");
    char c = t_[pos_];
    if (c == '"') return parse_string();
    if (c == '[') return parse_array();
    if (t_.substr(pos_, 4) == "true") {
      pos_ += 4;
      Value v;
      v.kind = Value::Kind::Bool;
      v.b = true;
      return v;
    }
    if (t_.substr(pos_, 5) == "false") {
      pos_ += 5;
      Value v;
      v.kind = Value::Kind::Bool;
      return v;
    }
    return parse_number();
  }

  Value parse_string() {
    ++pos_;
    Value v;
    v.kind = Value::Kind::String;
    while (pos_ < t_.size() && t_[pos_] != '"') {
      if (t_[pos_] == '\\' && pos_ + 1 < t_.size()) ++pos_;
      v.s.push_back(t_[pos_++]);
    }
    if (pos_ >= t_.size()) fail(line_, "unterminated string");
    ++pos_;
    return v;
  }

  Value parse_array() {
    ++pos_;
    Value v;
    v.kind = Value::Kind::Array;
    skip_ws();
    if (pos_ < t_.size() && t_[pos_] == ']') {
      ++pos_;
      return v;
    }
    while (true) {
      v.items.push_back(parse());
      skip_ws();
      if (pos_ >= t_.size()) fail(line_, "unterminated array");
      if (t_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < t_.size() && t_[pos_] == ']') {
          ++pos_;
          return v;
        }
        continue;
      }
      if (t_[pos_] == ']') {
        ++pos_;
        return v;
      }
      fail(line_, "expected ',' or ']' in array");
    }
  }

  Value parse_number() {
    auto start = pos_;
    while (pos_ < t_.size() && (std::isalnum(static_cast<unsigned char>(t_[pos_])) || t_[pos_] == '.' ||
                                t_[pos_] == '-' || t_[pos_] == '+' || t_[pos_] == '_')) {
      ++pos_;
    }
    std::string tok;
    for (char c : t_.substr(start, pos_ - start)) {
      if (c != '_') tok.push_back(c);
    }
    if (tok.empty()) fail(line_, "unexpected character '" + std::string(1, t_[start]) + "'");
    Value v;
    if (tok.find_first_of(".eE") != std::string::npos) {
      try {
        std::size_t used = 0;
        v.f = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        fail(line_, "bad number '" + tok + "'");
      }
      v.kind = Value::Kind::Float;
      return v;
    }
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v.i);
    if (ec != std::errc() || p != tok.data() + tok.size()) fail(line_, "bad value '" + tok + "'");
    v.kind = Value::Kind::Int;
    return v;
  }

  std::string_view t_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

std::string trim(std::string s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Table = std::map<std::string, std::pair<Value, std::size_t>>;

double number(const Value& v, std::size_t line, const std::string& key) {
  if (v.kind == Value::Kind::Int) return static_cast<double>(v.i);
  if (v.kind == Value::Kind::Float) return v.f;
  fail(line, key + " must be a number");
}

std::uint64_t uint(const Value& v, std::size_t line, const std::string& key) {
  if (v.kind != Value::Kind::Int || v.i < 0) fail(line, key + " must be a non-negative integer");
  return static_cast<std::uint64_t>(v.i);
}

std::string string(const Value& v, std::size_t line, const std::string& key) {
  if (v.kind != Value::Kind::String) fail(line, key + " must be a string");
  return v.s;
}

std::uint64_t at_ms(const Table& t, std::size_t header_line) {
  if (auto it = t.find("at_ms"); it != t.end()) return uint(it->second.first, it->second.second, "at_ms");
  if (auto it = t.find("at_s"); it != t.end()) {
    auto s = number(it->second.first, it->second.second, "at_s");
    if (s < 0) fail(it->second.second, "at_s must not be negative");
    return static_cast<std::uint64_t>(s * 1000.0 + 0.5);
  }
  fail(header_line, "entry needs at_s or at_ms");
}

void apply_sim(SimConfig& c, const Table& t) {
  for (const auto& [key, entry] : t) {
    const auto& [v, line] = entry;
    if (key == "seed") {
      c.seed = uint(v, line, key);
    } else if (key == "nodes") {
      c.node_count = static_cast<std::uint32_t>(uint(v, line, key));
      if (c.node_count == 0) fail(line, "nodes must be at least 1");
    } else if (key == "latency_ms") {
      if (v.kind != Value::Kind::Array || v.items.size() != 2) fail(line, "latency_ms must be [min, max]");
      c.latency_min_ms = uint(v.items[0], line, key);
      c.latency_max_ms = uint(v.items[1], line, key);
      if (c.latency_max_ms < c.latency_min_ms) fail(line, "latency_ms max below min");
    } else if (key == "drop_probability") {
      c.drop_probability = number(v, line, key);
      if (c.drop_probability < 0 || c.drop_probability > 1) fail(line, "drop_probability outside [0, 1]");
    } else if (key == "duration_s") {
      c.duration_s = uint(v, line, key);
    } else if (key == "registrar") {
      c.registrar = static_cast<std::uint32_t>(uint(v, line, key));
    } else if (key == "join_spacing_ms") {
      c.join_spacing_ms = uint(v, line, key);
    } else if (key == "chunk_size") {
      c.node.dag.chunk_size = uint(v, line, key);
      if (c.node.dag.chunk_size == 0) fail(line, "chunk_size must be positive");
    } else if (key == "difficulty") {
      c.node.ledger.difficulty = static_cast<std::uint32_t>(uint(v, line, key));
    } else if (key == "k") {
      c.node.dht.k = uint(v, line, key);
    } else if (key == "alpha") {
      c.node.dht.alpha = uint(v, line, key);
    } else if (key == "rpc_timeout_ms") {
      c.node.dht.rpc_timeout_ms = uint(v, line, key);
    } else if (key == "want_timeout_ms") {
      c.node.exchange.want_timeout_ms = uint(v, line, key);
    } else if (key == "flush_ms") {
      c.node.ledger.flush_ms = uint(v, line, key);
    } else {
      fail(line, "unknown [sim] key '" + key + "'");
    }
  }
  if (c.registrar >= c.node_count) throw Error(Errc::ScriptError, "registrar index outside node range");
}

ChurnEvent to_churn(const Table& t, std::size_t header_line) {
  ChurnEvent e;
  e.at_ms = at_ms(t, header_line);
  for (const auto& [key, entry] : t) {
    const auto& [v, line] = entry;
    if (key == "node") {
      e.node = static_cast<std::uint32_t>(uint(v, line, key));
    } else if (key == "action") {
      auto a = string(v, line, key);
      if (a == "join") {
        e.action = ChurnEvent::Action::Join;
      } else if (a == "leave") {
        e.action = ChurnEvent::Action::Leave;
      } else {
        fail(line, "churn action must be join or leave");
      }
    } else if (key != "at_s" && key != "at_ms") {
      fail(line, "unknown [[churn]] key '" + key + "'");
    }
  }
  if (!t.count("node") || !t.count("action")) fail(header_line, "churn entry needs node and action");
  return e;
}

ScriptAction to_action(const Table& t, std::size_t header_line) {
  ScriptAction a;
  a.at_ms = at_ms(t, header_line);
  for (const auto& [key, entry] : t) {
    const auto& [v, line] = entry;
    if (key == "op") {
      a.op = string(v, line, key);
    } else if (key == "node") {
      a.node = static_cast<std::uint32_t>(uint(v, line, key));
    } else if (key == "file") {
      a.file = string(v, line, key);
    } else if (key == "base") {
      a.base = string(v, line, key);
    } else if (key == "size") {
      a.size = uint(v, line, key);
    } else if (key == "publisher") {
      a.publisher = static_cast<std::uint32_t>(uint(v, line, key));
    } else if (key == "target") {
      a.target = string(v, line, key);
    } else if (key == "on") {
      if (v.kind != Value::Kind::Bool) fail(line, "on must be true or false");
      a.flag = v.b;
    } else if (key == "groups") {
      if (v.kind != Value::Kind::Array) fail(line, "groups must be an array of arrays");
      for (const auto& g : v.items) {
        if (g.kind != Value::Kind::Array) fail(line, "groups must be an array of arrays");
        auto& group = a.groups.emplace_back();
        for (const auto& n : g.items) group.push_back(static_cast<std::uint32_t>(uint(n, line, key)));
      }
    } else if (key != "at_s" && key != "at_ms") {
      fail(line, "unknown [[action]] key '" + key + "'");
    }
  }
  if (a.op.empty()) fail(header_line, "action needs an op");
  return a;
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  Scenario sc;
  enum class Section { None, Sim, Churn, Action } section = Section::None;
  Table sim_table;
  Table current;
  std::size_t header_line = 0;
  bool seen_sim = false;

  auto close = [&] {
    if (section == Section::Churn) sc.config.churn.push_back(to_churn(current, header_line));
    if (section == Section::Action) sc.script.push_back(to_action(current, header_line));
    current.clear();
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      close();
      header_line = line_no;
      if (line == "[sim]") {
        if (seen_sim) fail(line_no, "duplicate [sim] table");
        seen_sim = true;
        section = Section::Sim;
      } else if (line == "[[churn]]") {
        section = Section::Churn;
      } else if (line == "[[action]]") {
        section = Section::Action;
      } else {
        fail(line_no, "unknown table " + line);
      }
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) fail(line_no, "missing key");
    if (section == Section::None) fail(line_no, "key outside of a table");
    auto value = ValueParser(std::string_view(line).substr(eq + 1), line_no).parse_all();
    auto& table = section == Section::Sim ? sim_table : current;
    if (!table.emplace(key, std::make_pair(std::move(value), line_no)).second) {
      fail(line_no, "duplicate key '" + key + "'");
    }
  }
  close();
  apply_sim(sc.config, sim_table);
  for (const auto& c : sc.config.churn) {
    if (c.node >= sc.config.node_count) throw Error(Errc::ScriptError, "churn node outside node range");
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ScriptError, "cannot read scenario " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace cafs::sim
