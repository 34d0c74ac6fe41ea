#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cafs {

struct DaemonConfig {
  std::string listen_addr = "127.0.0.1:4001";
  std::string api_addr = "127.0.0.1:5101";
  std::vector<std::string> bootstrap;
  std::filesystem::path key_file = "identity.key";
  std::filesystem::path data_dir = "data";
  unsigned difficulty = 12;
  std::size_t chunk_size = 262144;
  bool registrar = false;
  // Peer address of the mining node; defaults to the first bootstrap entry.
  std::string registrar_addr;
  std::uint64_t flush_ms = 5000;
};

// key = value lines, '#' comments. Relative paths resolve against base_dir.
// Lists accept "a, b", ["a", "b"] or a repeated key.
DaemonConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
DaemonConfig load_config(const std::filesystem::path& path);

// "host:port" split; throws InvalidArgument.
std::pair<std::string, std::uint16_t> split_host_port(const std::string& addr);

}  // namespace cafs
