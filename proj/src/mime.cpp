#include <algorithm>
#include <array>
#include <cctype>
#include <string>

#include "cafs/node.hpp"

namespace cafs {
namespace {

struct Ext {
  std::string_view ext;
  std::string_view type;
};

constexpr std::array kExtensions{
    Ext{"txt", "text/plain"},         Ext{"md", "text/markdown"},       Ext{"csv", "text/csv"},
    Ext{"html", "text/html"},         Ext{"htm", "text/html"},          Ext{"css", "text/css"},
    Ext{"js", "text/javascript"},     Ext{"json", "application/json"},  Ext{"xml", "application/xml"},
    Ext{"pdf", "application/pdf"},    Ext{"zip", "application/zip"},    Ext{"gz", "application/gzip"},
    Ext{"tar", "application/x-tar"},  Ext{"png", "image/png"},          Ext{"jpg", "image/jpeg"},
    Ext{"jpeg", "image/jpeg"},        Ext{"gif", "image/gif"},          Ext{"svg", "image/svg+xml"},
    Ext{"mp3", "audio/mpeg"},         Ext{"wav", "audio/wav"},          Ext{"mp4", "video/mp4"},
    Ext{"webm", "video/webm"},
};

struct Magic {
  std::string_view prefix;
  std::string_view type;
};

const std::array kMagic{
    Magic{"\x89PNG\r\n\x1a\n", "image/png"},
    Magic{"\xff\xd8\xff", "image/jpeg"},
    Magic{"GIF87a", "image/gif"},
    Magic{"GIF89a", "image/gif"},
    Magic{"%PDF-", "application/pdf"},
    Magic{std::string_view("PK\x03\x04", 4), "application/zip"},
    Magic{"\x1f\x8b", "application/gzip"},
    Magic{"ID3", "audio/mpeg"},
};

}  // namespace

std::string sniff_file_type(std::string_view name, ByteView head) {
  auto dot = name.rfind('.');
  auto slash = name.find_last_of("/\\");
  if (dot != std::string_view::npos && (slash == std::string_view::npos || dot > slash)) {
    std::string ext(name.substr(dot + 1));
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& e : kExtensions) {
      if (e.ext == ext) return std::string(e.type);
    }
  }
  std::string_view h(reinterpret_cast<const char*>(head.data()), head.size());
  for (const auto& m : kMagic) {
    if (h.substr(0, m.prefix.size()) == m.prefix) return std::string(m.type);
  }
  return "application/octet-stream";
}

}  // namespace cafs
