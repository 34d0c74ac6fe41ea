#include "cafs/bytes.hpp"

#include <sodium.h>

namespace cafs {

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(Errc::Malformed, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::Malformed, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

std::string base64_encode(ByteView data) {
  constexpr int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_ENCODED_LEN(data.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), data.data(), data.size(), variant);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

Bytes base64_decode(std::string_view text) {
  Bytes out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw Error(Errc::Malformed, "invalid base64");
  }
  out.resize(len);
  return out;
}

void Writer::str16(std::string_view s) {
  if (s.size() > 0xffff) throw Error(Errc::InvalidArgument, "string too long for u16 prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  raw(as_bytes(s));
}

void Writer::str32(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(as_bytes(s));
}

void Writer::bytes32(ByteView v) {
  u32(static_cast<std::uint32_t>(v.size()));
  raw(v);
}

ByteView Reader::raw(std::size_t n) {
  if (remaining() < n) throw Error(Errc::Malformed, "truncated input");
  auto out = in_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string Reader::str16(std::size_t max_len) {
  auto n = u16();
  if (n > max_len) throw Error(Errc::Malformed, "string field too long");
  auto v = raw(n);
  return {v.begin(), v.end()};
}

std::string Reader::str32(std::size_t max_len) {
  auto n = u32();
  if (n > max_len) throw Error(Errc::Malformed, "string field too long");
  auto v = raw(n);
  return {v.begin(), v.end()};
}

Bytes Reader::bytes32(std::size_t max_len) {
  auto n = u32();
  if (n > max_len) throw Error(Errc::Malformed, "byte field too long");
  auto v = raw(n);
  return {v.begin(), v.end()};
}

void Reader::expect_done() const {
  if (!done()) throw Error(Errc::Malformed, "trailing bytes");
}

std::uint64_t Reader::be(std::size_t width) {
  auto v = raw(width);
  std::uint64_t out = 0;
  for (auto b : v) out = out << 8 | b;
  return out;
}

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidBase58: return "InvalidBase58";
    case Errc::WrongLength: return "WrongLength";
    case Errc::WrongCodec: return "WrongCodec";
    case Errc::TooManyLinks: return "TooManyLinks";
    case Errc::OversizedLeaf: return "OversizedLeaf";
    case Errc::MissingBlock: return "MissingBlock";
    case Errc::Malformed: return "Malformed";
    case Errc::IoFailure: return "IoFailure";
    case Errc::NoPeers: return "NoPeers";
    case Errc::NotFound: return "NotFound";
    case Errc::ValueTooLarge: return "ValueTooLarge";
    case Errc::Rejected: return "Rejected";
    case Errc::Unretrievable: return "Unretrievable";
    case Errc::EmptyList: return "EmptyList";
    case Errc::DuplicatePending: return "DuplicatePending";
    case Errc::SameContent: return "SameContent";
    case Errc::Expired: return "Expired";
    case Errc::BadSignature: return "BadSignature";
    case Errc::AddrInUse: return "AddrInUse";
    case Errc::BadKeyPassphrase: return "BadKeyPassphrase";
    case Errc::LedgerValidationFailed: return "LedgerValidationFailed";
    case Errc::Timeout: return "Timeout";
    case Errc::NodeLeft: return "NodeLeft";
    case Errc::ScriptError: return "ScriptError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace cafs
