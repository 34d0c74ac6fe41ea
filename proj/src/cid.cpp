#include "cafs/cid.hpp"

#include <sodium.h>

#include <algorithm>

namespace cafs {
namespace {

constexpr std::string_view kAlphabet = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";

struct SodiumInit {
  SodiumInit() {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  }
};

void ensure_sodium() { static SodiumInit init; }

}  // namespace

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

Sha256::Sha256() {
  ensure_sodium();
  crypto_hash_sha256_init(reinterpret_cast<crypto_hash_sha256_state*>(state_));
}

void Sha256::update(ByteView data) {
  crypto_hash_sha256_update(reinterpret_cast<crypto_hash_sha256_state*>(state_), data.data(),
                            data.size());
}

Hash256 Sha256::finish() {
  Hash256 out;
  crypto_hash_sha256_final(reinterpret_cast<crypto_hash_sha256_state*>(state_), out.data());
  return out;
}

Hash256 sha256(ByteView data) {
  ensure_sodium();
  Hash256 out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

std::string base58_encode(ByteView data) {
  std::size_t zeros = 0;
  while (zeros < data.size() && data[zeros] == 0) ++zeros;

  // log(256)/log(58) ~ 1.366
  std::vector<std::uint8_t> digits((data.size() - zeros) * 138 / 100 + 1, 0);
  std::size_t used = 0;
  for (std::size_t i = zeros; i < data.size(); ++i) {
    int carry = data[i];
    std::size_t j = 0;
    for (auto it = digits.rbegin(); (carry != 0 || j < used) && it != digits.rend(); ++it, ++j) {
      carry += 256 * (*it);
      *it = static_cast<std::uint8_t>(carry % 58);
      carry /= 58;
    }
    used = j;
  }
  auto it = std::find_if(digits.begin(), digits.end(), [](auto d) { return d != 0; });

  std::string out(zeros, '1');
  for (; it != digits.end(); ++it) out.push_back(kAlphabet[*it]);
  return out;
}

Bytes base58_decode(std::string_view text) {
  std::size_t zeros = 0;
  while (zeros < text.size() && text[zeros] == '1') ++zeros;

  std::vector<std::uint8_t> bytes((text.size() - zeros) * 733 / 1000 + 1, 0);
  std::size_t used = 0;
  for (std::size_t i = zeros; i < text.size(); ++i) {
    auto pos = kAlphabet.find(text[i]);
    if (pos == std::string_view::npos) {
      throw Error(Errc::InvalidBase58, std::string("invalid base58 character '") + text[i] + "'");
    }
    int carry = static_cast<int>(pos);
    std::size_t j = 0;
    for (auto it = bytes.rbegin(); (carry != 0 || j < used) && it != bytes.rend(); ++it, ++j) {
      carry += 58 * (*it);
      *it = static_cast<std::uint8_t>(carry % 256);
      carry /= 256;
    }
    used = j;
  }
  auto it = std::find_if(bytes.begin(), bytes.end(), [](auto b) { return b != 0; });

  Bytes out(zeros, 0);
  out.insert(out.end(), it, bytes.end());
  return out;
}

Cid Cid::from_binary(ByteView bin) {
  if (bin.size() != kBinarySize) {
    throw Error(Errc::WrongLength, "CID must be 34 bytes, got " + std::to_string(bin.size()));
  }
  if (bin[0] != kHashCode || bin[1] != kDigestLength) {
    throw Error(Errc::WrongCodec, "CID prefix is not sha2-256/32");
  }
  Hash256 digest;
  std::copy(bin.begin() + 2, bin.end(), digest.begin());
  return Cid(digest);
}

Cid Cid::from_text(std::string_view text) { return from_binary(base58_decode(text)); }

std::array<std::uint8_t, Cid::kBinarySize> Cid::binary() const {
  std::array<std::uint8_t, kBinarySize> out;
  out[0] = kHashCode;
  out[1] = kDigestLength;
  std::copy(digest_.begin(), digest_.end(), out.begin() + 2);
  return out;
}

std::string Cid::text() const { return base58_encode(binary()); }

}  // namespace cafs
