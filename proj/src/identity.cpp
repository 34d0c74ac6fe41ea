#include "cafs/identity.hpp"

#include <sodium.h>

#include <fstream>
#include "json.hpp"

namespace cafs {

Keypair Keypair::generate() {
  sha256({});  // forces sodium_init
  Hash256 seed;
  randombytes_buf(seed.data(), seed.size());
  return from_seed(seed);
}

Keypair Keypair::from_seed(const Hash256& seed) {
  sha256({});
  Keypair kp;
  kp.seed_ = seed;
  crypto_sign_seed_keypair(kp.public_key_.data(), kp.secret_key_.data(), seed.data());
  return kp;
}

Signature Keypair::sign(ByteView message) const {
  Signature sig;
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_key_.data());
  return sig;
}

bool verify_signature(const PublicKey& key, ByteView message, const Signature& sig) {
  sha256({});
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(), key.data()) == 0;
}

std::string fingerprint(const PublicKey& key) { return base58_encode(sha256(key)); }

void save_key_file(const std::filesystem::path& path, const Keypair& kp, std::string_view passphrase) {
  std::array<std::uint8_t, crypto_pwhash_SALTBYTES> salt;
  std::array<std::uint8_t, crypto_secretbox_NONCEBYTES> nonce;
  randombytes_buf(salt.data(), salt.size());
  randombytes_buf(nonce.data(), nonce.size());

  std::array<std::uint8_t, crypto_secretbox_KEYBYTES> key;
  if (crypto_pwhash(key.data(), key.size(), passphrase.data(), passphrase.size(), salt.data(),
                    crypto_pwhash_OPSLIMIT_INTERACTIVE, crypto_pwhash_MEMLIMIT_INTERACTIVE,
                    crypto_pwhash_ALG_ARGON2ID13) != 0) {
    throw Error(Errc::IoFailure, "key derivation ran out of memory");
  }
  Bytes sealed(kp.seed().size() + crypto_secretbox_MACBYTES);
  crypto_secretbox_easy(sealed.data(), kp.seed().data(), kp.seed().size(), nonce.data(), key.data());
  sodium_memzero(key.data(), key.size());

  nlohmann::json doc = {
      {"version", 1},
      {"public_key", base64_encode(kp.public_key())},
      {"salt", base64_encode(salt)},
      {"nonce", base64_encode(nonce)},
      {"sealed_seed", base64_encode(sealed)},
  };
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << doc.dump(2) << "\n";
  if (!out) throw Error(Errc::IoFailure, "cannot write key file " + path.string());
  std::filesystem::permissions(path, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
}

Keypair load_key_file(const std::filesystem::path& path, std::string_view passphrase) {
  sha256({});
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot read key file " + path.string());
  nlohmann::json doc;
  Bytes salt, nonce, sealed, public_key;
  try {
    doc = nlohmann::json::parse(in);
    salt = base64_decode(doc.at("salt").get<std::string>());
    nonce = base64_decode(doc.at("nonce").get<std::string>());
    sealed = base64_decode(doc.at("sealed_seed").get<std::string>());
    public_key = base64_decode(doc.at("public_key").get<std::string>());
  } catch (const std::exception& e) {
    throw Error(Errc::Malformed, std::string("bad key file: ") + e.what());
  }
  if (salt.size() != crypto_pwhash_SALTBYTES || nonce.size() != crypto_secretbox_NONCEBYTES ||
      sealed.size() != 32 + crypto_secretbox_MACBYTES) {
    throw Error(Errc::Malformed, "bad key file field sizes");
  }
  std::array<std::uint8_t, crypto_secretbox_KEYBYTES> key;
  if (crypto_pwhash(key.data(), key.size(), passphrase.data(), passphrase.size(), salt.data(),
                    crypto_pwhash_OPSLIMIT_INTERACTIVE, crypto_pwhash_MEMLIMIT_INTERACTIVE,
                    crypto_pwhash_ALG_ARGON2ID13) != 0) {
    throw Error(Errc::IoFailure, "key derivation ran out of memory");
  }
  Hash256 seed;
  int rc = crypto_secretbox_open_easy(seed.data(), sealed.data(), sealed.size(), nonce.data(), key.data());
  sodium_memzero(key.data(), key.size());
  if (rc != 0) throw Error(Errc::BadKeyPassphrase, "passphrase does not open " + path.string());
  auto kp = Keypair::from_seed(seed);
  if (!std::equal(public_key.begin(), public_key.end(), kp.public_key().begin())) {
    throw Error(Errc::Malformed, "key file public key does not match sealed seed");
  }
  return kp;
}

}  // namespace cafs
