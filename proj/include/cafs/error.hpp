#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace cafs {

enum class Errc {
  InvalidBase58,
  WrongLength,
  WrongCodec,
  TooManyLinks,
  OversizedLeaf,
  MissingBlock,
  Malformed,
  IoFailure,
  NoPeers,
  NotFound,
  ValueTooLarge,
  Rejected,
  Unretrievable,
  EmptyList,
  DuplicatePending,
  SameContent,
  Expired,
  BadSignature,
  AddrInUse,
  BadKeyPassphrase,
  LedgerValidationFailed,
  Timeout,
  NodeLeft,
  ScriptError,
  InvalidArgument,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

// Value-or-error carried through asynchronous completions.
template <typename T>
class Outcome {
 public:
  Outcome(T value) : v_(std::move(value)) {}
  Outcome(Error err) : v_(std::move(err)) {}

  bool ok() const { return v_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() {
    if (!ok()) throw std::get<1>(v_);
    return std::get<0>(v_);
  }
  const T& value() const {
    if (!ok()) throw std::get<1>(v_);
    return std::get<0>(v_);
  }
  T& operator*() { return value(); }
  const T& operator*() const { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

  const Error& error() const { return std::get<1>(v_); }

 private:
  std::variant<T, Error> v_;
};

struct Unit {};

template <typename T>
using Callback = std::function<void(Outcome<T>)>;

}  // namespace cafs
