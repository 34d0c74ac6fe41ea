#pragma once

#include <map>
#include <random>
#include <vector>

#include "cafs/runtime.hpp"

namespace cafs::test {

/// Hand-cranked runtime for single-component tests: time moves only when
/// advance() is called, sent frames pile up in `sent`.
class ManualRuntime final : public Runtime {
 public:
  explicit ManualRuntime(std::uint64_t start_ms = 1528761600000ull, std::uint64_t seed = 1)
      : now_(start_ms), rng_(seed) {}

  std::uint64_t now_ms() const override { return now_; }
  TimerId schedule(std::uint64_t delay_ms, std::function<void()> fn) override {
    auto id = next_++;
    timers_.emplace(std::make_pair(now_ + delay_ms, id), std::move(fn));
    return id;
  }
  void cancel(TimerId id) override {
    for (auto it = timers_.begin(); it != timers_.end(); ++it) {
      if (it->first.second == id) {
        timers_.erase(it);
        return;
      }
    }
  }
  void send(const std::string& address, Bytes frame) override { sent.emplace_back(address, std::move(frame)); }
  std::mt19937_64& rng() override { return rng_; }

  void advance(std::uint64_t ms) {
    auto until = now_ + ms;
    while (!timers_.empty() && timers_.begin()->first.first <= until) {
      auto it = timers_.begin();
      now_ = it->first.first;
      auto fn = std::move(it->second);
      timers_.erase(it);
      fn();
    }
    now_ = until;
  }
  std::size_t pending_timers() const { return timers_.size(); }

  std::vector<std::pair<std::string, Bytes>> sent;

 private:
  std::uint64_t now_;
  std::mt19937_64 rng_;
  TimerId next_ = 1;
  std::map<std::pair<std::uint64_t, TimerId>, std::function<void()>> timers_;
};

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

}  // namespace cafs::test
