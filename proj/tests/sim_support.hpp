#pragma once

#include "doctest.h"

#include "cafs/simnet.hpp"

namespace cafs::test {

inline sim::SimConfig sim_config(std::uint32_t nodes, std::uint64_t seed = 1) {
  sim::SimConfig c;
  c.seed = seed;
  c.node_count = nodes;
  c.join_spacing_ms = 50;
  c.node.ledger.difficulty = 8;
  return c;
}

// Started simulator with every initial join finished.
inline std::unique_ptr<sim::Simulator> started(const sim::SimConfig& cfg) {
  auto s = std::make_unique<sim::Simulator>(cfg);
  s->start();
  REQUIRE(s->settle(s->now() + 600000));
  return s;
}

template <typename T, typename Op>
Outcome<T> run(sim::Simulator& s, Op&& op, std::uint64_t max_wait_ms = 600000) {
  return s.await<T>([&](Callback<T> cb) { op(std::move(cb)); }, max_wait_ms);
}

inline NodeId random_key(std::mt19937_64& rng) {
  NodeId id;
  for (auto& b : id.bytes) b = static_cast<std::uint8_t>(rng());
  return id;
}

}  // namespace cafs::test
