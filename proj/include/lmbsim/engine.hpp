// Copyright 2026 The lmbsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LMBSIM_ENGINE_HPP_
#define LMBSIM_ENGINE_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace lmbsim {

/// Virtual time in integer nanoseconds since simulation start.
using SimTime = std::uint64_t;

class SimError : public std::runtime_error {
 public:
  explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

/// Seeded deterministic PRNG with label-stable substreams. Forking by label
/// keeps one consumer's draw count from perturbing another's sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng fork(std::string_view label) const;

  std::uint64_t next_u64();
  /// Unbiased draw in [0, bound); bound 0 returns 0.
  std::uint64_t uniform(std::uint64_t bound);
  double uniform01();
  bool bernoulli(double p);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

struct SimStats {
  std::uint64_t events_dispatched = 0;
  SimTime final_time = 0;
};

/// Single-threaded discrete-event engine. Events with equal fire time
/// dispatch in scheduling order (FIFO tie-break by sequence number).
class Engine {
 public:
  using Action = std::function<void()>;

  struct EventId {
    std::uint64_t seq = 0;
  };

  explicit Engine(SimTime horizon = std::numeric_limits<std::int64_t>::max());

  SimTime now() const { return now_; }

  /// Enqueue an action at now + delay. `kind` tags the event for error
  /// context only. Throws SimError past the configured horizon.
  EventId schedule(SimTime delay, Action action, const char* kind = "");

  /// Returns false if the event already fired or was cancelled before.
  bool cancel(EventId id);

  /// Dispatch everything in (fire_at, seq) order. The clock ends at the
  /// last dispatched event's fire time (0 if the queue was empty).
  SimStats run_to_completion();

  std::uint64_t scheduled_count() const { return next_seq_; }
  std::uint64_t dispatched_count() const { return dispatched_; }

 private:
  struct Entry {
    SimTime fire_at;
    std::uint64_t seq;
    Action action;
    const char* kind;
  };
  // min-heap on (fire_at, seq)
  static bool heap_after(const Entry& a, const Entry& b) {
    return a.fire_at != b.fire_at ? a.fire_at > b.fire_at : a.seq > b.seq;
  }

  std::vector<Entry> heap_;
  std::unordered_set<std::uint64_t> cancelled_;
  SimTime now_ = 0;
  SimTime horizon_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
};

}  // namespace lmbsim

#endif  // LMBSIM_ENGINE_HPP_
