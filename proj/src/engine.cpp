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

#include "lmbsim/engine.hpp"

#include <algorithm>
#include <cassert>

namespace lmbsim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

Rng Rng::fork(std::string_view label) const {
  return Rng(splitmix64(seed_ ^ fnv1a(label)));
}

std::uint64_t Rng::next_u64() { return gen_(); }

std::uint64_t Rng::uniform(std::uint64_t bound) {
  if (bound == 0) {
    return 0;
  }
  // Lemire multiply-shift with rejection; exact and platform-stable.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
  auto lo = static_cast<std::uint64_t>(m);
  if (lo < bound) {
    std::uint64_t t = -bound % bound;
    while (lo < t) {
      m = static_cast<unsigned __int128>(next_u64()) * bound;
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

bool Rng::bernoulli(double p) {
  if (p <= 0.0) {
    return false;
  }
  if (p >= 1.0) {
    return true;
  }
  return uniform01() < p;
}

Engine::Engine(SimTime horizon) : horizon_(horizon) {}

Engine::EventId Engine::schedule(SimTime delay, Action action,
                                 const char* kind) {
  if (delay > horizon_ - now_) {
    throw SimError("schedule: event at now=" + std::to_string(now_) +
                   " + delay=" + std::to_string(delay) +
                   " exceeds simulation horizon");
  }
  Entry e{now_ + delay, next_seq_++, std::move(action), kind};
  heap_.push_back(std::move(e));
  std::push_heap(heap_.begin(), heap_.end(), heap_after);
  return EventId{next_seq_ - 1};
}

bool Engine::cancel(EventId id) {
  if (id.seq >= next_seq_) {
    return false;
  }
  return cancelled_.insert(id.seq).second;
}

SimStats Engine::run_to_completion() {
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), heap_after);
    Entry e = std::move(heap_.back());
    heap_.pop_back();
    if (cancelled_.erase(e.seq) > 0) {
      continue;
    }
    assert(e.fire_at >= now_);
    now_ = e.fire_at;
    ++dispatched_;
    try {
      e.action();
    } catch (const std::exception& ex) {
      throw SimError("model error at t=" + std::to_string(now_) + "ns in '" +
                     (e.kind && *e.kind ? e.kind : "event") +
                     "': " + ex.what());
    }
  }
  return SimStats{dispatched_, now_};
}

}  // namespace lmbsim
