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

#ifndef LMBSIM_FABRIC_MANAGER_HPP_
#define LMBSIM_FABRIC_MANAGER_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "lmbsim/expander.hpp"
#include "lmbsim/fabric.hpp"

namespace lmbsim {

inline constexpr std::uint64_t kDefaultBlockSize = 256ull << 20;  // 256 MiB
inline constexpr std::uint64_t kDefaultHostHpaBase = 0x1000'0000'0000ull;
inline constexpr std::uint64_t kDefaultHostHpaStride = 1ull << 40;  // 1 TiB

/// A fixed-size span of expander memory granted to one host.
struct MemoryBlock {
  std::uint64_t block_id;
  NodeId host;
  std::uint64_t hpa_base;
  std::uint64_t dpa_base;
  std::uint64_t size_bytes;
};

struct CapacityLedger {
  std::uint64_t total_bytes = 0;
  std::uint64_t granted_bytes = 0;
  std::map<NodeId, std::uint64_t> per_host;
};

enum class FmStatus { Ok, OutOfCapacity, ProtocolError };

/// Fabric manager: grants and reclaims fixed-size expander blocks to hosts,
/// installs the matching decoder windows, and tracks capacity. Control-path
/// commands carry no latency; only the data path does. Block placement is
/// lowest-free-DPA-first; a host's HPA window for a block is its per-host
/// base (host_hpa_base + node_id * stride) plus the block's DPA.
class FabricManager {
 public:
  FabricManager(Expander& expander,
                std::uint64_t block_size_bytes = kDefaultBlockSize,
                std::uint64_t host_hpa_base = kDefaultHostHpaBase,
                std::uint64_t host_hpa_stride = kDefaultHostHpaStride);

  std::optional<MemoryBlock> grant_block(NodeId host);  // nullopt: no capacity
  FmStatus release_block(NodeId host, std::uint64_t block_id);

  CapacityLedger query_capacity() const;

  std::uint64_t block_size() const { return block_size_; }
  std::uint64_t host_hpa_base(NodeId host) const {
    return hpa_base_ + static_cast<std::uint64_t>(host) * hpa_stride_;
  }
  std::vector<MemoryBlock> block_dump() const;
  const std::set<std::uint64_t>& free_slots() const { return free_slots_; }

 private:
  Expander& expander_;
  std::uint64_t block_size_;
  std::uint64_t hpa_base_;
  std::uint64_t hpa_stride_;
  std::uint64_t total_bytes_;
  std::set<std::uint64_t> free_slots_;  // block indices, lowest first
  std::map<std::uint64_t, MemoryBlock> blocks_;  // by block_id
  std::uint64_t next_block_id_ = 1;
  CapacityLedger ledger_;
};

}  // namespace lmbsim

#endif  // LMBSIM_FABRIC_MANAGER_HPP_
