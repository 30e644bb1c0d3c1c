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

#include "lmbsim/fabric_manager.hpp"

namespace lmbsim {

FabricManager::FabricManager(Expander& expander,
                             std::uint64_t block_size_bytes,
                             std::uint64_t host_hpa_base,
                             std::uint64_t host_hpa_stride)
    : expander_(expander),
      block_size_(block_size_bytes),
      hpa_base_(host_hpa_base),
      hpa_stride_(host_hpa_stride),
      total_bytes_(expander.provisioned_bytes()) {
  if (block_size_ == 0 || block_size_ % kPageSize != 0) {
    throw ExpanderError("fm: block size must be a multiple of the page size");
  }
  std::uint64_t n_blocks = total_bytes_ / block_size_;
  for (std::uint64_t i = 0; i < n_blocks; ++i) {
    free_slots_.insert(i);
  }
  ledger_.total_bytes = total_bytes_;
}

std::optional<MemoryBlock> FabricManager::grant_block(NodeId host) {
  if (free_slots_.empty()) {
    return std::nullopt;
  }
  std::uint64_t slot = *free_slots_.begin();
  free_slots_.erase(free_slots_.begin());
  std::uint64_t dpa = slot * block_size_;
  MemoryBlock blk{next_block_id_++, host, host_hpa_base(host) + dpa, dpa,
                  block_size_};
  expander_.map_window(
      DecoderEntry{blk.hpa_base, blk.dpa_base, blk.size_bytes, host});
  blocks_.emplace(blk.block_id, blk);
  ledger_.granted_bytes += block_size_;
  ledger_.per_host[host] += block_size_;
  return blk;
}

FmStatus FabricManager::release_block(NodeId host, std::uint64_t block_id) {
  auto it = blocks_.find(block_id);
  if (it == blocks_.end()) {
    return FmStatus::ProtocolError;  // unknown or already released
  }
  if (it->second.host != host) {
    return FmStatus::ProtocolError;
  }
  const MemoryBlock& blk = it->second;
  expander_.unmap_window(blk.hpa_base);
  free_slots_.insert(blk.dpa_base / block_size_);
  ledger_.granted_bytes -= blk.size_bytes;
  auto ph = ledger_.per_host.find(host);
  ph->second -= blk.size_bytes;
  if (ph->second == 0) {
    ledger_.per_host.erase(ph);
  }
  blocks_.erase(it);
  return FmStatus::Ok;
}

CapacityLedger FabricManager::query_capacity() const { return ledger_; }

std::vector<MemoryBlock> FabricManager::block_dump() const {
  std::vector<MemoryBlock> out;
  out.reserve(blocks_.size());
  for (const auto& [id, blk] : blocks_) {
    out.push_back(blk);
  }
  return out;
}

}  // namespace lmbsim
