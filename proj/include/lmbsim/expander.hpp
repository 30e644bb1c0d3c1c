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

#ifndef LMBSIM_EXPANDER_HPP_
#define LMBSIM_EXPANDER_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "lmbsim/fabric.hpp"

namespace lmbsim {

inline constexpr std::uint64_t kPageSize = 4096;

class ExpanderError : public std::runtime_error {
 public:
  explicit ExpanderError(const std::string& what) : std::runtime_error(what) {}
};

enum class Media { Dram, Pm };

/// Device media partition: a contiguous DPA range with a media attribute.
struct Dmp {
  std::uint32_t dmp_id;
  Media media;
  std::uint64_t dpa_base;
  std::uint64_t size_bytes;
};

/// One HPA window decoded to a DPA range: dpa = dpa_base + (hpa - hpa_base).
struct DecoderEntry {
  std::uint64_t hpa_base;
  std::uint64_t dpa_base;
  std::uint64_t size_bytes;
  NodeId owner_host;
};

enum class MemOp { Read, Write };

/// A MemRd/MemWr against an HPA. The requester is either a CXL device or
/// host identified by SPID, or a host forwarding on behalf of a PCIe device
/// (SAT check bypassed, the host-side IOMMU already enforced isolation).
struct MemAccessRequest {
  MemOp op;
  std::uint64_t hpa;
  std::uint32_t len;  // 1..64 bytes
  std::optional<PbrId> spid;
  std::optional<NodeId> host;
  std::span<const std::uint8_t> data{};  // write payload
};

enum class AccessStatus { Ok, DecodeFault, AccessFault };

struct AccessResult {
  AccessStatus status = AccessStatus::Ok;
  std::uint64_t dpa = 0;
  std::vector<std::uint8_t> data;  // read payload
};

struct ExpanderFaults {
  std::uint64_t decode_faults = 0;
  std::map<std::uint16_t, std::uint64_t> access_faults_by_spid;
  std::uint64_t sat_remove_misses = 0;

  std::uint64_t total() const {
    std::uint64_t n = decode_faults + sat_remove_misses;
    for (const auto& [spid, c] : access_faults_by_spid) {
      n += c;
    }
    return n;
  }
};

/// GFAM memory expander: DMP-partitioned DPA space, HPA decoder, SPID access
/// table and a sparse page-granular backing store (zero-fill on first read).
class Expander {
 public:
  explicit Expander(std::uint64_t dpa_capacity_bytes);

  const Dmp& create_dmp(Media media, std::uint64_t size_bytes);

  void map_window(const DecoderEntry& entry);
  void unmap_window(std::uint64_t hpa_base);
  /// Affine HPA translation; nullopt when no decoder entry covers hpa.
  std::optional<std::uint64_t> hpa_to_dpa(std::uint64_t hpa) const;

  void sat_add(PbrId spid, std::uint64_t dpa_base, std::uint64_t size_bytes);
  /// Removing an absent entry is a no-op counted in sat_remove_misses.
  void sat_remove(PbrId spid, std::uint64_t dpa_base,
                  std::uint64_t size_bytes);
  bool sat_covers(PbrId spid, std::uint64_t dpa, std::uint64_t len) const;

  /// Decode + access-control decision without data movement. Counts faults.
  AccessResult authorize(const MemAccessRequest& req);
  /// Full data path: authorize, then persist (MemWr) or gather (MemRd).
  AccessResult handle(const MemAccessRequest& req);

  void set_pm_extra_ns(std::uint64_t ns) { pm_extra_ns_ = ns; }
  /// Extra media latency for accesses landing in a PM partition.
  std::uint64_t media_extra_ns(std::uint64_t dpa) const;

  std::uint64_t dpa_capacity() const { return capacity_; }
  std::uint64_t provisioned_bytes() const { return provisioned_; }
  const std::vector<Dmp>& dmps() const { return dmps_; }
  std::vector<DecoderEntry> decoder_dump() const;
  std::map<std::uint16_t, std::vector<std::pair<std::uint64_t, std::uint64_t>>>
  sat_dump() const;
  const ExpanderFaults& faults() const { return faults_; }
  std::uint64_t touched_pages() const { return pages_.size(); }

  /// Throws if DMPs or decoder windows overlap. Tests call this after
  /// every mutation burst.
  void check_invariants() const;

 private:
  void write_bytes(std::uint64_t dpa, std::span<const std::uint8_t> data);
  std::vector<std::uint8_t> read_bytes(std::uint64_t dpa, std::uint32_t len);

  std::uint64_t capacity_;
  std::uint64_t provisioned_ = 0;
  std::uint64_t pm_extra_ns_ = 0;
  std::vector<Dmp> dmps_;
  std::map<std::uint64_t, DecoderEntry> decoder_;  // keyed by hpa_base
  // spid -> set of (dpa_base, size)
  std::map<std::uint16_t, std::set<std::pair<std::uint64_t, std::uint64_t>>>
      sat_;
  std::unordered_map<std::uint64_t,
                     std::unique_ptr<std::array<std::uint8_t, kPageSize>>>
      pages_;
  ExpanderFaults faults_;
};

}  // namespace lmbsim

#endif  // LMBSIM_EXPANDER_HPP_
