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

#ifndef LMBSIM_LMB_HPP_
#define LMBSIM_LMB_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "lmbsim/engine.hpp"
#include "lmbsim/expander.hpp"
#include "lmbsim/fabric.hpp"
#include "lmbsim/fabric_manager.hpp"

namespace lmbsim {

enum class LmbStatus {
  Ok,
  NotInitialized,
  InvalidArgument,
  OutOfCapacity,
  Fragmented,
  UnknownMmid,
  PermissionError,
  WrongDeviceKind,
  IommuFault,
  AccessFault,
  DecodeFault,
};

const char* to_string(LmbStatus status);

/// Bus-address window of one PCIe device, affine onto an HPA range.
struct IommuMapping {
  NodeId device;
  std::uint64_t bus_base;
  std::uint64_t hpa_base;
  std::uint64_t size_bytes;
};

/// An allocated span of expander memory: owner, sharers and the per-device
/// address mappings that let each accessor reach it.
struct MemRegion {
  std::uint64_t mmid = 0;
  NodeId host = 0;   // managing host (allocator metadata lives here)
  NodeId owner = 0;
  std::vector<NodeId> sharers;  // excludes owner, in share order
  std::uint64_t hpa_base = 0;
  std::uint64_t size_bytes = 0;
  std::uint64_t dpa_base = 0;
  std::vector<std::uint64_t> block_ids;  // >1 entries only for fused extents
  std::map<NodeId, std::uint64_t> bus_mappings;  // PCIe accessors -> bus base

  bool is_accessor(NodeId dev) const {
    if (dev == owner) {
      return true;
    }
    for (NodeId s : sharers) {
      if (s == dev) {
        return true;
      }
    }
    return false;
  }
};

struct PcieAllocResult {
  LmbStatus status = LmbStatus::Ok;
  std::uint64_t bus_addr = 0;
  std::uint64_t mmid = 0;
};

struct CxlAllocResult {
  LmbStatus status = LmbStatus::Ok;
  std::uint64_t hpa = 0;
  PbrId dpid{};
  std::uint64_t mmid = 0;
};

struct PcieShareResult {
  LmbStatus status = LmbStatus::Ok;
  std::uint64_t bus_addr = 0;
};

struct CxlShareResult {
  LmbStatus status = LmbStatus::Ok;
  std::uint64_t hpa = 0;
  PbrId dpid{};
};

struct DeviceAccess {
  LmbStatus status = LmbStatus::Ok;
  std::uint64_t latency_ns = 0;
  std::vector<std::uint8_t> data;  // reads
};

/// The LMB kernel module: unified alloc/free/share for PCIe and CXL devices,
/// sub-allocation of FM-granted blocks, mmid registry, IOMMU tables for the
/// PCIe path and SAT programming for the CXL path.
class LmbModule {
 public:
  LmbModule(Engine& engine, Topology& topo, FabricManager& fm,
            Expander& expander, LatencyModel latency, NodeId managing_host);

  /// Module load. Allocation before init fails (driver-load ordering).
  void init() { initialized_ = true; }
  bool initialized() const { return initialized_; }

  PcieAllocResult pcie_alloc(NodeId pcie_dev, std::uint64_t size);
  CxlAllocResult cxl_alloc(NodeId cxl_dev, std::uint64_t size);
  LmbStatus pcie_free(NodeId pcie_dev, std::uint64_t mmid);
  LmbStatus cxl_free(NodeId cxl_dev, std::uint64_t mmid);
  PcieShareResult pcie_share(NodeId pcie_dev, std::uint64_t mmid);
  CxlShareResult cxl_share(NodeId cxl_dev, std::uint64_t mmid);

  /// Data path: bus/HPA translation, access control, byte movement, and the
  /// per-access route latency the device's index model consumes.
  DeviceAccess device_write(NodeId dev, std::uint64_t addr,
                            std::span<const std::uint8_t> data);
  DeviceAccess device_read(NodeId dev, std::uint64_t addr, std::uint32_t len);
  /// Same translation and authorization as the data path but without byte
  /// movement; what the index models issue per L2P access.
  DeviceAccess index_access(NodeId dev, std::uint64_t addr, std::uint32_t len);

  const MemRegion* region(NodeId any_accessor_or_host_dev,
                          std::uint64_t mmid) const;
  std::vector<MemRegion> region_dump() const;
  std::vector<IommuMapping> iommu_dump(NodeId dev) const;
  std::uint64_t iommu_faults(NodeId dev) const;
  std::uint64_t total_iommu_faults() const;

  void set_trace(std::ostream* sink) { trace_ = sink; }

  /// Free intervals (offset, len) of every live block of a host, in grant
  /// order; test hook for the allocator oracle.
  std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>>
  free_map(NodeId host) const;

  void check_invariants() const;

 private:
  struct Block {
    std::uint64_t block_id;
    std::uint64_t hpa_base;
    std::uint64_t dpa_base;
    std::uint64_t size;
    std::map<std::uint64_t, std::uint64_t> free;  // offset -> len
    std::uint32_t live_regions = 0;
    bool fused = false;
  };

  struct Carved {
    LmbStatus status;
    std::uint64_t hpa = 0;
    std::uint64_t dpa = 0;
    std::vector<std::uint64_t> block_ids;
  };

  NodeId host_for(NodeId dev) const;
  Carved carve(NodeId host, std::uint64_t size);
  void return_interval(Block& blk, std::uint64_t offset, std::uint64_t len);
  void release_region_memory(const MemRegion& region);
  std::uint64_t alloc_bus_range(NodeId dev, std::uint64_t size);
  void install_access(MemRegion& region, NodeId dev);
  void remove_access(const MemRegion& region, NodeId dev);
  const IommuMapping* iommu_lookup(NodeId dev, std::uint64_t bus,
                                   std::uint32_t len) const;
  DeviceAccess access(NodeId dev, MemOp op, std::uint64_t addr,
                      std::uint32_t len, std::span<const std::uint8_t> data,
                      bool move_bytes);
  void trace_line(const char* api, NodeId dev, std::uint64_t size,
                  std::uint64_t mmid, LmbStatus status);

  Engine& engine_;
  Topology& topo_;
  FabricManager& fm_;
  Expander& expander_;
  LatencyModel latency_;
  NodeId managing_host_;
  bool initialized_ = false;

  std::map<NodeId, std::vector<Block>> blocks_;  // per host, grant order
  std::map<std::pair<NodeId, std::uint64_t>, MemRegion> regions_;
  std::map<NodeId, std::uint64_t> next_mmid_;  // per host, starts at 1
  std::map<NodeId, std::map<std::uint64_t, IommuMapping>> iommu_;
  std::map<NodeId, std::uint64_t> bus_cursor_;
  std::map<NodeId, std::uint64_t> iommu_faults_;
  std::ostream* trace_ = nullptr;
};

}  // namespace lmbsim

#endif  // LMBSIM_LMB_HPP_
