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

#include "lmbsim/lmb.hpp"

#include <algorithm>
#include <cassert>
#include <ostream>

namespace lmbsim {

namespace {

constexpr std::uint64_t kBusSpaceStart = 0x10000;

std::uint64_t round_up_page(std::uint64_t v) {
  return (v + kPageSize - 1) / kPageSize * kPageSize;
}

}  // namespace

const char* to_string(LmbStatus status) {
  switch (status) {
    case LmbStatus::Ok:
      return "ok";
    case LmbStatus::NotInitialized:
      return "not-initialized";
    case LmbStatus::InvalidArgument:
      return "invalid-argument";
    case LmbStatus::OutOfCapacity:
      return "out-of-capacity";
    case LmbStatus::Fragmented:
      return "fragmented";
    case LmbStatus::UnknownMmid:
      return "unknown-mmid";
    case LmbStatus::PermissionError:
      return "permission-error";
    case LmbStatus::WrongDeviceKind:
      return "wrong-device-kind";
    case LmbStatus::IommuFault:
      return "iommu-fault";
    case LmbStatus::AccessFault:
      return "access-fault";
    case LmbStatus::DecodeFault:
      return "decode-fault";
  }
  return "?";
}

LmbModule::LmbModule(Engine& engine, Topology& topo, FabricManager& fm,
                     Expander& expander, LatencyModel latency,
                     NodeId managing_host)
    : engine_(engine),
      topo_(topo),
      fm_(fm),
      expander_(expander),
      latency_(latency),
      managing_host_(managing_host) {}

NodeId LmbModule::host_for(NodeId dev) const {
  switch (topo_.type(dev)) {
    case NodeType::PcieDevice:
      return topo_.host_of(dev);
    case NodeType::CxlDevice:
      return managing_host_;
    case NodeType::Host:
      return dev;
    default:
      return managing_host_;
  }
}

void LmbModule::trace_line(const char* api, NodeId dev, std::uint64_t size,
                           std::uint64_t mmid, LmbStatus status) {
  if (trace_ != nullptr) {
    *trace_ << engine_.now() << ',' << api << ',' << dev << ',' << size << ','
            << mmid << ',' << to_string(status) << '\n';
  }
}

LmbModule::Carved LmbModule::carve(NodeId host, std::uint64_t size) {
  std::uint64_t bsz = fm_.block_size();
  auto& blocks = blocks_[host];

  if (size <= bsz) {
    // first fit, blocks scanned in grant order
    for (Block& blk : blocks) {
      if (blk.fused) {
        continue;
      }
      for (auto it = blk.free.begin(); it != blk.free.end(); ++it) {
        if (it->second >= size) {
          std::uint64_t off = it->first;
          std::uint64_t len = it->second;
          blk.free.erase(it);
          if (len > size) {
            blk.free.emplace(off + size, len - size);
          }
          ++blk.live_regions;
          return Carved{LmbStatus::Ok, blk.hpa_base + off, blk.dpa_base + off,
                        {blk.block_id}};
        }
      }
    }
    auto granted = fm_.grant_block(host);
    if (!granted) {
      return Carved{LmbStatus::OutOfCapacity};
    }
    Block blk{granted->block_id, granted->hpa_base, granted->dpa_base,
              granted->size_bytes, {}, 1, false};
    if (size < blk.size) {
      blk.free.emplace(size, blk.size - size);
    }
    blocks.push_back(std::move(blk));
    return Carved{LmbStatus::Ok, granted->hpa_base, granted->dpa_base,
                  {granted->block_id}};
  }

  // Larger than one block: a fused extent of back-to-back grants that must
  // come out contiguous in HPA (and hence DPA).
  std::uint64_t n = (size + bsz - 1) / bsz;
  std::vector<MemoryBlock> granted;
  granted.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto blk = fm_.grant_block(host);
    if (!blk) {
      for (const MemoryBlock& g : granted) {
        fm_.release_block(host, g.block_id);
      }
      return Carved{LmbStatus::OutOfCapacity};
    }
    granted.push_back(*blk);
  }
  for (std::uint64_t i = 1; i < n; ++i) {
    if (granted[i].hpa_base != granted[i - 1].hpa_base + bsz) {
      for (const MemoryBlock& g : granted) {
        fm_.release_block(host, g.block_id);
      }
      return Carved{LmbStatus::Fragmented};
    }
  }
  Carved out{LmbStatus::Ok, granted.front().hpa_base, granted.front().dpa_base,
             {}};
  for (const MemoryBlock& g : granted) {
    blocks.push_back(Block{g.block_id, g.hpa_base, g.dpa_base, g.size_bytes,
                           {}, 1, true});
    out.block_ids.push_back(g.block_id);
  }
  return out;
}

void LmbModule::return_interval(Block& blk, std::uint64_t offset,
                                std::uint64_t len) {
  auto [it, inserted] = blk.free.emplace(offset, len);
  assert(inserted);
  // merge with successor
  auto next = std::next(it);
  if (next != blk.free.end() && it->first + it->second == next->first) {
    it->second += next->second;
    blk.free.erase(next);
  }
  // merge with predecessor
  if (it != blk.free.begin()) {
    auto prev = std::prev(it);
    if (prev->first + prev->second == it->first) {
      prev->second += it->second;
      blk.free.erase(it);
    }
  }
}

void LmbModule::release_region_memory(const MemRegion& region) {
  auto& blocks = blocks_[region.host];
  for (std::uint64_t block_id : region.block_ids) {
    auto it = std::find_if(blocks.begin(), blocks.end(), [&](const Block& b) {
      return b.block_id == block_id;
    });
    assert(it != blocks.end());
    Block& blk = *it;
    assert(blk.live_regions > 0);
    --blk.live_regions;
    if (!blk.fused) {
      return_interval(blk, region.hpa_base - blk.hpa_base, region.size_bytes);
    }
    // all device memory in the block freed: release the area back to the FM
    if (blk.live_regions == 0) {
      FmStatus st = fm_.release_block(region.host, blk.block_id);
      assert(st == FmStatus::Ok);
      (void)st;
      blocks.erase(it);
    }
  }
}

std::uint64_t LmbModule::alloc_bus_range(NodeId dev, std::uint64_t size) {
  auto [it, inserted] = bus_cursor_.emplace(dev, kBusSpaceStart);
  std::uint64_t bus = it->second;
  it->second += size;
  return bus;
}

void LmbModule::install_access(MemRegion& region, NodeId dev) {
  if (topo_.type(dev) == NodeType::PcieDevice) {
    std::uint64_t bus = alloc_bus_range(dev, region.size_bytes);
    iommu_[dev].emplace(
        bus, IommuMapping{dev, bus, region.hpa_base, region.size_bytes});
    region.bus_mappings[dev] = bus;
  } else {
    expander_.sat_add(*topo_.pbr(dev), region.dpa_base, region.size_bytes);
  }
}

void LmbModule::remove_access(const MemRegion& region, NodeId dev) {
  if (topo_.type(dev) == NodeType::PcieDevice) {
    auto bm = region.bus_mappings.find(dev);
    assert(bm != region.bus_mappings.end());
    iommu_[dev].erase(bm->second);
  } else {
    expander_.sat_remove(*topo_.pbr(dev), region.dpa_base, region.size_bytes);
  }
}

PcieAllocResult LmbModule::pcie_alloc(NodeId pcie_dev, std::uint64_t size) {
  PcieAllocResult res;
  if (!initialized_) {
    res.status = LmbStatus::NotInitialized;
  } else if (topo_.type(pcie_dev) != NodeType::PcieDevice) {
    res.status = LmbStatus::WrongDeviceKind;
  } else if (size == 0) {
    res.status = LmbStatus::InvalidArgument;
  } else {
    std::uint64_t rounded = round_up_page(size);
    NodeId host = topo_.host_of(pcie_dev);
    Carved c = carve(host, rounded);
    res.status = c.status;
    if (c.status == LmbStatus::Ok) {
      MemRegion region;
      region.mmid = ++next_mmid_[host];
      region.host = host;
      region.owner = pcie_dev;
      region.hpa_base = c.hpa;
      region.dpa_base = c.dpa;
      region.size_bytes = rounded;
      region.block_ids = c.block_ids;
      install_access(region, pcie_dev);
      res.bus_addr = region.bus_mappings[pcie_dev];
      res.mmid = region.mmid;
      regions_.emplace(std::make_pair(host, region.mmid), std::move(region));
    }
  }
  trace_line("pcie_alloc", pcie_dev, size, res.mmid, res.status);
  return res;
}

CxlAllocResult LmbModule::cxl_alloc(NodeId cxl_dev, std::uint64_t size) {
  CxlAllocResult res;
  if (!initialized_) {
    res.status = LmbStatus::NotInitialized;
  } else if (topo_.type(cxl_dev) != NodeType::CxlDevice) {
    res.status = LmbStatus::WrongDeviceKind;
  } else if (size == 0) {
    res.status = LmbStatus::InvalidArgument;
  } else {
    std::uint64_t rounded = round_up_page(size);
    NodeId host = managing_host_;
    Carved c = carve(host, rounded);
    res.status = c.status;
    if (c.status == LmbStatus::Ok) {
      MemRegion region;
      region.mmid = ++next_mmid_[host];
      region.host = host;
      region.owner = cxl_dev;
      region.hpa_base = c.hpa;
      region.dpa_base = c.dpa;
      region.size_bytes = rounded;
      region.block_ids = c.block_ids;
      install_access(region, cxl_dev);
      res.hpa = region.hpa_base;
      res.dpid = topo_.expander_pbr();
      res.mmid = region.mmid;
      regions_.emplace(std::make_pair(host, region.mmid), std::move(region));
    }
  }
  trace_line("cxl_alloc", cxl_dev, size, res.mmid, res.status);
  return res;
}

LmbStatus LmbModule::pcie_free(NodeId pcie_dev, std::uint64_t mmid) {
  LmbStatus status = LmbStatus::Ok;
  if (topo_.type(pcie_dev) != NodeType::PcieDevice) {
    status = LmbStatus::WrongDeviceKind;
  } else {
    auto it = regions_.find({topo_.host_of(pcie_dev), mmid});
    if (it == regions_.end()) {
      status = LmbStatus::UnknownMmid;
    } else if (it->second.owner != pcie_dev) {
      status = LmbStatus::PermissionError;
    } else {
      MemRegion region = std::move(it->second);
      regions_.erase(it);
      remove_access(region, region.owner);
      for (NodeId sharer : region.sharers) {
        remove_access(region, sharer);
      }
      release_region_memory(region);
    }
  }
  trace_line("pcie_free", pcie_dev, 0, mmid, status);
  return status;
}

LmbStatus LmbModule::cxl_free(NodeId cxl_dev, std::uint64_t mmid) {
  LmbStatus status = LmbStatus::Ok;
  if (topo_.type(cxl_dev) != NodeType::CxlDevice) {
    status = LmbStatus::WrongDeviceKind;
  } else {
    auto it = regions_.find({managing_host_, mmid});
    if (it == regions_.end()) {
      status = LmbStatus::UnknownMmid;
    } else if (it->second.owner != cxl_dev) {
      status = LmbStatus::PermissionError;
    } else {
      MemRegion region = std::move(it->second);
      regions_.erase(it);
      remove_access(region, region.owner);
      for (NodeId sharer : region.sharers) {
        remove_access(region, sharer);
      }
      release_region_memory(region);
    }
  }
  trace_line("cxl_free", cxl_dev, 0, mmid, status);
  return status;
}

PcieShareResult LmbModule::pcie_share(NodeId pcie_dev, std::uint64_t mmid) {
  PcieShareResult res;
  if (topo_.type(pcie_dev) != NodeType::PcieDevice) {
    res.status = LmbStatus::WrongDeviceKind;
  } else {
    auto it = regions_.find({topo_.host_of(pcie_dev), mmid});
    if (it == regions_.end()) {
      res.status = LmbStatus::UnknownMmid;
    } else {
      MemRegion& region = it->second;
      if (region.is_accessor(pcie_dev)) {
        res.bus_addr = region.bus_mappings.at(pcie_dev);  // idempotent
      } else {
        region.sharers.push_back(pcie_dev);
        install_access(region, pcie_dev);
        res.bus_addr = region.bus_mappings.at(pcie_dev);
      }
    }
  }
  trace_line("pcie_share", pcie_dev, 0, mmid, res.status);
  return res;
}

CxlShareResult LmbModule::cxl_share(NodeId cxl_dev, std::uint64_t mmid) {
  CxlShareResult res;
  if (topo_.type(cxl_dev) != NodeType::CxlDevice) {
    res.status = LmbStatus::WrongDeviceKind;
  } else {
    auto it = regions_.find({managing_host_, mmid});
    if (it == regions_.end()) {
      res.status = LmbStatus::UnknownMmid;
    } else {
      MemRegion& region = it->second;
      if (!region.is_accessor(cxl_dev)) {
        region.sharers.push_back(cxl_dev);
        install_access(region, cxl_dev);
      }
      res.hpa = region.hpa_base;
      res.dpid = topo_.expander_pbr();
    }
  }
  trace_line("cxl_share", cxl_dev, 0, mmid, res.status);
  return res;
}

const IommuMapping* LmbModule::iommu_lookup(NodeId dev, std::uint64_t bus,
                                            std::uint32_t len) const {
  auto dit = iommu_.find(dev);
  if (dit == iommu_.end()) {
    return nullptr;
  }
  const auto& table = dit->second;
  auto it = table.upper_bound(bus);
  if (it == table.begin()) {
    return nullptr;
  }
  const IommuMapping& m = std::prev(it)->second;
  if (bus >= m.bus_base && bus + len <= m.bus_base + m.size_bytes) {
    return &m;
  }
  return nullptr;
}

DeviceAccess LmbModule::access(NodeId dev, MemOp op, std::uint64_t addr,
                               std::uint32_t len,
                               std::span<const std::uint8_t> data,
                               bool move_bytes) {
  DeviceAccess out;
  MemAccessRequest req{op, 0, len, std::nullopt, std::nullopt, data};
  RouteClass route;
  PcieGen gen = PcieGen::Gen5;
  switch (topo_.type(dev)) {
    case NodeType::PcieDevice: {
      const IommuMapping* m = iommu_lookup(dev, addr, len);
      if (m == nullptr) {
        // enforcement point is host-side: no expander traffic on a miss
        ++iommu_faults_[dev];
        out.status = LmbStatus::IommuFault;
        return out;
      }
      req.hpa = m->hpa_base + (addr - m->bus_base);
      req.host = topo_.host_of(dev);
      route = RouteClass::PcieViaHost;
      gen = topo_.pcie_gen(dev);
      break;
    }
    case NodeType::CxlDevice:
      req.hpa = addr;
      req.spid = topo_.pbr(dev);
      route = RouteClass::CxlP2P;
      break;
    case NodeType::Host:
      req.hpa = addr;
      req.host = dev;
      route = RouteClass::HostDirect;
      break;
    default:
      out.status = LmbStatus::WrongDeviceKind;
      return out;
  }
  AccessResult res = move_bytes ? expander_.handle(req)
                                : expander_.authorize(req);
  switch (res.status) {
    case AccessStatus::Ok:
      out.status = LmbStatus::Ok;
      out.latency_ns =
          access_latency(route, gen, latency_) + expander_.media_extra_ns(res.dpa);
      out.data = std::move(res.data);
      break;
    case AccessStatus::DecodeFault:
      out.status = LmbStatus::DecodeFault;
      break;
    case AccessStatus::AccessFault:
      out.status = LmbStatus::AccessFault;
      break;
  }
  return out;
}

DeviceAccess LmbModule::device_write(NodeId dev, std::uint64_t addr,
                                     std::span<const std::uint8_t> data) {
  return access(dev, MemOp::Write, addr, static_cast<std::uint32_t>(data.size()),
                data, true);
}

DeviceAccess LmbModule::device_read(NodeId dev, std::uint64_t addr,
                                    std::uint32_t len) {
  return access(dev, MemOp::Read, addr, len, {}, true);
}

DeviceAccess LmbModule::index_access(NodeId dev, std::uint64_t addr,
                                     std::uint32_t len) {
  return access(dev, MemOp::Read, addr, len, {}, false);
}

const MemRegion* LmbModule::region(NodeId dev, std::uint64_t mmid) const {
  auto it = regions_.find({host_for(dev), mmid});
  return it == regions_.end() ? nullptr : &it->second;
}

std::vector<MemRegion> LmbModule::region_dump() const {
  std::vector<MemRegion> out;
  out.reserve(regions_.size());
  for (const auto& [key, region] : regions_) {
    out.push_back(region);
  }
  return out;
}

std::vector<IommuMapping> LmbModule::iommu_dump(NodeId dev) const {
  std::vector<IommuMapping> out;
  auto it = iommu_.find(dev);
  if (it != iommu_.end()) {
    for (const auto& [bus, m] : it->second) {
      out.push_back(m);
    }
  }
  return out;
}

std::uint64_t LmbModule::iommu_faults(NodeId dev) const {
  auto it = iommu_faults_.find(dev);
  return it == iommu_faults_.end() ? 0 : it->second;
}

std::uint64_t LmbModule::total_iommu_faults() const {
  std::uint64_t n = 0;
  for (const auto& [dev, c] : iommu_faults_) {
    n += c;
  }
  return n;
}

std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>>
LmbModule::free_map(NodeId host) const {
  std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> out;
  auto it = blocks_.find(host);
  if (it == blocks_.end()) {
    return out;
  }
  for (const Block& blk : it->second) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> intervals;
    for (const auto& [off, len] : blk.free) {
      intervals.emplace_back(off, len);
    }
    out.push_back(std::move(intervals));
  }
  return out;
}

void LmbModule::check_invariants() const {
  for (const auto& [host, blocks] : blocks_) {
    for (const Block& blk : blocks) {
      std::uint64_t free_sum = 0;
      std::uint64_t prev_end = 0;
      for (const auto& [off, len] : blk.free) {
        if (off < prev_end || off + len > blk.size) {
          throw SimError("allocator invariant: free intervals overlap");
        }
        prev_end = off + len;
        free_sum += len;
      }
      std::uint64_t live_sum = 0;
      std::uint32_t live_count = 0;
      for (const auto& [key, region] : regions_) {
        for (std::uint64_t bid : region.block_ids) {
          if (bid == blk.block_id) {
            ++live_count;
            live_sum += blk.fused ? blk.size : region.size_bytes;
          }
        }
      }
      if (live_count != blk.live_regions) {
        throw SimError("allocator invariant: live region count mismatch");
      }
      if (!blk.fused && free_sum + live_sum != blk.size) {
        throw SimError("allocator invariant: free + live does not tile block");
      }
    }
  }
  for (const auto& [key, region] : regions_) {
    if (region.hpa_base % kPageSize != 0 ||
        region.size_bytes % kPageSize != 0 || region.size_bytes == 0) {
      throw SimError("region invariant: misaligned region");
    }
    for (NodeId dev : region.sharers) {
      if (dev == region.owner) {
        throw SimError("region invariant: owner listed as sharer");
      }
    }
    auto check_dev = [&](NodeId dev) {
      if (topo_.type(dev) == NodeType::PcieDevice) {
        auto bm = region.bus_mappings.find(dev);
        if (bm == region.bus_mappings.end() ||
            iommu_lookup(dev, bm->second, 1) == nullptr) {
          throw SimError("region invariant: PCIe accessor missing IOMMU map");
        }
      } else if (topo_.type(dev) == NodeType::CxlDevice) {
        if (!expander_.sat_covers(*topo_.pbr(dev), region.dpa_base,
                                  region.size_bytes)) {
          throw SimError("region invariant: CXL accessor missing SAT entry");
        }
      }
    };
    check_dev(region.owner);
    for (NodeId dev : region.sharers) {
      check_dev(dev);
    }
  }
}

}  // namespace lmbsim
