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

#ifndef LMBSIM_FABRIC_HPP_
#define LMBSIM_FABRIC_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lmbsim {

class FabricError : public std::runtime_error {
 public:
  explicit FabricError(const std::string& what) : std::runtime_error(what) {}
};

enum class PcieGen : int { Gen4 = 4, Gen5 = 5 };

/// How a requester reaches the memory expander.
enum class RouteClass { Onboard, CxlP2P, PcieViaHost, HostDirect };

const char* to_string(RouteClass route);

/// Per-hop and per-route latency constants, nanoseconds. The two LMB extras
/// are route-class totals and supersede hop-sum composition; hop composition
/// is kept only for the host's direct path.
struct LatencyModel {
  std::uint64_t cxl_port_ns = 25;
  std::uint64_t switch_hdm_ns = 70;
  std::uint64_t pcie_host_ns = 780;
  std::uint64_t lmb_cxl_extra_ns = 190;
  std::uint64_t lmb_pcie_extra_gen4_ns = 880;
  std::uint64_t lmb_pcie_extra_gen5_ns = 1190;
  std::uint64_t flash_read_ns = 25000;
};

/// Per-access latency for one index access over the given route.
std::uint64_t access_latency(RouteClass route, PcieGen gen,
                             const LatencyModel& model);

/// Port-based-routing identifier of a CXL edge-port attachment.
struct PbrId {
  std::uint16_t value = 0;
  friend bool operator==(PbrId a, PbrId b) { return a.value == b.value; }
  friend bool operator<(PbrId a, PbrId b) { return a.value < b.value; }
};

using NodeId = std::uint32_t;

enum class NodeType { Host, CxlDevice, PcieDevice, Switch, Expander };

const char* to_string(NodeType type);

/// The simulated fabric of one switch, one expander, hosts, CXL devices and
/// PCIe devices behind hosts. CXL-attached nodes receive sequential PBR ids;
/// PCIe devices receive a (host, ordinal) local id instead. Immutable after
/// seal().
class Topology {
 public:
  NodeId attach_host(PcieGen gen);
  NodeId attach_switch();
  NodeId attach_expander();
  NodeId attach_cxl_device();
  NodeId attach_pcie_device(NodeId host, PcieGen gen);

  void seal() { sealed_ = true; }
  bool sealed() const { return sealed_; }

  std::size_t node_count() const { return nodes_.size(); }
  NodeType type(NodeId id) const { return node(id).type; }
  PcieGen pcie_gen(NodeId id) const;
  NodeId host_of(NodeId pcie_device) const;
  std::optional<PbrId> pbr(NodeId id) const { return node(id).pbr; }
  /// (host id, per-host ordinal) of a PCIe device.
  std::pair<NodeId, std::uint32_t> local_id(NodeId pcie_device) const;
  std::optional<NodeId> expander_node() const { return expander_; }
  PbrId expander_pbr() const;

  /// Route from a requester to the expander; pure in the node kinds.
  RouteClass route(NodeId requester) const;

 private:
  struct Node {
    NodeType type;
    PcieGen gen = PcieGen::Gen5;
    NodeId host = 0;
    std::uint32_t local_ordinal = 0;
    std::optional<PbrId> pbr;
  };

  const Node& node(NodeId id) const;
  NodeId add(Node n);
  void require_unsealed() const;

  std::vector<Node> nodes_;
  std::uint16_t next_pbr_ = 1;
  std::optional<NodeId> expander_;
  std::optional<NodeId> switch_;
  bool sealed_ = false;
};

}  // namespace lmbsim

#endif  // LMBSIM_FABRIC_HPP_
