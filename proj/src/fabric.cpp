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

#include "lmbsim/fabric.hpp"

namespace lmbsim {

const char* to_string(RouteClass route) {
  switch (route) {
    case RouteClass::Onboard:
      return "onboard";
    case RouteClass::CxlP2P:
      return "cxl-p2p";
    case RouteClass::PcieViaHost:
      return "pcie-via-host";
    case RouteClass::HostDirect:
      return "host-direct";
  }
  return "?";
}

const char* to_string(NodeType type) {
  switch (type) {
    case NodeType::Host:
      return "host";
    case NodeType::CxlDevice:
      return "cxl-device";
    case NodeType::PcieDevice:
      return "pcie-device";
    case NodeType::Switch:
      return "switch";
    case NodeType::Expander:
      return "expander";
  }
  return "?";
}

std::uint64_t access_latency(RouteClass route, PcieGen gen,
                             const LatencyModel& model) {
  switch (route) {
    case RouteClass::Onboard:
      return 0;
    case RouteClass::CxlP2P:
      return model.lmb_cxl_extra_ns;
    case RouteClass::PcieViaHost:
      return gen == PcieGen::Gen4 ? model.lmb_pcie_extra_gen4_ns
                                  : model.lmb_pcie_extra_gen5_ns;
    case RouteClass::HostDirect:
      return 2 * model.cxl_port_ns + model.switch_hdm_ns;
  }
  throw FabricError("access_latency: invalid route class");
}

const Topology::Node& Topology::node(NodeId id) const {
  if (id >= nodes_.size()) {
    throw FabricError("unattached node id " + std::to_string(id));
  }
  return nodes_[id];
}

void Topology::require_unsealed() const {
  if (sealed_) {
    throw FabricError("fabric is sealed; no further attachments");
  }
}

NodeId Topology::add(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Topology::attach_host(PcieGen gen) {
  require_unsealed();
  Node n{NodeType::Host};
  n.gen = gen;
  n.pbr = PbrId{next_pbr_++};
  return add(n);
}

NodeId Topology::attach_switch() {
  require_unsealed();
  if (switch_) {
    throw FabricError("fabric already has a switch");
  }
  Node n{NodeType::Switch};
  n.pbr = PbrId{next_pbr_++};
  NodeId id = add(n);
  switch_ = id;
  return id;
}

NodeId Topology::attach_expander() {
  require_unsealed();
  if (expander_) {
    throw FabricError("fabric already has an expander");
  }
  Node n{NodeType::Expander};
  n.pbr = PbrId{next_pbr_++};
  NodeId id = add(n);
  expander_ = id;
  return id;
}

NodeId Topology::attach_cxl_device() {
  require_unsealed();
  Node n{NodeType::CxlDevice};
  n.pbr = PbrId{next_pbr_++};
  return add(n);
}

NodeId Topology::attach_pcie_device(NodeId host, PcieGen gen) {
  require_unsealed();
  if (node(host).type != NodeType::Host) {
    throw FabricError("attach_pcie_device: node " + std::to_string(host) +
                      " is not a host");
  }
  std::uint32_t ordinal = 0;
  for (const Node& other : nodes_) {
    if (other.type == NodeType::PcieDevice && other.host == host) {
      ++ordinal;
    }
  }
  Node n{NodeType::PcieDevice};
  n.gen = gen;
  n.host = host;
  n.local_ordinal = ordinal;
  return add(n);  // no PBR id: PCIe devices are not fabric ports
}

PcieGen Topology::pcie_gen(NodeId id) const {
  const Node& n = node(id);
  if (n.type != NodeType::Host && n.type != NodeType::PcieDevice) {
    throw FabricError("node has no PCIe generation");
  }
  return n.gen;
}

NodeId Topology::host_of(NodeId pcie_device) const {
  const Node& n = node(pcie_device);
  if (n.type != NodeType::PcieDevice) {
    throw FabricError("host_of: node is not a PCIe device");
  }
  return n.host;
}

std::pair<NodeId, std::uint32_t> Topology::local_id(NodeId pcie_device) const {
  const Node& n = node(pcie_device);
  if (n.type != NodeType::PcieDevice) {
    throw FabricError("local_id: node is not a PCIe device");
  }
  return {n.host, n.local_ordinal};
}

PbrId Topology::expander_pbr() const {
  if (!expander_) {
    throw FabricError("fabric has no expander");
  }
  return *nodes_[*expander_].pbr;
}

RouteClass Topology::route(NodeId requester) const {
  if (!expander_) {
    throw FabricError("route: fabric has no expander");
  }
  switch (node(requester).type) {
    case NodeType::CxlDevice:
      return RouteClass::CxlP2P;
    case NodeType::PcieDevice:
      return RouteClass::PcieViaHost;
    case NodeType::Host:
      return RouteClass::HostDirect;
    case NodeType::Switch:
    case NodeType::Expander:
      break;
  }
  throw FabricError("route: no route class for node kind");
}

}  // namespace lmbsim
