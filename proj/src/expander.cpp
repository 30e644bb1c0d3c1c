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

#include "lmbsim/expander.hpp"

#include <algorithm>
#include <cstring>

namespace lmbsim {

Expander::Expander(std::uint64_t dpa_capacity_bytes)
    : capacity_(dpa_capacity_bytes) {}

const Dmp& Expander::create_dmp(Media media, std::uint64_t size_bytes) {
  if (size_bytes == 0 || size_bytes % kPageSize != 0) {
    throw ExpanderError("create_dmp: size must be a non-zero multiple of " +
                        std::to_string(kPageSize));
  }
  if (size_bytes > capacity_ - provisioned_) {
    throw ExpanderError("create_dmp: DPA capacity exhausted");
  }
  Dmp dmp{static_cast<std::uint32_t>(dmps_.size()), media, provisioned_,
          size_bytes};
  provisioned_ += size_bytes;
  dmps_.push_back(dmp);
  return dmps_.back();
}

void Expander::map_window(const DecoderEntry& entry) {
  if (entry.size_bytes == 0) {
    throw ExpanderError("map_window: empty window");
  }
  // windows must be disjoint in HPA space
  auto next = decoder_.lower_bound(entry.hpa_base);
  if (next != decoder_.end() && next->first < entry.hpa_base + entry.size_bytes) {
    throw ExpanderError("map_window: HPA window overlap");
  }
  if (next != decoder_.begin()) {
    auto prev = std::prev(next);
    if (prev->second.hpa_base + prev->second.size_bytes > entry.hpa_base) {
      throw ExpanderError("map_window: HPA window overlap");
    }
  }
  if (entry.dpa_base + entry.size_bytes > provisioned_) {
    throw ExpanderError("map_window: DPA target outside provisioned DMPs");
  }
  decoder_.emplace(entry.hpa_base, entry);
}

void Expander::unmap_window(std::uint64_t hpa_base) {
  if (decoder_.erase(hpa_base) == 0) {
    throw ExpanderError("unmap_window: no window at hpa_base");
  }
}

std::optional<std::uint64_t> Expander::hpa_to_dpa(std::uint64_t hpa) const {
  auto it = decoder_.upper_bound(hpa);
  if (it == decoder_.begin()) {
    return std::nullopt;
  }
  const DecoderEntry& e = std::prev(it)->second;
  if (hpa >= e.hpa_base + e.size_bytes) {
    return std::nullopt;
  }
  return e.dpa_base + (hpa - e.hpa_base);
}

void Expander::sat_add(PbrId spid, std::uint64_t dpa_base,
                       std::uint64_t size_bytes) {
  if (size_bytes == 0 || dpa_base + size_bytes > provisioned_) {
    throw ExpanderError("sat_add: range outside provisioned DPA space");
  }
  sat_[spid.value].insert({dpa_base, size_bytes});  // set semantics
}

void Expander::sat_remove(PbrId spid, std::uint64_t dpa_base,
                          std::uint64_t size_bytes) {
  auto it = sat_.find(spid.value);
  if (it == sat_.end() || it->second.erase({dpa_base, size_bytes}) == 0) {
    ++faults_.sat_remove_misses;
    return;
  }
  if (it->second.empty()) {
    sat_.erase(it);
  }
}

bool Expander::sat_covers(PbrId spid, std::uint64_t dpa,
                          std::uint64_t len) const {
  auto it = sat_.find(spid.value);
  if (it == sat_.end()) {
    return false;
  }
  const auto& ranges = it->second;
  auto r = ranges.upper_bound({dpa, UINT64_MAX});
  if (r == ranges.begin()) {
    return false;
  }
  --r;
  return dpa >= r->first && dpa + len <= r->first + r->second;
}

AccessResult Expander::authorize(const MemAccessRequest& req) {
  if (req.len == 0 || req.len > 64) {
    throw ExpanderError("request length must be 1..64 bytes");
  }
  if (!req.spid && !req.host) {
    throw ExpanderError("request carries no requester identity");
  }
  AccessResult res;
  auto it = decoder_.upper_bound(req.hpa);
  const DecoderEntry* entry = nullptr;
  if (it != decoder_.begin()) {
    const DecoderEntry& e = std::prev(it)->second;
    // the access must lie fully inside one decoder window
    if (req.hpa >= e.hpa_base && req.hpa + req.len <= e.hpa_base + e.size_bytes) {
      entry = &e;
    }
  }
  if (entry == nullptr) {
    ++faults_.decode_faults;
    res.status = AccessStatus::DecodeFault;
    return res;
  }
  res.dpa = entry->dpa_base + (req.hpa - entry->hpa_base);
  if (req.spid && !sat_covers(*req.spid, res.dpa, req.len)) {
    ++faults_.access_faults_by_spid[req.spid->value];
    res.status = AccessStatus::AccessFault;
    return res;
  }
  return res;
}

AccessResult Expander::handle(const MemAccessRequest& req) {
  AccessResult res = authorize(req);
  if (res.status != AccessStatus::Ok) {
    return res;
  }
  if (req.op == MemOp::Write) {
    if (req.data.size() != req.len) {
      throw ExpanderError("MemWr payload size mismatch");
    }
    write_bytes(res.dpa, req.data);
  } else {
    res.data = read_bytes(res.dpa, req.len);
  }
  return res;
}

std::uint64_t Expander::media_extra_ns(std::uint64_t dpa) const {
  if (pm_extra_ns_ == 0) {
    return 0;
  }
  for (const Dmp& d : dmps_) {
    if (dpa >= d.dpa_base && dpa < d.dpa_base + d.size_bytes) {
      return d.media == Media::Pm ? pm_extra_ns_ : 0;
    }
  }
  return 0;
}

void Expander::write_bytes(std::uint64_t dpa,
                           std::span<const std::uint8_t> data) {
  std::uint64_t off = 0;
  while (off < data.size()) {
    std::uint64_t page = (dpa + off) / kPageSize;
    std::uint64_t in_page = (dpa + off) % kPageSize;
    std::uint64_t n = std::min<std::uint64_t>(data.size() - off,
                                              kPageSize - in_page);
    auto& buf = pages_[page];
    if (!buf) {
      buf = std::make_unique<std::array<std::uint8_t, kPageSize>>();
      buf->fill(0);
    }
    std::memcpy(buf->data() + in_page, data.data() + off, n);
    off += n;
  }
}

std::vector<std::uint8_t> Expander::read_bytes(std::uint64_t dpa,
                                               std::uint32_t len) {
  std::vector<std::uint8_t> out(len, 0);
  std::uint64_t off = 0;
  while (off < len) {
    std::uint64_t page = (dpa + off) / kPageSize;
    std::uint64_t in_page = (dpa + off) % kPageSize;
    std::uint64_t n = std::min<std::uint64_t>(len - off, kPageSize - in_page);
    auto it = pages_.find(page);
    if (it != pages_.end()) {
      std::memcpy(out.data() + off, it->second->data() + in_page, n);
    }
    off += n;
  }
  return out;
}

std::vector<DecoderEntry> Expander::decoder_dump() const {
  std::vector<DecoderEntry> out;
  out.reserve(decoder_.size());
  for (const auto& [base, e] : decoder_) {
    out.push_back(e);
  }
  return out;
}

std::map<std::uint16_t, std::vector<std::pair<std::uint64_t, std::uint64_t>>>
Expander::sat_dump() const {
  std::map<std::uint16_t,
           std::vector<std::pair<std::uint64_t, std::uint64_t>>>
      out;
  for (const auto& [spid, ranges] : sat_) {
    out[spid].assign(ranges.begin(), ranges.end());
  }
  return out;
}

void Expander::check_invariants() const {
  std::uint64_t dpa_cursor = 0;
  for (const Dmp& d : dmps_) {
    if (d.dpa_base != dpa_cursor) {
      throw ExpanderError("invariant: DMPs not ascending/disjoint");
    }
    dpa_cursor += d.size_bytes;
  }
  std::uint64_t prev_end = 0;
  bool first = true;
  for (const auto& [base, e] : decoder_) {
    if (!first && base < prev_end) {
      throw ExpanderError("invariant: decoder windows overlap");
    }
    if (e.dpa_base + e.size_bytes > provisioned_) {
      throw ExpanderError("invariant: decoder target outside DMPs");
    }
    prev_end = base + e.size_bytes;
    first = false;
  }
}

}  // namespace lmbsim
