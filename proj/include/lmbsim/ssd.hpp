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

#ifndef LMBSIM_SSD_HPP_
#define LMBSIM_SSD_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <optional>
#include <string>
#include <unordered_map>

#include "lmbsim/engine.hpp"
#include "lmbsim/fabric.hpp"
#include "lmbsim/lmb.hpp"

namespace lmbsim {

class SsdError : public std::runtime_error {
 public:
  explicit SsdError(const std::string& what) : std::runtime_error(what) {}
};

/// Rated figures of one device. Random classes are KIOPS at 4KB; sequential
/// classes are decimal MB/s. Latencies are the rated QD1 figures.
struct SsdSpec {
  PcieGen gen = PcieGen::Gen4;
  std::uint64_t capacity_bytes = 8444249301320ull;  // 7.68 TiB
  double rand_read_kiops = 1750;
  double rand_write_kiops = 340;
  double seq_read_mbps = 7200;
  double seq_write_mbps = 6800;
  std::uint64_t rand_read_lat_ns = 67000;
  std::uint64_t rand_write_lat_ns = 9000;

  static SsdSpec gen4();
  static SsdSpec gen5();
  static SsdSpec from_name(const std::string& name);  // "gen4" | "gen5"

  std::uint64_t pages() const { return capacity_bytes / kPageSize; }
  /// L2P table footprint: 4 bytes per 4KiB page.
  std::uint64_t l2p_bytes() const { return pages() * 4; }
  void validate() const;
};

enum class SchemeKind { Ideal, Dftl, LmbCxl, LmbPcie };

const char* to_string(SchemeKind kind);
SchemeKind scheme_from_name(const std::string& name);

enum class DftlHitModel { Lru, FixedRatio };

struct DftlParams {
  std::uint64_t cmt_capacity_entries = 65536;
  std::uint32_t entries_per_translation_page = 1024;
  DftlHitModel hit_model = DftlHitModel::Lru;
  double fixed_hit_ratio = 0.0;  // hit probability under FixedRatio
  bool charge_media = false;     // bill the miss to the media stage instead
};

struct LmbParams {
  RouteClass route = RouteClass::CxlP2P;
  double onboard_hit_ratio = 0.0;
};

struct FtlScheme {
  SchemeKind kind = SchemeKind::Ideal;
  DftlParams dftl;
  LmbParams lmb;
};

enum class OpClass : int { RandRead = 0, RandWrite = 1, SeqRead = 2, SeqWrite = 3 };

const char* to_string(OpClass cls);
inline bool is_read(OpClass cls) {
  return cls == OpClass::RandRead || cls == OpClass::SeqRead;
}
inline bool is_seq(OpClass cls) {
  return cls == OpClass::SeqRead || cls == OpClass::SeqWrite;
}

struct MediaServiceTable {
  std::uint64_t ns[4] = {0, 0, 0, 0};
  std::uint64_t& operator[](OpClass c) { return ns[static_cast<int>(c)]; }
  std::uint64_t operator[](OpClass c) const { return ns[static_cast<int>(c)]; }
};

/// Deterministic service parameters reproducing one device's black-box
/// behavior: E index engines with base service s_idx and n accesses per IO,
/// C media units with per-class occupancies.
struct FtlCalibration {
  std::uint32_t index_engines = 1;
  double index_base_service_ns = 100.0;
  double n_read = 1.0;
  double n_write = 2.0;
  std::uint32_t media_units = 0;
  MediaServiceTable media_service_ns;
  /// Sequential index coalescing factor: IOs within the same k-page group
  /// after the first hit an onboard staging buffer. 1 = off.
  std::uint32_t seq_coalesce = 1;
  std::string provenance;

  double index_accesses(MemOp op) const {
    return op == MemOp::Read ? n_read : n_write;
  }
  std::string to_json() const;
  static FtlCalibration from_json(const std::string& text);
  void save(const std::string& path) const;
  static FtlCalibration load(const std::string& path);
};

/// Deterministic default calibration: media occupancies sized so C units
/// reproduce every rated throughput class, C capped below the reference
/// queue depth so the media stage can actually saturate there.
FtlCalibration calibrate(const SsdSpec& spec, std::uint32_t qd = 64);

/// Cached mapping table model: translation-page-granular LRU, or a seeded
/// Bernoulli hit with fixed probability.
class DftlCache {
 public:
  DftlCache(const DftlParams& params, Rng rng);

  bool lookup(std::uint64_t lpn);  // true = hit; updates recency

  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }
  double miss_ratio() const {
    std::uint64_t n = hits_ + misses_;
    return n == 0 ? 0.0 : static_cast<double>(misses_) / static_cast<double>(n);
  }

 private:
  DftlParams params_;
  Rng rng_;
  std::uint64_t capacity_groups_;
  std::list<std::uint64_t> lru_;  // front = most recent
  std::unordered_map<std::uint64_t, std::list<std::uint64_t>::iterator> map_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

/// Binding of an LMB-backed L2P region: remote accesses go through the
/// kernel-module data path (translation, access control, route latency).
struct IndexBackend {
  LmbModule* lmb = nullptr;
  NodeId device = 0;
  std::uint64_t base_addr = 0;  // bus address (PCIe) or HPA (CXL)
  std::uint64_t size_bytes = 0;
};

struct IoResult {
  SimTime submit_time;
  SimTime complete_time;
};

struct SsdCounters {
  std::uint64_t submitted = 0;
  std::uint64_t completed = 0;
  std::uint64_t index_busy_ns = 0;
  std::uint64_t media_busy_ns = 0;
  std::uint64_t remote_index_accesses = 0;
};

/// An NVMe SSD as a two-stage service pipeline: E index engines in front of
/// C media units. The L2P scheme decides each IO's index-stage occupancy.
class SsdModel {
 public:
  using Completion = std::function<void(const IoResult&)>;

  SsdModel(Engine& engine, const SsdSpec& spec, const FtlScheme& scheme,
           const FtlCalibration& calibration, Rng scheme_rng,
           const LatencyModel& latency = LatencyModel{},
           std::optional<IndexBackend> backend = std::nullopt);

  void submit_io(MemOp op, OpClass cls, std::uint64_t lpn,
                 std::uint32_t io_bytes, Completion done);

  /// Index-stage occupancy of one IO under the configured scheme. Mutates
  /// scheme state (CMT recency, coalescing group, RNG); called once per IO
  /// in service order.
  std::uint64_t index_service_ns(MemOp op, OpClass cls, std::uint64_t lpn);

  const SsdCounters& counters() const { return counters_; }
  const DftlCache* dftl() const { return dftl_ ? &*dftl_ : nullptr; }
  const SsdSpec& spec() const { return spec_; }
  const FtlCalibration& calibration() const { return calib_; }

 private:
  struct Pending {
    MemOp op;
    OpClass cls;
    std::uint64_t lpn;
    std::uint32_t pages;
    SimTime submit_time;
    std::uint64_t media_extra_ns;
    Completion done;
  };

  void start_index(Pending io);
  void index_done(Pending io, std::uint64_t occupancy);
  void start_media(Pending io);
  void media_done(Pending io, std::uint64_t occupancy);
  std::uint64_t remote_access_latency(std::uint64_t lpn);

  Engine& engine_;
  SsdSpec spec_;
  FtlScheme scheme_;
  FtlCalibration calib_;
  Rng rng_;
  LatencyModel latency_;
  std::optional<IndexBackend> backend_;
  std::optional<DftlCache> dftl_;

  std::uint32_t busy_engines_ = 0;
  std::deque<Pending> index_queue_;
  std::uint32_t busy_media_ = 0;
  std::deque<Pending> media_queue_;
  std::uint64_t last_group_ = UINT64_MAX;
  std::uint64_t last_media_extra_ = 0;
  bool backend_checked_ = false;
  SsdCounters counters_;
};

}  // namespace lmbsim

#endif  // LMBSIM_SSD_HPP_
