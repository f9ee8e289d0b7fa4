// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <vector>

#include "cv2x/channel.hpp"
#include "cv2x/congestion.hpp"
#include "cv2x/mac_sps.hpp"
#include "cv2x/metrics.hpp"
#include "cv2x/rng.hpp"
#include "cv2x/scenario.hpp"

namespace cv2x {

enum class KernelKind { serial, openmp };

struct TraceConfig {
  std::filesystem::path scheduler_csv;         // empty: off
  std::vector<std::uint32_t> scheduler_vehicles;  // empty: all vehicles
  std::filesystem::path congestion_csv;
  std::vector<std::uint32_t> congestion_vehicles;
  std::filesystem::path event_log;  // binary reception records, see EventRecord
};

struct EngineConfig {
  ScenarioConfig scenario;
  SpsConfig sps;
  CongestionParams congestion;
  MetricConfig metrics;
  PathlossModel pathloss;
  IbeMask ibe;
  ReceptionModel reception;
  bool fading = true;  // false: unit gains, no fading draws
  KernelKind kernel = KernelKind::serial;
  int threads = 0;     // OpenMP kernel; 0 = runtime default
  TraceConfig trace;
};

void validate(const EngineConfig& cfg);

/**
 * One reception record of the binary event log, little-endian, 32 bytes:
 *   i64 subframe, u32 tx, u32 rx, u8 received, u8 loss_cause, u16 zero,
 *   f32 pssch_sinr_db, f32 pscch_sinr_db, f32 distance_m.
 * Only pairs that count towards statistics are logged.
 */
struct EventRecord {
  std::int64_t subframe = 0;
  std::uint32_t tx = 0;
  std::uint32_t rx = 0;
  std::uint8_t received = 0;
  LossCause loss_cause = LossCause::none;
  float pssch_sinr_db = 0.0f;
  float pscch_sinr_db = 0.0f;
  float distance_m = 0.0f;
};
inline constexpr std::size_t kEventRecordBytes = 32;
void encode_event(const EventRecord& r, unsigned char* out);
EventRecord decode_event(const unsigned char* in);

struct PlannedTx {
  std::int64_t gen_sf = 0;
  std::int64_t tx_sf = 0;
  Grant grant;
  bool reserves = false;  // SCI announces the SPS resource for the next period
};

struct VueState {
  RngStream mac_rng;
  RngStream chan_rng;
  SchedulerState sched;
  SensingHistory sensing;
  CongestionState cong;
  std::optional<PlannedTx> pending;
  std::uint64_t sps_serial = 0;  // number of SPS grants drawn so far
  std::int64_t last_tx_sf = -1;
  std::int64_t max_itt_ms = 0;
  std::uint64_t transmissions = 0;

  VueState(SensingHistory s) : sensing(std::move(s)) {}
};

struct LedgerEntry {
  std::uint32_t tx = 0;
  int pair = 0;
  int vrb_start = 0;
  int vrb_count = 0;
  GrantOrigin origin = GrantOrigin::sps;
  std::int64_t gen_sf = 0;
  bool reserves = false;
};

/// Transmissions of one sub-frame, in ascending vehicle id.
struct SubframeLedger {
  std::int64_t subframe = 0;
  std::vector<LedgerEntry> entries;
};

/**
 * Sub-frame stepped simulator.
 *
 * Each sub-frame: congestion update on 100 ms boundaries, BSM generations
 * and scheduler ticks, the transmitter ledger, then the receiver kernel.
 * Every receiver draws only from its own channel stream and writes only its
 * own state, so the serial and OpenMP kernels produce identical results.
 */
class Engine {
public:
  Engine(const World& world, const EngineConfig& cfg);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  void step();
  /// Steps to the configured duration and returns the finished metrics.
  MetricStore run();

  std::int64_t now() const { return now_; }
  std::int64_t duration_ms() const { return duration_; }
  const World& world() const { return world_; }
  const VueState& vue(std::size_t v) const { return vues_[v]; }
  /// For tests: adjust a vehicle before the first step.
  VueState& mutable_vue(std::size_t v) { return vues_[v]; }
  const SubframeLedger& last_ledger() const { return ledger_; }
  const MetricStore& metrics() const { return store_; }
  const RadioParams& radio() const { return radio_; }
  double path_gain(std::size_t a, std::size_t b) const { return path_gain_[a > b ? a - b : b - a]; }

private:
  struct PairState;
  struct RxScratch;

  void congestion_tick();
  void generate(std::uint32_t v);
  void build_ledger();
  void receive(std::uint32_t r);
  void apply_scratch(std::uint32_t r);
  void finish();
  PairState* pair_state(std::uint32_t tx, std::uint32_t rx);

  World world_;
  EngineConfig cfg_;
  RadioParams radio_;
  SelectionParams sel_;
  std::int64_t duration_ = 0;
  std::int64_t warmup_ = 0;
  std::int64_t now_ = 0;
  bool finished_ = false;

  std::vector<double> path_gain_;   // by index distance
  std::vector<double> nak_m_;
  std::vector<int> dist_m_;         // floor(distance) per index distance
  std::vector<int> bin_;            // CCDF bin per index distance, -1 outside
  std::vector<double> leak_data_;   // [src pair][dst pair]
  std::vector<double> leak_ctrl_;
  std::vector<double> vrb_profile_;  // [src pair][dst vrb] transmitted power incl. leakage, mW
  double noise_vrb_mw_ = 0.0;

  std::vector<VueState> vues_;
  std::uint32_t stats_lo_ = 0;
  std::uint32_t stats_hi_ = 0;  // inclusive
  std::uint32_t k_eval_ = 0;    // eval radius in index distance
  std::vector<std::size_t> pair_offset_;  // per receiver, into pairs_
  std::vector<std::uint32_t> pair_tx_lo_;
  std::vector<std::uint32_t> pair_tx_n_;
  std::vector<PairState> pairs_;
  std::vector<std::uint32_t> cbr_vehicles_;

  SubframeLedger ledger_;
  std::vector<int> ledger_index_;  // per vehicle, -1 when not transmitting
  std::vector<RxScratch> scratch_;
  MetricStore store_;

  std::ofstream sched_out_;
  std::vector<char> sched_sel_;
  std::ofstream cong_out_;
  std::vector<char> cong_sel_;
  std::ofstream event_out_;
};

MetricStore run_engine(const World& world, const EngineConfig& cfg);

/// World for an engine configuration.
World build_world(const EngineConfig& cfg);

}  // namespace cv2x
