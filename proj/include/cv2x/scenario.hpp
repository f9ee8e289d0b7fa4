// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cv2x/rng.hpp"

namespace cv2x {

/// Raised when a configuration violates one of its invariants; what() names it.
class InvalidConfig : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
  double highway_length_m = 5000.0;
  double density_vpk = 400.0;
  int bandwidth_mhz = 20;
  int subchannels_per_subframe = 0;  // 0: derived from bandwidth (5 @ 10 MHz, 10 @ 20 MHz)
  int prbs_per_subchannel = 10;
  int subchannels_per_bsm = 2;
  int pscch_prbs = 2;
  double tx_power_dbm = 20.0;
  double pscch_boost_db = 3.0;
  double noise_figure_db = 6.0;
  double thermal_noise_dbm_per_hz = -174.0;
  double sinr_threshold_pssch_db = 3.0;
  double sinr_threshold_pscch_db = 0.0;
  double sim_duration_s = 500.0;
  double warmup_s = 10.0;
  double stats_region_lo = 1.0 / 3.0;  // fraction of highway length
  double stats_region_hi = 2.0 / 3.0;
  std::uint64_t master_seed = 1;

  int effective_subchannels() const;
};

struct OneShotWindow {
  int alpha = 0;
  int beta = 0;
  bool operator==(const OneShotWindow&) const = default;
};

struct SpsConfig {
  int t1_ms = 4;
  int pdb_ms = 100;
  int cs_min = 5;
  int cs_max = 15;
  double keep_prob = 0.8;
  std::optional<OneShotWindow> oneshot;
  int esps_max_intervals = 0;  // 0: unlimited
  double rsrp_exclude_threshold_dbm_init = -110.0;
  double rsrp_threshold_step_db = 3.0;
  double candidate_fraction = 0.20;
  double cbr_rssi_threshold_dbm = -94.0;
  int sensing_depth_ms = 1000;

  int t2_ms() const { return pdb_ms - 10 > 20 ? pdb_ms - 10 : 20; }
  double reselect_prob() const { return 1.0 - keep_prob; }
  /// SPS reservations recur with the packet delay budget as period.
  int reservation_period_ms() const { return pdb_ms; }
};

void validate(const ScenarioConfig& cfg);
void validate(const SpsConfig& sps);

/// Sub-stream domains; stream id = (domain << 32) | vehicle id.
enum class StreamDomain : std::uint64_t { mac = 0, channel = 1, placement = 2 };

std::uint64_t stream_id(StreamDomain domain, std::uint32_t vehicle);

struct Vehicle {
  std::uint32_t id = 0;
  double position_m = 0.0;
  int initial_offset_ms = 0;  // first BSM generation sub-frame, in [0, 100)
};

/// Immutable simulated world. Safe to share across runs.
struct World {
  ScenarioConfig scenario;
  SpsConfig sps;
  std::vector<Vehicle> vehicles;
  double spacing_m = 0.0;
  int subchannels = 0;
  int pairs_per_subframe = 0;  // aligned BSM-sized sub-channel groups

  std::size_t size() const { return vehicles.size(); }
  double distance(std::size_t a, std::size_t b) const {
    return static_cast<double>(a > b ? a - b : b - a) * spacing_m;
  }
  bool in_stats_region(std::size_t v) const;
  RngStream mac_stream(std::uint32_t v) const;
  RngStream channel_stream(std::uint32_t v) const;
};

std::size_t vehicle_count(const ScenarioConfig& cfg);

World build_world(const ScenarioConfig& cfg, const SpsConfig& sps);

}  // namespace cv2x
