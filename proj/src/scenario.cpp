// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/scenario.hpp"

#include <cmath>

namespace cv2x {

namespace {

constexpr double kPrbBandwidthMhz = 0.18;

[[noreturn]] void fail(const std::string& invariant) { throw InvalidConfig("invalid-config: " + invariant); }

}  // namespace

int ScenarioConfig::effective_subchannels() const {
  if (subchannels_per_subframe > 0) return subchannels_per_subframe;
  return bandwidth_mhz == 10 ? 5 : bandwidth_mhz == 20 ? 10 : 0;
}

void validate(const ScenarioConfig& cfg) {
  if (cfg.bandwidth_mhz != 10 && cfg.bandwidth_mhz != 20) fail("bandwidth_mhz must be 10 or 20");
  const int sc = cfg.effective_subchannels();
  if (sc <= 0) fail("subchannels_per_subframe > 0");
  if (cfg.prbs_per_subchannel <= 0) fail("prbs_per_subchannel > 0");
  if (sc * cfg.prbs_per_subchannel * kPrbBandwidthMhz > cfg.bandwidth_mhz + 1e-9)
    fail("subchannels_per_subframe x prbs_per_subchannel x 0.18 MHz <= bandwidth_mhz");
  if (cfg.subchannels_per_bsm <= 0 || cfg.subchannels_per_bsm > sc) fail("0 < subchannels_per_bsm <= subchannels_per_subframe");
  if (cfg.pscch_prbs <= 0 || cfg.pscch_prbs >= cfg.subchannels_per_bsm * cfg.prbs_per_subchannel)
    fail("0 < pscch_prbs < BSM PRBs");
  if (!(cfg.highway_length_m > 0.0)) fail("highway_length_m > 0");
  if (!(cfg.density_vpk > 0.0)) fail("density_vpk > 0");
  if (vehicle_count(cfg) < 2) fail("density_vpk x highway_length_m / 1000 >= 2 vehicles");
  if (!(cfg.sim_duration_s > 0.0)) fail("sim_duration_s > 0");
  if (!(cfg.warmup_s >= 0.0) || !(cfg.warmup_s < cfg.sim_duration_s)) fail("warmup_s < sim_duration_s");
  if (!(cfg.stats_region_lo >= 0.0 && cfg.stats_region_lo < cfg.stats_region_hi && cfg.stats_region_hi <= 1.0))
    fail("0 <= stats_region_lo < stats_region_hi <= 1");
}

void validate(const SpsConfig& sps) {
  if (sps.t1_ms < 0) fail("t1_ms >= 0");
  if (sps.pdb_ms <= 0) fail("pdb_ms > 0");
  if (sps.t1_ms > sps.t2_ms()) fail("t1_ms <= t2_ms");
  if (!(0 < sps.cs_min && sps.cs_min < sps.cs_max)) fail("0 < cs_min < cs_max");
  if (sps.oneshot && !(0 < sps.oneshot->alpha && sps.oneshot->alpha < sps.oneshot->beta))
    fail("0 < oneshot alpha < oneshot beta");
  const double steps = sps.keep_prob / 0.2;
  if (sps.keep_prob < -1e-12 || sps.keep_prob > 0.8 + 1e-12 || std::abs(steps - std::round(steps)) > 1e-9)
    fail("keep_prob in {0, 0.2, 0.4, 0.6, 0.8}");
  if (sps.esps_max_intervals < 0) fail("esps_max_intervals >= 1 or 0 (unlimited)");
  if (!(sps.candidate_fraction > 0.0 && sps.candidate_fraction <= 1.0)) fail("0 < candidate_fraction <= 1");
  if (!(sps.rsrp_threshold_step_db > 0.0)) fail("rsrp_threshold_step_db > 0");
  if (sps.sensing_depth_ms != 1000) fail("sensing_depth_ms == 1000");
  if (sps.sensing_depth_ms % sps.reservation_period_ms() != 0) fail("sensing depth is a multiple of the reservation period");
}

std::uint64_t stream_id(StreamDomain domain, std::uint32_t vehicle) {
  return (static_cast<std::uint64_t>(domain) << 32) | vehicle;
}

std::size_t vehicle_count(const ScenarioConfig& cfg) {
  const double exact = cfg.density_vpk * cfg.highway_length_m / 1000.0;
  return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

bool World::in_stats_region(std::size_t v) const {
  const double x = vehicles[v].position_m;
  return x >= scenario.stats_region_lo * scenario.highway_length_m &&
         x < scenario.stats_region_hi * scenario.highway_length_m;
}

RngStream World::mac_stream(std::uint32_t v) const {
  return derive_rng(scenario.master_seed, stream_id(StreamDomain::mac, v));
}

RngStream World::channel_stream(std::uint32_t v) const {
  return derive_rng(scenario.master_seed, stream_id(StreamDomain::channel, v));
}

World build_world(const ScenarioConfig& cfg, const SpsConfig& sps) {
  validate(cfg);
  validate(sps);
  World w;
  w.scenario = cfg;
  w.sps = sps;
  const std::size_t n = vehicle_count(cfg);
  w.spacing_m = cfg.highway_length_m / static_cast<double>(n);
  w.subchannels = cfg.effective_subchannels();
  w.pairs_per_subframe = w.subchannels / cfg.subchannels_per_bsm;
  w.vehicles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& v = w.vehicles[i];
    v.id = static_cast<std::uint32_t>(i);
    v.position_m = (static_cast<double>(i) + 0.5) * w.spacing_m;
    RngStream placement = derive_rng(cfg.master_seed, stream_id(StreamDomain::placement, v.id));
    v.initial_offset_ms = static_cast<int>(placement.uniform_int(0, sps.reservation_period_ms() - 1));
  }
  return w;
}

}  // namespace cv2x
