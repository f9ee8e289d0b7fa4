// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/mac_sps.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cv2x {

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; }

}  // namespace

std::int64_t grant_to_subframe(const Grant& grant, std::int64_t generation_sf, int t1_ms, int period_ms) {
  if (grant.origin == GrantOrigin::oneshot) return grant.subframe;
  const std::int64_t earliest = generation_sf + t1_ms;
  return earliest + floor_mod(grant.subframe - earliest, period_ms);
}

SensingHistory::SensingHistory(int subchannels, int vrbs_per_pair, int depth_ms, int period_ms,
                               double busy_threshold_dbm)
    : subchannels_(subchannels),
      pairs_(subchannels / vrbs_per_pair),
      depth_(depth_ms),
      period_(period_ms),
      samples_per_phase_(static_cast<double>(depth_ms / period_ms)),
      busy_sum_threshold_(std::pow(10.0, busy_threshold_dbm / 10.0) * (depth_ms / period_ms)) {
  if (subchannels <= 0 || vrbs_per_pair <= 0 || pairs_ <= 0) throw std::invalid_argument("bad sub-channel layout");
  if (period_ms <= 0 || depth_ms <= 0 || depth_ms % period_ms != 0)
    throw std::invalid_argument("sensing depth must be a positive multiple of the period");
  ring_.assign(static_cast<std::size_t>(depth_) * subchannels_, 0.0f);
  sums_.assign(static_cast<std::size_t>(period_) * subchannels_, 0.0);
  busy_.assign(sums_.size(), 0);
  reservations_.assign(static_cast<std::size_t>(period_) * pairs_, Reservation{});
}

void SensingHistory::store(std::int64_t sf, int vrb, float value) {
  const auto slot = static_cast<std::size_t>(floor_mod(sf, depth_) * subchannels_ + vrb);
  const auto ph = static_cast<std::size_t>(floor_mod(sf, period_) * subchannels_ + vrb);
  sums_[ph] += static_cast<double>(value) - static_cast<double>(ring_[slot]);
  ring_[slot] = value;
  const std::uint8_t busy = sums_[ph] > busy_sum_threshold_ ? 1 : 0;
  busy_count_ += static_cast<int>(busy) - static_cast<int>(busy_[ph]);
  busy_[ph] = busy;
}

void SensingHistory::record_rssi(std::int64_t sf, std::span<const float> rssi_mw) {
  if (sf != recorded_) throw std::logic_error("sensing history must be recorded contiguously");
  if (rssi_mw.size() != static_cast<std::size_t>(subchannels_)) throw std::invalid_argument("rssi width mismatch");
  for (int v = 0; v < subchannels_; ++v) store(sf, v, rssi_mw[static_cast<std::size_t>(v)]);
  ++recorded_;
}

void SensingHistory::record_unsensed(std::int64_t sf) {
  if (sf != recorded_) throw std::logic_error("sensing history must be recorded contiguously");
  for (int v = 0; v < subchannels_; ++v) {
    float carried = 0.0f;
    if (sf >= period_) carried = ring_[static_cast<std::size_t>(floor_mod(sf - period_, depth_) * subchannels_ + v)];
    store(sf, v, carried);
  }
  ++recorded_;
}

void SensingHistory::record_sci(std::int64_t sf, std::uint32_t sender, int phase, int pair, float rsrp_dbm,
                                bool reserves) {
  auto& e = reservations_[static_cast<std::size_t>(phase * pairs_ + pair)];
  const bool live = e.sender != kNone && sf - e.heard_sf < depth_;
  if (reserves) {
    if (!live || e.sender == sender || rsrp_dbm >= e.rsrp_dbm) e = Reservation{rsrp_dbm, sender, sf};
  } else if (live && e.sender == sender) {
    e = Reservation{};
  }
}

float SensingHistory::reserved_rsrp(std::int64_t now, int phase, int pair) const {
  const auto& e = reservations_[static_cast<std::size_t>(phase * pairs_ + pair)];
  if (e.sender == kNone || now - e.heard_sf >= depth_) return -std::numeric_limits<float>::infinity();
  return e.rsrp_dbm;
}

SelectionParams SelectionParams::from(const SpsConfig& sps, int vrbs_per_bsm) {
  SelectionParams p;
  p.t1_ms = sps.t1_ms;
  p.t2_ms = sps.t2_ms();
  p.vrbs_per_bsm = vrbs_per_bsm;
  p.candidate_fraction = sps.candidate_fraction;
  p.rsrp_threshold_dbm_init = sps.rsrp_exclude_threshold_dbm_init;
  p.rsrp_threshold_step_db = sps.rsrp_threshold_step_db;
  return p;
}

CandidateList select_candidates(const SensingHistory& history, std::int64_t n, const SelectionParams& params,
                                const Grant* exclude, SelectionStats* stats) {
  const int period = history.period();
  const int pairs = history.pairs();
  const std::int64_t lo = n + params.t1_ms;
  const int window = params.t2_ms - params.t1_ms + 1;
  const int total = window * pairs;
  const int target =
      std::max(1, static_cast<int>(std::ceil(params.candidate_fraction * total - 1e-9)));

  struct Resource {
    std::int64_t sf;
    int pair;
    float rsrp;
    bool own;
    double rssi;
  };
  std::vector<Resource> res;
  res.reserve(static_cast<std::size_t>(total));
  float max_rsrp = -std::numeric_limits<float>::infinity();
  for (int k = 0; k < window; ++k) {
    const std::int64_t sf = lo + k;
    const int phase = static_cast<int>(floor_mod(sf, period));
    for (int p = 0; p < pairs; ++p) {
      const bool own = exclude != nullptr && exclude->phase(period) == phase &&
                       exclude->vrb_start == p * params.vrbs_per_bsm;
      const float r = history.reserved_rsrp(n, phase, p);
      if (!own) max_rsrp = std::max(max_rsrp, r);
      res.push_back({sf, p, r, own, 0.0});
    }
  }

  double thr = params.rsrp_threshold_dbm_init;
  int raises = 0;
  auto count_left = [&] {
    return static_cast<int>(std::count_if(res.begin(), res.end(),
                                          [&](const Resource& r) { return !r.own && !(r.rsrp > thr); }));
  };
  int left = count_left();
  while (left < target && thr < max_rsrp) {
    thr += params.rsrp_threshold_step_db;
    ++raises;
    left = count_left();
  }

  std::erase_if(res, [&](const Resource& r) { return r.own || r.rsrp > thr; });
  for (auto& r : res) {
    const int phase = static_cast<int>(floor_mod(r.sf, period));
    double sum = 0.0;
    for (int v = 0; v < params.vrbs_per_bsm; ++v) sum += history.avg_rssi_mw(phase, r.pair * params.vrbs_per_bsm + v);
    r.rssi = sum / params.vrbs_per_bsm;
  }
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(target), res.size());
  std::partial_sort(res.begin(), res.begin() + static_cast<std::ptrdiff_t>(keep), res.end(),
                    [](const Resource& a, const Resource& b) {
                      if (a.rssi != b.rssi) return a.rssi < b.rssi;
                      if (a.sf != b.sf) return a.sf < b.sf;
                      return a.pair < b.pair;
                    });
  res.resize(keep);
  std::sort(res.begin(), res.end(), [](const Resource& a, const Resource& b) {
    return a.sf != b.sf ? a.sf < b.sf : a.pair < b.pair;
  });

  CandidateList out;
  out.reserve(res.size());
  for (const auto& r : res) out.push_back(Grant{r.sf, r.pair * params.vrbs_per_bsm, params.vrbs_per_bsm, GrantOrigin::sps});
  if (stats) *stats = SelectionStats{total, raises, thr};
  return out;
}

TickResult sps_transmit_tick(SchedulerState& st, const CandidateSource& candidates, RngStream& rng,
                             const SpsConfig& cfg) {
  const bool with_oneshot = cfg.oneshot.has_value();
  auto draw_cs = [&] { return static_cast<int>(rng.uniform_int(cfg.cs_min, cfg.cs_max)); };
  auto draw_co = [&] { return static_cast<int>(rng.uniform_int(cfg.oneshot->alpha, cfg.oneshot->beta)); };
  auto pick = [&](const Grant* exclude, GrantOrigin origin) {
    const CandidateList list = candidates(exclude);
    if (list.empty()) throw std::logic_error("empty candidate list");
    Grant g = list[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(list.size()) - 1))];
    g.origin = origin;
    return g;
  };
  auto use_sps = [&](const Grant& g, TickCase c, bool reselected) {
    st.current_grant = g;
    st.saved_sps_grant.reset();
    return TickResult{g, c, reselected};
  };
  auto use_oneshot = [&](const Grant& sps, const Grant& os, TickCase c) {
    st.saved_sps_grant = sps;
    st.current_grant = os;
    return TickResult{os, c, false};
  };

  if (!st.current_grant) {
    st.c_s = draw_cs() - 1;
    if (with_oneshot) st.c_o = draw_co() - 1;
    st.esps_intervals_used = 1;
    return use_sps(pick(nullptr, GrantOrigin::sps), TickCase::initial, true);
  }

  const Grant sps = *st.sps_grant();
  const bool cs_zero = st.c_s == 0;
  const bool co_zero = with_oneshot && st.c_o.value_or(1) == 0;

  if (!cs_zero && !co_zero) {
    --st.c_s;
    if (st.c_o) --*st.c_o;
    return use_sps(sps, TickCase::reuse, false);
  }

  if (cs_zero) {
    const double u = rng.uniform();
    const bool forced = cfg.esps_max_intervals > 0 && st.esps_intervals_used >= cfg.esps_max_intervals;
    const TickCase c = co_zero ? TickCase::both_expired : TickCase::sps_expired;
    st.c_s = draw_cs() - 1;
    if (forced || u < cfg.reselect_prob()) {
      if (with_oneshot) st.c_o = draw_co() - 1;
      st.esps_intervals_used = 1;
      return use_sps(pick(nullptr, GrantOrigin::sps), c, true);
    }
    ++st.esps_intervals_used;
    if (!co_zero) {
      if (st.c_o) --*st.c_o;
      return use_sps(sps, c, false);
    }
    st.c_o = draw_co() - 1;
    return use_oneshot(sps, pick(&sps, GrantOrigin::oneshot), c);
  }

  // Only the one-shot counter expired.
  --st.c_s;
  st.c_o = draw_co() - 1;
  return use_oneshot(sps, pick(&sps, GrantOrigin::oneshot), TickCase::oneshot_expired);
}

const char* to_string(TickCase c) {
  switch (c) {
    case TickCase::initial: return "initial";
    case TickCase::reuse: return "reuse";
    case TickCase::sps_expired: return "sps_expired";
    case TickCase::oneshot_expired: return "oneshot_expired";
    case TickCase::both_expired: return "both_expired";
  }
  return "?";
}

const char* to_string(GrantOrigin o) { return o == GrantOrigin::sps ? "sps" : "oneshot"; }

void write_trace_header(std::ostream& out) {
  out << "subframe,tx_subframe,vehicle,case,origin,grant_subframe,vrb_start,vrb_count,c_s,c_o,esps_intervals\n";
}

void write_trace_row(std::ostream& out, const SchedulerTraceRow& r) {
  out << r.subframe << ',' << r.tx_subframe << ',' << r.vehicle << ',' << to_string(r.tick_case) << ',' << to_string(r.grant.origin) << ','
      << r.grant.subframe << ',' << r.grant.vrb_start << ',' << r.grant.vrb_count << ',' << r.c_s << ',' << r.c_o
      << ',' << r.esps_intervals_used << '\n';
}

}  // namespace cv2x
