// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "cv2x/rng.hpp"
#include "cv2x/scenario.hpp"

namespace cv2x {

enum class GrantOrigin : std::uint8_t { sps = 0, oneshot = 1 };

/**
 * A resource: `vrb_count` contiguous sub-channels in one sub-frame.
 *
 * `subframe` is the absolute sub-frame picked from the selection window. An
 * SPS grant recurs every reservation period at the same phase
 * (subframe mod period); a one-shot grant is used exactly once.
 */
struct Grant {
  std::int64_t subframe = 0;
  int vrb_start = 0;
  int vrb_count = 2;
  GrantOrigin origin = GrantOrigin::sps;

  int phase(int period) const { return static_cast<int>(((subframe % period) + period) % period); }
  bool same_resource(const Grant& o, int period) const {
    return phase(period) == o.phase(period) && vrb_start == o.vrb_start && vrb_count == o.vrb_count;
  }
  bool operator==(const Grant&) const = default;
};

/// Transmission sub-frame for a BSM generated at `generation_sf`. One-shot
/// grants transmit at their own sub-frame. SPS grants use the first
/// reserved occurrence no earlier than generation + T1.
std::int64_t grant_to_subframe(const Grant& grant, std::int64_t generation_sf, int t1_ms, int period_ms);

/**
 * Per-vehicle sensing state over the last `depth` sub-frames.
 *
 * S-RSSI is kept per (sub-frame, sub-channel) in a ring buffer, with a running
 * per-phase sum so the average over the same phase of the last depth/period
 * periods is O(1). Decoded SCIs that announce a reservation are kept per
 * (phase, aligned sub-channel group), keeping the strongest live one.
 */
class SensingHistory {
public:
  SensingHistory(int subchannels, int vrbs_per_pair, int depth_ms, int period_ms, double busy_threshold_dbm);

  int subchannels() const { return subchannels_; }
  int pairs() const { return pairs_; }
  int depth() const { return depth_; }
  int period() const { return period_; }

  /// Store one sub-frame of per-sub-channel S-RSSI (mW). Sub-frames must be
  /// recorded in increasing order without gaps.
  void record_rssi(std::int64_t sf, std::span<const float> rssi_mw);
  /// The vehicle transmitted in `sf` and could not sense: carry forward the
  /// value seen one period earlier.
  void record_unsensed(std::int64_t sf);
  /// A decoded SCI from `sender` on (phase, pair).
  void record_sci(std::int64_t sf, std::uint32_t sender, int phase, int pair, float rsrp_dbm, bool reserves);

  /// Mean S-RSSI (mW) of one sub-channel over same-phase sub-frames in the
  /// buffer; never-written entries count as silent.
  double avg_rssi_mw(int phase, int vrb) const {
    return sums_[static_cast<std::size_t>(phase * subchannels_ + vrb)] / samples_per_phase_;
  }
  /// Strongest RSRP among reservations on (phase, pair) heard within the
  /// last depth sub-frames of `now`; -inf when none.
  float reserved_rsrp(std::int64_t now, int phase, int pair) const;

  /// Sub-channels of the last period whose averaged S-RSSI exceeds the busy threshold.
  int busy_count() const { return busy_count_; }
  double busy_ratio() const { return static_cast<double>(busy_count_) / (period_ * subchannels_); }
  /// Number of sub-frames recorded so far.
  std::int64_t recorded() const { return recorded_; }

private:
  void store(std::int64_t sf, int vrb, float value);

  struct Reservation {
    float rsrp_dbm = -std::numeric_limits<float>::infinity();
    std::uint32_t sender = kNone;
    std::int64_t heard_sf = std::numeric_limits<std::int64_t>::min() / 2;
  };
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  int subchannels_;
  int pairs_;
  int depth_;
  int period_;
  double samples_per_phase_;
  double busy_sum_threshold_;
  std::vector<float> ring_;     // depth x subchannels
  std::vector<double> sums_;    // period x subchannels
  std::vector<std::uint8_t> busy_;
  int busy_count_ = 0;
  std::int64_t recorded_ = 0;
  std::vector<Reservation> reservations_;  // period x pairs
};

using CandidateList = std::vector<Grant>;

struct SelectionParams {
  int t1_ms = 4;
  int t2_ms = 90;
  int vrbs_per_bsm = 2;
  double candidate_fraction = 0.2;
  double rsrp_threshold_dbm_init = -110.0;
  double rsrp_threshold_step_db = 3.0;

  static SelectionParams from(const SpsConfig& sps, int vrbs_per_bsm);
};

struct SelectionStats {
  int window_resources = 0;
  int threshold_raises = 0;
  double final_threshold_dbm = 0.0;
};

/**
 * Candidate resources for a BSM generated at `n`, over the window [n+T1, n+T2]:
 *  1. drop resources reserved by a decoded SCI whose RSRP exceeds the threshold;
 *  2. while fewer than candidate_fraction of the window remain, raise the threshold;
 *  3. rank survivors by mean S-RSSI (ties by sub-frame, then sub-channel) and
 *     return the lowest candidate_fraction of all window resources.
 * `exclude`, when set, removes that resource from ranking (one-shot picks skip
 * the vehicle's own SPS resource).
 */
CandidateList select_candidates(const SensingHistory& history, std::int64_t n, const SelectionParams& params,
                                const Grant* exclude = nullptr, SelectionStats* stats = nullptr);

struct SchedulerState {
  int c_s = 0;
  std::optional<int> c_o;
  std::optional<Grant> current_grant;    // grant used by the last transmission
  std::optional<Grant> saved_sps_grant;  // present iff current_grant is a one-shot
  int esps_intervals_used = 0;

  const Grant* sps_grant() const {
    if (saved_sps_grant) return &*saved_sps_grant;
    return current_grant ? &*current_grant : nullptr;
  }
};

enum class TickCase : std::uint8_t { initial, reuse, sps_expired, oneshot_expired, both_expired };

struct TickResult {
  Grant grant;
  TickCase tick_case = TickCase::reuse;
  bool sps_reselected = false;  // a new SPS grant was drawn
};

/// Produces candidates for a fresh pick; `exclude` is the SPS grant a
/// one-shot must avoid, or null for SPS (re)selection.
using CandidateSource = std::function<CandidateList(const Grant* exclude)>;

/**
 * One transmission opportunity of interleaved one-shot SPS.
 *
 * - both counters positive: reuse the SPS grant, decrement both;
 * - c_s == 0, c_o > 0: reselect with probability 1 - keep_prob (or forced by
 *   the eSPS interval cap) and reset both counters, else redraw c_s only;
 * - c_o == 0, c_s > 0: transmit once on a fresh one-shot grant, stash the SPS grant, reset c_o;
 * - both zero: reset both; reselect with 1 - keep_prob, otherwise keep the
 *   SPS grant for the next opportunity and transmit now on a one-shot grant.
 * Counters count down once per transmission including the current one.
 *
 * Draw order is fixed: keep/reselect uniform (always drawn when c_s == 0),
 * c_s draw, c_o draw, candidate pick.
 */
TickResult sps_transmit_tick(SchedulerState& state, const CandidateSource& candidates, RngStream& rng,
                             const SpsConfig& cfg);

/// One line per scheduler decision, for conformance diffing.
struct SchedulerTraceRow {
  std::int64_t subframe = 0;     // BSM generation
  std::int64_t tx_subframe = 0;  // planned transmission
  std::uint32_t vehicle = 0;
  Grant grant;
  TickCase tick_case = TickCase::reuse;
  int c_s = 0;
  int c_o = -1;
  int esps_intervals_used = 0;
};

void write_trace_header(std::ostream& out);
void write_trace_row(std::ostream& out, const SchedulerTraceRow& row);

const char* to_string(TickCase c);
const char* to_string(GrantOrigin o);

}  // namespace cv2x
