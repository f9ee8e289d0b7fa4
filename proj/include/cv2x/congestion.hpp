// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

namespace cv2x {

struct CongestionParams {
  bool enabled = true;
  double radius_m = 100.0;
  double i_max_ms = 600.0;
  double density_coeff = 25.0;  // B
  double lambda = 0.05;
  double base_interval_ms = 100.0;
  int update_period_ms = 100;
  int window_ms = 1000;
};

void validate(const CongestionParams& p);

/// Maximum BSM generation interval for a smoothed density:
/// 100 ms below B, 100 * N_s / B on the ramp, capped at I_max.
double generation_interval(double n_smoothed, const CongestionParams& p);

/**
 * Per-vehicle congestion-control state.
 *
 * Neighbours are the vehicles within `radius_m` on the fixed layout, tracked
 * by id with the sub-frame in which a BSM from them was last decoded.
 */
class CongestionState {
public:
  CongestionState() = default;
  /// `ids_lo..ids_hi` (inclusive) are the vehicles within radius of `self`.
  CongestionState(std::uint32_t self, std::uint32_t ids_lo, std::uint32_t ids_hi, const CongestionParams& p);

  void heard(std::uint32_t sender, std::int64_t sf) {
    if (sender < lo_ || sender > hi_ || sender == self_) return;
    last_heard_[sender - lo_] = sf;
  }
  /// Unique neighbours heard in (now - window, now].
  int neighbour_count(std::int64_t now) const;

  double n_smoothed() const { return n_smoothed_; }
  int n_count() const { return n_count_; }
  double interval_ms() const { return interval_ms_; }

  // Generation bookkeeping.
  std::optional<std::int64_t> pending_generation;  // BSM waiting for transmission
  double next_generation_ms = 0.0;

private:
  friend CongestionState& update_density(CongestionState& st, std::int64_t now, const CongestionParams& p);

  std::uint32_t self_ = 0;
  std::uint32_t lo_ = 0;
  std::uint32_t hi_ = 0;
  std::vector<std::int64_t> last_heard_;
  int window_ms_ = 1000;
  int n_count_ = 0;
  double n_smoothed_ = 0.0;
  double interval_ms_ = 100.0;
};

/// N_s <- lambda * N_c + (1 - lambda) * N_s, then refresh I. Call every update period.
CongestionState& update_density(CongestionState& st, std::int64_t now, const CongestionParams& p);

/// True iff a BSM generated since the last transmission is pending at `sps_subframe`.
bool gate_transmission(const CongestionState& st, std::int64_t sps_subframe);

struct CongestionSample {
  std::int64_t subframe = 0;
  std::uint32_t vehicle = 0;
  int n_count = 0;
  double n_smoothed = 0.0;
  double interval_ms = 0.0;
};

void write_congestion_header(std::ostream& out);
void write_congestion_row(std::ostream& out, const CongestionSample& s);

}  // namespace cv2x
