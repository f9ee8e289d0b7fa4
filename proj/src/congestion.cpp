// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/congestion.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "cv2x/scenario.hpp"

namespace cv2x {

void validate(const CongestionParams& p) {
  if (!(p.radius_m > 0.0)) throw InvalidConfig("invalid-config: congestion radius_m > 0");
  if (!(p.density_coeff > 0.0)) throw InvalidConfig("invalid-config: congestion density_coeff > 0");
  if (!(p.lambda > 0.0 && p.lambda <= 1.0)) throw InvalidConfig("invalid-config: 0 < congestion lambda <= 1");
  if (!(p.base_interval_ms > 0.0 && p.i_max_ms >= p.base_interval_ms))
    throw InvalidConfig("invalid-config: 0 < base_interval_ms <= i_max_ms");
  if (p.update_period_ms <= 0 || p.window_ms <= 0)
    throw InvalidConfig("invalid-config: congestion update_period_ms and window_ms > 0");
}

double generation_interval(double n_smoothed, const CongestionParams& p) {
  if (n_smoothed < p.density_coeff) return p.base_interval_ms;
  return std::min(p.i_max_ms, p.base_interval_ms * n_smoothed / p.density_coeff);
}

CongestionState::CongestionState(std::uint32_t self, std::uint32_t ids_lo, std::uint32_t ids_hi,
                                 const CongestionParams& p)
    : self_(self),
      lo_(ids_lo),
      hi_(ids_hi),
      last_heard_(ids_hi - ids_lo + 1, std::numeric_limits<std::int64_t>::min() / 2),
      window_ms_(p.window_ms),
      interval_ms_(p.base_interval_ms) {}

int CongestionState::neighbour_count(std::int64_t now) const {
  int n = 0;
  for (const auto t : last_heard_) n += (now - t < window_ms_) ? 1 : 0;
  return n;
}

CongestionState& update_density(CongestionState& st, std::int64_t now, const CongestionParams& p) {
  st.n_count_ = st.neighbour_count(now);
  st.n_smoothed_ = p.lambda * st.n_count_ + (1.0 - p.lambda) * st.n_smoothed_;
  st.interval_ms_ = p.enabled ? generation_interval(st.n_smoothed_, p) : p.base_interval_ms;
  return st;
}

bool gate_transmission(const CongestionState& st, std::int64_t sps_subframe) {
  return st.pending_generation.has_value() && *st.pending_generation <= sps_subframe;
}

void write_congestion_header(std::ostream& out) { out << "subframe,vehicle,n_c,n_s,interval_ms\n"; }

void write_congestion_row(std::ostream& out, const CongestionSample& s) {
  out << fmt::format("{},{},{},{:.6f},{:.6f}\n", s.subframe, s.vehicle, s.n_count, s.n_smoothed, s.interval_ms);
}

}  // namespace cv2x
