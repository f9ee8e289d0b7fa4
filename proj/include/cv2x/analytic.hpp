// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cv2x/metrics.hpp"
#include "cv2x/scenario.hpp"

namespace cv2x {

struct TailModelParams {
  double rho = 5.0;    // SPS reselection window
  double sigma = 15.0;
  double p = 0.2;      // reselection probability when the SPS counter expires
  std::optional<OneShotWindow> oneshot;
  double p_f = 0.9;    // success probability of a fresh selection
  double pdb_ms = 100.0;
  double t1_ms = 4.0;
  double interval_ms = 100.0;  // BSM generation interval
  int k_max = 200;

  static TailModelParams from(const SpsConfig& sps, double p_f, double interval_ms, int k_max = 200);
};

void validate(const TailModelParams& p);

/// Mean opportunities between reselections: (rho + (sigma - rho) / 2) / p.
double expected_reselection_time(double rho, double sigma, double p);

/// Per-opportunity reselection probability: 0 for k <= rho, else
/// 2kp / ((sigma + rho)(k - rho)) clamped to [0, 1].
double q_k(int k, double rho, double sigma, double p);

/// 1 - (1 - q_s)(1 - q_o) written as the three exclusive events.
double q_interleaved(double q_s, double q_o);

/// Probability that opportunity k ends the gap:
/// (1-q) q P_f + (1-q) q + q^2 P_f.
double p_success(double q_i, double p_f);

double slippage_psi(double interval_ms, double pdb_ms);
double slippage_gamma(double t1_ms, double pdb_ms);

/// Probability of slipping out of a shared sub-frame at failure k; 0 when
/// the interval is a multiple of the delay budget. Each term is clamped to [0, 1].
double slippage_prob(int k, double pdb_ms, double t1_ms, double interval_ms);

/// P(T > k) for k = 0..k_max, with a millisecond axis of k * interval.
struct TailCurve {
  std::vector<double> p;
  double interval_ms = 100.0;
  bool clamped = false;  // cumulative slippage reached 1

  /// Log-linear interpolation between opportunities; 0 past k_max.
  double at_ms(double t_ms) const;
};

TailCurve tail_no_slippage(const TailModelParams& params);
TailCurve tail_with_slippage(const TailModelParams& params);

/// Least-squares slope of ln(y) against t in seconds, over (t_ms, y) points
/// with y > 0. Throws std::invalid_argument with fewer than two such points.
double fit_log_slope(std::span<const std::pair<double, double>> points);

std::vector<std::pair<double, double>> sample_curve(const TailCurve& c, double lo_ms, double hi_ms, double step_ms);
std::vector<std::pair<double, double>> sample_curve(const CcdfCurve& c, double lo_ms, double hi_ms, double step_ms);

struct SlopeComparison {
  double sim_slope = 0.0;    // per second
  double model_slope = 0.0;
  double ratio = 0.0;        // max(a/b, b/a); infinite when signs differ or one is zero
  double rms_gap = 0.0;      // RMS of ln(sim) - ln(anchored model)
  int points = 0;
};

/// Anchors the model at `anchor_ms` to the simulated level, then compares
/// log slopes on [lo, hi] using the simulated grid points where the CCDF is positive.
SlopeComparison compare_slopes(const CcdfCurve& sim, const TailCurve& model, double lo_ms = 3000.0,
                               double hi_ms = 10000.0, double anchor_ms = 3000.0);

}  // namespace cv2x
