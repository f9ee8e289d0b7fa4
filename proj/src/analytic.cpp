// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cv2x {

TailModelParams TailModelParams::from(const SpsConfig& sps, double p_f, double interval_ms, int k_max) {
  TailModelParams m;
  m.rho = sps.cs_min;
  m.sigma = sps.cs_max;
  m.p = sps.reselect_prob();
  m.oneshot = sps.oneshot;
  m.p_f = p_f;
  m.pdb_ms = sps.pdb_ms;
  m.t1_ms = sps.t1_ms;
  m.interval_ms = interval_ms;
  m.k_max = k_max;
  return m;
}

void validate(const TailModelParams& m) {
  if (!(0.0 < m.rho && m.rho < m.sigma)) throw InvalidConfig("invalid-config: 0 < rho < sigma");
  if (!(m.p > 0.0 && m.p <= 1.0)) throw InvalidConfig("invalid-config: p in (0, 1]");
  if (!(m.p_f >= 0.0 && m.p_f <= 1.0)) throw InvalidConfig("invalid-config: P_f in [0, 1]");
  if (m.oneshot && !(0 < m.oneshot->alpha && m.oneshot->alpha < m.oneshot->beta))
    throw InvalidConfig("invalid-config: 0 < oneshot alpha < oneshot beta");
  if (!(m.interval_ms > 0.0) || !(m.pdb_ms > m.t1_ms) || m.t1_ms < 0.0)
    throw InvalidConfig("invalid-config: interval > 0 and 0 <= T1 < PDB");
  if (m.k_max < 1) throw InvalidConfig("invalid-config: k_max >= 1");
}

double expected_reselection_time(double rho, double sigma, double p) { return (rho + (sigma - rho) / 2.0) / p; }

double q_k(int k, double rho, double sigma, double p) {
  if (static_cast<double>(k) <= rho) return 0.0;
  const double q = 2.0 * k * p / ((sigma + rho) * (k - rho));
  return std::clamp(q, 0.0, 1.0);
}

double q_interleaved(double q_s, double q_o) { return q_o * (1.0 - q_s) + q_s * (1.0 - q_o) + q_s * q_o; }

double p_success(double q_i, double p_f) {
  return (1.0 - q_i) * q_i * p_f + (1.0 - q_i) * q_i + q_i * q_i * p_f;
}

double slippage_psi(double interval_ms, double pdb_ms) {
  const double psi = std::fmod(interval_ms, pdb_ms);
  return (psi < 1e-9 || pdb_ms - psi < 1e-9) ? 0.0 : psi;
}

double slippage_gamma(double t1_ms, double pdb_ms) { return t1_ms / (pdb_ms - t1_ms); }

double slippage_prob(int k, double pdb_ms, double t1_ms, double interval_ms) {
  const double psi = slippage_psi(interval_ms, pdb_ms);
  if (psi == 0.0) return 0.0;
  const double span = pdb_ms - t1_ms;
  const double gamma = slippage_gamma(t1_ms, pdb_ms);
  const double kk = static_cast<double>(k);
  double q = 0.0;
  if (kk <= psi - t1_ms) {
    const double phi = span - kk * psi;
    q = psi / span * (phi / span + (phi + t1_ms) / span);
  } else if (kk <= psi + t1_ms) {
    q = 2.0 * gamma * gamma + gamma * ((psi - t1_ms) / span);
  } else {
    q = gamma * gamma;
  }
  return std::clamp(q, 0.0, 1.0);
}

double TailCurve::at_ms(double t_ms) const {
  if (t_ms <= 0.0) return 1.0;
  const double k = t_ms / interval_ms;
  const auto k0 = static_cast<std::size_t>(std::floor(k));
  if (k0 + 1 >= p.size()) return k0 + 1 == p.size() && k == static_cast<double>(k0) ? p.back() : 0.0;
  const double f = k - static_cast<double>(k0);
  const double a = p[k0];
  const double b = p[k0 + 1];
  if (f == 0.0) return a;
  if (a <= 0.0 || b <= 0.0) return a + f * (b - a);
  return std::exp((1.0 - f) * std::log(a) + f * std::log(b));
}

namespace {

TailCurve tail(const TailModelParams& m, bool slippage) {
  validate(m);
  TailCurve c;
  c.interval_ms = m.interval_ms;
  c.p.resize(static_cast<std::size_t>(m.k_max) + 1);
  c.p[0] = 1.0;
  double prod = 1.0;
  double slip = 0.0;
  for (int k = 1; k <= m.k_max; ++k) {
    const double qs = q_k(k, m.rho, m.sigma, m.p);
    const double qo = m.oneshot ? q_k(k, m.oneshot->alpha, m.oneshot->beta, 1.0) : 0.0;
    prod *= 1.0 - p_success(q_interleaved(qs, qo), m.p_f);
    double v = prod;
    if (slippage) {
      slip += slippage_prob(k, m.pdb_ms, m.t1_ms, m.interval_ms);
      if (slip >= 1.0) {
        slip = 1.0;
        c.clamped = true;
      }
      v *= 1.0 - slip;
    }
    c.p[static_cast<std::size_t>(k)] = std::clamp(v, 0.0, 1.0);
  }
  return c;
}

}  // namespace

TailCurve tail_no_slippage(const TailModelParams& params) { return tail(params, false); }
TailCurve tail_with_slippage(const TailModelParams& params) { return tail(params, true); }

double fit_log_slope(std::span<const std::pair<double, double>> points) {
  double n = 0.0;
  double sx = 0.0;
  double sy = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [t_ms, y] : points) {
    if (!(y > 0.0)) continue;
    const double x = t_ms / 1000.0;
    const double ly = std::log(y);
    n += 1.0;
    sx += x;
    sy += ly;
    sxx += x * x;
    sxy += x * ly;
  }
  const double den = n * sxx - sx * sx;
  if (n < 2.0 || !(den > 0.0)) throw std::invalid_argument("log-slope fit needs at least two positive points");
  return (n * sxy - sx * sy) / den;
}

std::vector<std::pair<double, double>> sample_curve(const TailCurve& c, double lo_ms, double hi_ms, double step_ms) {
  std::vector<std::pair<double, double>> out;
  const auto n = static_cast<long long>(std::floor((hi_ms - lo_ms) / step_ms + 1e-9));
  for (long long i = 0; i <= n; ++i) {
    const double t = lo_ms + static_cast<double>(i) * step_ms;
    out.emplace_back(t, c.at_ms(t));
  }
  return out;
}

std::vector<std::pair<double, double>> sample_curve(const CcdfCurve& c, double lo_ms, double hi_ms, double step_ms) {
  std::vector<std::pair<double, double>> out;
  const auto n = static_cast<long long>(std::floor((hi_ms - lo_ms) / step_ms + 1e-9));
  for (long long i = 0; i <= n; ++i) {
    const double t = lo_ms + static_cast<double>(i) * step_ms;
    out.emplace_back(t, c.at(t));
  }
  return out;
}

SlopeComparison compare_slopes(const CcdfCurve& sim, const TailCurve& model, double lo_ms, double hi_ms,
                               double anchor_ms) {
  auto sim_pts = sample_curve(sim, lo_ms, hi_ms, 1.0);
  std::erase_if(sim_pts, [](const auto& pt) { return !(pt.second > 0.0); });
  std::vector<std::pair<double, double>> model_pts;
  model_pts.reserve(sim_pts.size());
  for (const auto& [t, y] : sim_pts) model_pts.emplace_back(t, model.at_ms(t));

  SlopeComparison out;
  out.points = static_cast<int>(sim_pts.size());
  out.sim_slope = fit_log_slope(sim_pts);
  out.model_slope = fit_log_slope(model_pts);
  const double a = out.sim_slope;
  const double b = out.model_slope;
  if (a == 0.0 || b == 0.0 || (a < 0.0) != (b < 0.0))
    out.ratio = (a == b) ? 1.0 : std::numeric_limits<double>::infinity();
  else
    out.ratio = std::max(a / b, b / a);

  const double sim_anchor = sim.at(anchor_ms);
  const double model_anchor = model.at_ms(anchor_ms);
  double ss = 0.0;
  int used = 0;
  if (sim_anchor > 0.0 && model_anchor > 0.0) {
    const double shift = std::log(sim_anchor) - std::log(model_anchor);
    for (std::size_t i = 0; i < sim_pts.size(); ++i) {
      if (!(model_pts[i].second > 0.0)) continue;
      const double d = std::log(sim_pts[i].second) - (std::log(model_pts[i].second) + shift);
      ss += d * d;
      ++used;
    }
  }
  out.rms_gap = used > 0 ? std::sqrt(ss / used) : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace cv2x
