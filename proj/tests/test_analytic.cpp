// SPDX-License-Identifier: GPL-2.0-only
#include <doctest.h>

#include <cmath>
#include <map>

#include "cv2x/analytic.hpp"

using namespace cv2x;

namespace {

/// Exact probability that an SPS process selected fresh at opportunity 0
/// reselects at opportunity k = 1..k_max: counters uniform on [rho, sigma],
/// reselection with probability p at each expiry, counter redrawn either way.
std::vector<double> renewal_density(int rho, int sigma, double p, int k_max) {
  const double w = 1.0 / (sigma - rho + 1);
  std::map<int, double> mass;
  for (int d = rho; d <= sigma; ++d) mass[d] = w;
  std::vector<double> u;
  for (int k = 1; k <= k_max; ++k) {
    std::map<int, double> next;
    double expire = 0.0;
    for (const auto& [left, m] : mass) {
      if (left == 1) expire += m;
      else next[left - 1] += m;
    }
    for (int d = rho; d <= sigma; ++d) next[d] += expire * w;
    u.push_back(expire * p);
    mass = std::move(next);
  }
  return u;
}

std::vector<double> tail_from_hazards(const std::vector<double>& q, double p_f) {
  std::vector<double> t{1.0};
  double prod = 1.0;
  for (double v : q) {
    prod *= 1.0 - ((1.0 - v) * v * p_f + (1.0 - v) * v + v * v * p_f);
    t.push_back(prod);
  }
  return t;
}

double slope_per_step(const std::vector<double>& t, int lo, int hi) {
  std::vector<std::pair<double, double>> pts;
  for (int k = lo; k <= hi; ++k) pts.emplace_back(1000.0 * k, t[static_cast<std::size_t>(k)]);
  return fit_log_slope(pts);
}

TailModelParams params(double rho, double sigma, double p, double p_f, double interval = 100.0) {
  TailModelParams m;
  m.rho = rho;
  m.sigma = sigma;
  m.p = p;
  m.p_f = p_f;
  m.interval_ms = interval;
  return m;
}

}  // namespace

TEST_CASE("reselection schedule q_k") {
  CHECK(q_k(5, 5, 15, 0.2) == 0.0);
  CHECK(q_k(1, 5, 15, 0.2) == 0.0);
  CHECK(q_k(10, 5, 15, 0.2) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(std::abs(q_k(1000000, 5, 15, 0.2) - 0.02) < 1e-5);
  CHECK(q_k(6, 5, 15, 1.0) == 0.6);
  CHECK(q_k(6, 5, 8, 1.0) == doctest::Approx(12.0 / 13.0).epsilon(1e-12));
  CHECK(q_k(6, 5, 6, 1.0) == 1.0);
  CHECK(expected_reselection_time(5, 15, 0.2) == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("interleaved reselection probability") {
  CHECK(q_interleaved(0.04, 0.0) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(q_interleaved(0.5, 0.5) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(q_interleaved(1.0, 0.3) == doctest::Approx(1.0).epsilon(1e-12));
  for (double a = 0.0; a <= 1.0; a += 0.125)
    for (double b = 0.0; b <= 1.0; b += 0.125)
      CHECK(q_interleaved(a, b) == doctest::Approx(1.0 - (1.0 - a) * (1.0 - b)).epsilon(1e-12));
}

TEST_CASE("per-step success probability") {
  CHECK(p_success(0.0, 0.9) == 0.0);
  CHECK(p_success(1.0, 0.9) == doctest::Approx(0.9).epsilon(1e-12));
  const double expect = 0.96 * 0.04 * 0.95 + 0.96 * 0.04 + 0.04 * 0.04 * 0.95;
  CHECK(p_success(0.04, 0.95) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(p_success(0.04, 0.95) == doctest::Approx(0.0765).epsilon(1e-3));
}

TEST_CASE("p_success rises with q up to one half") {
  for (double pf : {0.0, 0.5, 0.9, 1.0}) {
    double prev = -1.0;
    for (double q = 0.0; q <= 0.5 + 1e-12; q += 0.01) {
      const double v = p_success(q, pf);
      CHECK(v > prev);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      prev = v;
    }
  }
}

TEST_CASE("slippage constants at 310 ms") {
  CHECK(slippage_psi(310.0, 100.0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(slippage_psi(300.0, 100.0) == 0.0);
  CHECK(slippage_gamma(4.0, 100.0) == doctest::Approx(4.0 / 96.0).epsilon(1e-12));
  const double g = 4.0 / 96.0;
  CHECK(slippage_prob(20, 100.0, 4.0, 310.0) == doctest::Approx(g * g).epsilon(1e-12));
  CHECK(slippage_prob(20, 100.0, 4.0, 310.0) == doctest::Approx(0.001736).epsilon(1e-3));
  // First branch through k = psi - T1 = 6.
  for (int k = 1; k <= 6; ++k) {
    const double phi = 96.0 - k * 10.0;
    CHECK(slippage_prob(k, 100.0, 4.0, 310.0) ==
          doctest::Approx(10.0 / 96.0 * (phi / 96.0 + (phi + 4.0) / 96.0)).epsilon(1e-12));
  }
  // Second branch through k = psi + T1 = 14.
  for (int k = 7; k <= 14; ++k)
    CHECK(slippage_prob(k, 100.0, 4.0, 310.0) == doctest::Approx(2.0 * g * g + g * (6.0 / 96.0)).epsilon(1e-12));
  CHECK(slippage_prob(15, 100.0, 4.0, 310.0) == doctest::Approx(g * g).epsilon(1e-12));
}

TEST_CASE("no slippage at multiples of the delay budget") {
  for (int k = 1; k <= 50; ++k) CHECK(slippage_prob(k, 100.0, 4.0, 300.0) == 0.0);
  const auto m = params(5, 15, 0.2, 0.9, 300.0);
  const auto a = tail_no_slippage(m);
  const auto b = tail_with_slippage(m);
  CHECK(a.p == b.p);
  CHECK_FALSE(b.clamped);
}

TEST_CASE("tail equals the brute-force product") {
  const auto m = params(5, 15, 0.2, 0.9);
  const auto c = tail_no_slippage(m);
  REQUIRE(c.p.size() == 201);
  double prod = 1.0;
  CHECK(c.p[0] == 1.0);
  for (int k = 1; k <= 200; ++k) {
    const double q = k <= 5 ? 0.0 : std::min(1.0, 2.0 * k * 0.2 / (20.0 * (k - 5)));
    prod *= 1.0 - ((1.0 - q) * q * 0.9 + (1.0 - q) * q + q * q * 0.9);
    CHECK(c.p[static_cast<std::size_t>(k)] == doctest::Approx(prod).epsilon(1e-12));
  }
  for (int k = 0; k <= 5; ++k) CHECK(c.p[static_cast<std::size_t>(k)] == 1.0);
}

TEST_CASE("tail with slippage multiplies by one minus the cumulative slip") {
  const auto m = params(5, 15, 0.2, 0.9, 310.0);
  const auto plain = tail_no_slippage(m);
  const auto slip = tail_with_slippage(m);
  double cum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    cum = std::min(1.0, cum + slippage_prob(k, 100.0, 4.0, 310.0));
    CHECK(slip.p[static_cast<std::size_t>(k)] ==
          doctest::Approx(plain.p[static_cast<std::size_t>(k)] * (1.0 - cum)).epsilon(1e-12));
  }
}

TEST_CASE("cumulative slippage clamps the curve to zero") {
  auto m = params(5, 15, 0.2, 0.9, 350.0);
  m.t1_ms = 40.0;
  const auto c = tail_with_slippage(m);
  CHECK(c.clamped);
  CHECK(c.p.back() == 0.0);
}

TEST_CASE("tail curves are nonincreasing and bounded on a 1000-point grid") {
  for (const auto& m : {params(5, 15, 0.2, 0.9), params(5, 15, 0.2, 0.5, 310.0), params(2, 6, 0.6, 0.99, 250.0)}) {
    for (const auto& c : {tail_no_slippage(m), tail_with_slippage(m)}) {
      double prev = 1.0;
      for (int i = 0; i < 1000; ++i) {
        const double t = i * 20.0;
        const double v = c.at_ms(t);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v <= prev + 1e-15);
        prev = v;
      }
      CHECK(c.at_ms(0.0) == 1.0);
    }
  }
}

TEST_CASE("more aggressive one-shot windows give lower tails") {
  auto off = params(5, 15, 0.2, 0.9);
  auto wide = off;
  wide.oneshot = OneShotWindow{5, 15};
  auto tight = off;
  tight.oneshot = OneShotWindow{2, 6};
  const auto a = tail_no_slippage(off);
  const auto b = tail_no_slippage(wide);
  const auto c = tail_no_slippage(tight);
  for (std::size_t k = 3; k < a.p.size(); ++k) {
    CHECK(c.p[k] < a.p[k]);
    CHECK(b.p[k] <= a.p[k]);
  }
  for (std::size_t k = 16; k < a.p.size(); ++k) CHECK(c.p[k] < b.p[k]);
}

TEST_CASE("q_k approximates the exact reselection density of the counter process") {
  struct Case {
    int rho;
    int sigma;
    double p;
  };
  for (const Case& cs : {Case{2, 6, 0.2}, Case{3, 8, 0.5}}) {
    CAPTURE(cs.rho);
    CAPTURE(cs.sigma);
    const double limit = 2.0 * cs.p / (cs.sigma + cs.rho);
    const auto u = renewal_density(cs.rho, cs.sigma, cs.p, 200);
    CHECK(u[29] == doctest::Approx(limit).epsilon(0.02));
    CHECK(std::abs(u.back() - limit) < 1e-9);
    CHECK(std::abs(q_k(1000000, cs.rho, cs.sigma, cs.p) - limit) < 1e-5);
    // q_k approaches the same limit from above.
    for (int k = cs.rho + 1; k <= 200; ++k) CHECK(q_k(k, cs.rho, cs.sigma, cs.p) > limit);

    const auto exact = tail_from_hazards(u, 0.9);
    const auto model = tail_no_slippage(params(cs.rho, cs.sigma, cs.p, 0.9));
    const double ratio = slope_per_step(model.p, 15, 30) / slope_per_step(exact, 15, 30);
    CHECK(ratio >= 1.0);
    CHECK(ratio <= 1.25);
  }
  // Default SPS window: report the gap between the closed form and the chain.
  const auto u = renewal_density(5, 15, 0.2, 200);
  const auto exact = tail_from_hazards(u, 0.9);
  const auto model = tail_no_slippage(params(5, 15, 0.2, 0.9));
  MESSAGE("model/chain log-tail slope ratio on k in [15, 30] at [5, 15], p = 0.2: ",
          slope_per_step(model.p, 15, 30) / slope_per_step(exact, 15, 30));
}

TEST_CASE("log-slope fit recovers exponential and flat tails") {
  std::vector<std::pair<double, double>> exp_pts;
  std::vector<std::pair<double, double>> flat;
  for (int i = 0; i <= 100; ++i) {
    const double t = 3000.0 + 70.0 * i;
    exp_pts.emplace_back(t, std::exp(-t / 1500.0));
    flat.emplace_back(t, 0.25);
  }
  CHECK(fit_log_slope(exp_pts) == doctest::Approx(-1.0 / 1.5).epsilon(1e-10));
  CHECK(std::abs(fit_log_slope(flat)) < 1e-12);
  const std::vector<std::pair<double, double>> one{{1.0, 1.0}, {2.0, 0.0}};
  CHECK_THROWS_AS(fit_log_slope(one), std::invalid_argument);
}

TEST_CASE("slope comparison of a curve with itself") {
  const auto m = params(5, 15, 0.2, 0.9);
  const auto model = tail_no_slippage(m);
  CcdfCurve sim;
  for (int t = 0; t <= 12000; ++t) sim.ccdf.push_back(model.at_ms(t));
  sim.samples = 1;
  const auto r = compare_slopes(sim, model);
  CHECK(r.ratio == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.rms_gap < 1e-9);
  CHECK(r.points == 7001);
}

TEST_CASE("invalid model parameters are rejected") {
  CHECK_THROWS_AS(tail_no_slippage(params(15, 5, 0.2, 0.9)), InvalidConfig);
  CHECK_THROWS_AS(tail_no_slippage(params(5, 15, 0.0, 0.9)), InvalidConfig);
  CHECK_THROWS_AS(tail_no_slippage(params(5, 15, 0.2, 1.5)), InvalidConfig);
}
