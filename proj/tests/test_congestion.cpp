// SPDX-License-Identifier: GPL-2.0-only
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cv2x/congestion.hpp"
#include "cv2x/scenario.hpp"

using namespace cv2x;

namespace {

/// Vehicle 100 with neighbours 20..180; the first `n` other ids heard at `sf`.
CongestionState heard_state(int n, std::int64_t sf, const CongestionParams& p) {
  CongestionState st(100, 20, 180, p);
  int added = 0;
  for (std::uint32_t id = 20; added < n; ++id) {
    if (id == 100) continue;
    st.heard(id, sf);
    ++added;
  }
  return st;
}

}  // namespace

TEST_CASE("one smoothing step from zero with 80 neighbours gives 4.0") {
  CongestionParams p;
  auto st = heard_state(80, 0, p);
  update_density(st, 50, p);
  CHECK(st.n_count() == 80);
  CHECK(st.n_smoothed() == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("constant neighbour count is the smoothing fixed point") {
  CongestionParams p;
  auto st = heard_state(80, 0, p);
  double prev_gap = 80.0;
  for (int k = 1; k <= 400; ++k) {
    update_density(st, 0, p);
    const double gap = 80.0 - st.n_smoothed();
    if (k <= 100) CHECK(gap == doctest::Approx(80.0 * std::pow(0.95, k)).epsilon(1e-9));
    CHECK(gap <= prev_gap);
    prev_gap = gap;
  }
  CHECK(st.n_smoothed() == doctest::Approx(80.0).epsilon(1e-6));
}

TEST_CASE("lambda 1 copies the neighbour count") {
  CongestionParams p;
  p.lambda = 1.0;
  auto st = heard_state(37, 0, p);
  update_density(st, 10, p);
  CHECK(st.n_smoothed() == 37.0);
}

TEST_CASE("neighbours unheard for a full window drop out; self and out-of-range ids are ignored") {
  CongestionParams p;
  CongestionState st(100, 90, 110, p);
  st.heard(95, 0);
  st.heard(105, 500);
  st.heard(100, 500);
  st.heard(300, 500);
  st.heard(5, 500);
  CHECK(st.neighbour_count(999) == 2);
  CHECK(st.neighbour_count(1000) == 1);
  CHECK(st.neighbour_count(1500) == 0);
  st.heard(95, 1400);
  CHECK(st.neighbour_count(1500) == 1);
}

TEST_CASE("generation interval: flat, ramp and cap") {
  CongestionParams p;
  CHECK(generation_interval(20.0, p) == 100.0);
  CHECK(generation_interval(77.5, p) == doctest::Approx(310.0).epsilon(1e-15));
  CHECK(generation_interval(200.0, p) == 600.0);
  CHECK(generation_interval(25.0, p) == 100.0);
  CHECK(generation_interval(150.0, p) == 600.0);
}

TEST_CASE("generation interval is monotone and bounded") {
  CongestionParams p;
  double prev = 0.0;
  for (double n = 0.0; n <= 400.0; n += 0.25) {
    const double i = generation_interval(n, p);
    CHECK(i >= prev);
    CHECK(i >= p.base_interval_ms);
    CHECK(i <= p.i_max_ms);
    prev = i;
  }
}

TEST_CASE("disabled congestion control holds the base interval") {
  CongestionParams p;
  p.enabled = false;
  p.lambda = 1.0;
  auto st = heard_state(150, 0, p);
  update_density(st, 0, p);
  CHECK(st.n_smoothed() == 150.0);
  CHECK(st.interval_ms() == 100.0);
}

TEST_CASE("gate: transmit only with a BSM generated at or before the opportunity") {
  CongestionState st;
  CHECK_FALSE(gate_transmission(st, 100));
  st.pending_generation = 120;
  CHECK_FALSE(gate_transmission(st, 100));
  CHECK(gate_transmission(st, 120));
  CHECK(gate_transmission(st, 190));
}

TEST_CASE("310 ms generation against 100 ms opportunities transmits on about 1 in 3.1") {
  const double interval = 310.0;
  CongestionState st;
  double next_gen = 0.0;
  int transmitted = 0;
  int opportunities = 0;
  for (std::int64_t sf = 0; sf < 310000; ++sf) {
    if (static_cast<double>(sf) >= next_gen) {
      st.pending_generation = sf;
      next_gen += interval;
    }
    if (sf % 100 == 37) {
      ++opportunities;
      if (gate_transmission(st, sf)) {
        ++transmitted;
        st.pending_generation.reset();
      }
    }
  }
  CHECK(static_cast<double>(opportunities) / transmitted == doctest::Approx(3.1).epsilon(0.01));
}

TEST_CASE("invalid congestion parameters are rejected") {
  CongestionParams p;
  p.lambda = 0.0;
  CHECK_THROWS_AS(validate(p), InvalidConfig);
  p = CongestionParams{};
  p.i_max_ms = 50.0;
  CHECK_THROWS_AS(validate(p), InvalidConfig);
}

TEST_CASE("congestion series rows are fixed-precision") {
  std::ostringstream out;
  write_congestion_header(out);
  write_congestion_row(out, CongestionSample{100, 7, 80, 4.0, 100.0});
  CHECK(out.str() == "subframe,vehicle,n_c,n_s,interval_ms\n100,7,80,4.000000,100.000000\n");
}
