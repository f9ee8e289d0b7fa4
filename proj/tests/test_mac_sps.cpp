// SPDX-License-Identifier: GPL-2.0-only
#include <doctest.h>

#include <sstream>

#include "cv2x/mac_sps.hpp"

using namespace cv2x;

namespace {

constexpr int kPeriod = 100;

SensingHistory empty_history(int subchannels = 10, int per_pair = 2) {
  return SensingHistory(subchannels, per_pair, 1000, kPeriod, -94.0);
}

/// Fixed pool of distinct grants; `exclude` drops the matching resource.
CandidateSource pool(int size = 20) {
  return [size](const Grant* exclude) {
    CandidateList out;
    for (int i = 0; i < size; ++i) {
      Grant g{1000 + i * 7, (i % 5) * 2, 2, GrantOrigin::sps};
      if (exclude && g.same_resource(*exclude, kPeriod)) continue;
      out.push_back(g);
    }
    return out;
  };
}

SpsConfig oneshot_cfg(int a, int b) {
  SpsConfig c;
  c.oneshot = OneShotWindow{a, b};
  return c;
}

}  // namespace

TEST_CASE("grant to sub-frame: first reserved occurrence at or after generation + T1") {
  const Grant g{60, 0, 2, GrantOrigin::sps};
  CHECK(grant_to_subframe(g, 20, 4, kPeriod) == 60);
  const std::int64_t gens[] = {20, 330, 640, 950, 1260};
  const std::int64_t want[] = {60, 360, 660, 960, 1360};
  for (int i = 0; i < 5; ++i) CHECK(grant_to_subframe(g, gens[i], 4, kPeriod) == want[i]);

  const Grant os{777, 4, 2, GrantOrigin::oneshot};
  CHECK(grant_to_subframe(os, 700, 4, kPeriod) == 777);
}

TEST_CASE("grants picked from a window map back into that window") {
  auto h = empty_history();
  const SelectionParams p = SelectionParams::from(SpsConfig{}, 2);
  for (std::int64_t n : {0, 17, 99, 1234}) {
    for (const auto& g : select_candidates(h, n, p)) {
      const auto sf = grant_to_subframe(g, n, p.t1_ms, kPeriod);
      CHECK(sf == g.subframe);
      CHECK(sf - n >= 4);
      CHECK(sf - n <= 90);
    }
  }
  const Grant g{60, 0, 2, GrantOrigin::sps};
  for (std::int64_t m = 0; m < 1000; m += 13) {
    const auto sf = grant_to_subframe(g, m, 4, kPeriod);
    CHECK(sf - m >= 4);
    CHECK(sf - m < 4 + kPeriod);
    CHECK(g.phase(kPeriod) == Grant{sf, 0, 2, GrantOrigin::sps}.phase(kPeriod));
  }
}

TEST_CASE("empty history: lowest 20% by documented tie order") {
  auto h = empty_history();
  const SelectionParams p = SelectionParams::from(SpsConfig{}, 2);
  SelectionStats stats;
  const auto list = select_candidates(h, 100, p, nullptr, &stats);
  CHECK(stats.window_resources == 87 * 5);
  CHECK(stats.threshold_raises == 0);
  REQUIRE(list.size() == 87);
  for (std::size_t i = 0; i < 85; ++i) {
    CHECK(list[i].subframe == 104 + static_cast<std::int64_t>(i / 5));
    CHECK(list[i].vrb_start == static_cast<int>(i % 5) * 2);
  }
  CHECK(list[85] == Grant{121, 0, 2, GrantOrigin::sps});
  CHECK(list[86] == Grant{121, 2, 2, GrantOrigin::sps});
}

TEST_CASE("100 sub-frames x 10 single VRBs give 200 candidates") {
  auto h = empty_history(10, 1);
  SelectionParams p;
  p.t1_ms = 1;
  p.t2_ms = 100;
  p.vrbs_per_bsm = 1;
  SelectionStats stats;
  const auto list = select_candidates(h, 0, p, nullptr, &stats);
  CHECK(stats.window_resources == 1000);
  CHECK(list.size() == 200);
}

TEST_CASE("RSSI ranking prefers quieter resources") {
  auto h = empty_history();
  std::vector<float> loud(10, 1e-6f);
  std::vector<float> quiet(10, 0.0f);
  for (std::int64_t sf = 0; sf < 1000; ++sf) {
    const auto& row = (sf % kPeriod) < 50 ? loud : quiet;
    h.record_rssi(sf, row);
  }
  const SelectionParams p = SelectionParams::from(SpsConfig{}, 2);
  for (const auto& g : select_candidates(h, 1000, p)) CHECK(g.phase(kPeriod) >= 50);
}

TEST_CASE("RSRP threshold rises in 3 dB steps until 20% survive") {
  auto h = empty_history();
  std::uint32_t sender = 0;
  for (int ph = 0; ph < kPeriod; ++ph)
    for (int pair = 0; pair < 5; ++pair) h.record_sci(ph, sender++, ph, pair, -100.0f, true);
  const SelectionParams p = SelectionParams::from(SpsConfig{}, 2);
  SelectionStats stats;
  const auto list = select_candidates(h, 50, p, nullptr, &stats);
  CHECK(stats.threshold_raises == 4);
  CHECK(stats.final_threshold_dbm == doctest::Approx(-98.0));
  CHECK(list.size() == 87);
}

TEST_CASE("reservations above the threshold are excluded while 20% remain") {
  auto h = empty_history();
  h.record_sci(10, 3, 30, 1, -80.0f, true);
  const SelectionParams p = SelectionParams::from(SpsConfig{}, 2);
  for (const auto& g : select_candidates(h, 20, p)) CHECK_FALSE((g.phase(kPeriod) == 30 && g.vrb_start == 2));
  h.record_sci(11, 3, 30, 1, -80.0f, false);
  CHECK(h.reserved_rsrp(20, 30, 1) == -std::numeric_limits<float>::infinity());
}

TEST_CASE("reservations expire after the sensing depth") {
  auto h = empty_history();
  h.record_sci(10, 3, 30, 1, -80.0f, true);
  CHECK(h.reserved_rsrp(1009, 30, 1) == -80.0f);
  CHECK(h.reserved_rsrp(1010, 30, 1) == -std::numeric_limits<float>::infinity());
}

TEST_CASE("one-shot selection avoids the vehicle's own SPS resource") {
  auto h = empty_history();
  const SelectionParams p = SelectionParams::from(SpsConfig{}, 2);
  const Grant own{104, 0, 2, GrantOrigin::sps};
  for (const auto& g : select_candidates(h, 100, p, &own)) CHECK_FALSE(g.same_resource(own, kPeriod));
}

TEST_CASE("candidate list is never below 20% of the window") {
  auto rng = derive_rng(4, 4);
  const SelectionParams p = SelectionParams::from(SpsConfig{}, 2);
  for (int trial = 0; trial < 20; ++trial) {
    auto h = empty_history();
    std::vector<float> row(10);
    for (std::int64_t sf = 0; sf < 1000; ++sf) {
      for (auto& v : row) v = static_cast<float>(rng.uniform() * 1e-8);
      h.record_rssi(sf, row);
      if (rng.bernoulli(0.5))
        h.record_sci(sf, static_cast<std::uint32_t>(rng.uniform_int(0, 300)), static_cast<int>(sf % kPeriod),
                     static_cast<int>(rng.uniform_int(0, 4)), static_cast<float>(-120.0 + 60.0 * rng.uniform()), true);
    }
    CHECK(select_candidates(h, 1000, p).size() >= 87);
  }
}

TEST_CASE("busy ratio is 0 when silent and 1 when every sub-channel is loud") {
  auto h = empty_history();
  std::vector<float> quiet(10, 0.0f);
  std::vector<float> loud(10, 1e-6f);
  for (std::int64_t sf = 0; sf < 1000; ++sf) h.record_rssi(sf, quiet);
  CHECK(h.busy_ratio() == 0.0);
  for (std::int64_t sf = 1000; sf < 2000; ++sf) h.record_rssi(sf, loud);
  CHECK(h.busy_ratio() == 1.0);
  CHECK(h.avg_rssi_mw(0, 0) == doctest::Approx(1e-6).epsilon(1e-6));
}

TEST_CASE("unsensed sub-frames carry the previous period forward") {
  auto h = empty_history();
  std::vector<float> row(10, 2e-9f);
  for (std::int64_t sf = 0; sf < 100; ++sf) h.record_rssi(sf, row);
  h.record_unsensed(100);
  CHECK(h.avg_rssi_mw(0, 3) == doctest::Approx(2.0 * 2e-9 / 10.0).epsilon(1e-6));
}

TEST_CASE("sensing history must be contiguous") {
  auto h = empty_history();
  std::vector<float> row(10, 0.0f);
  CHECK_THROWS_AS(h.record_rssi(5, row), std::logic_error);
  h.record_rssi(0, row);
  CHECK_THROWS_AS(h.record_unsensed(2), std::logic_error);
  std::vector<float> narrow(3, 0.0f);
  CHECK_THROWS_AS(h.record_rssi(1, narrow), std::invalid_argument);
}

TEST_CASE("tick: mid-interval reuse decrements c_s and keeps the grant") {
  SpsConfig cfg;
  SchedulerState st;
  st.current_grant = Grant{1050, 2, 2, GrantOrigin::sps};
  st.c_s = 3;
  auto rng = derive_rng(1, 0);
  const auto r = sps_transmit_tick(st, pool(), rng, cfg);
  CHECK(st.c_s == 2);
  CHECK(r.grant == Grant{1050, 2, 2, GrantOrigin::sps});
  CHECK(r.tick_case == TickCase::reuse);
  CHECK_FALSE(r.sps_reselected);
}

TEST_CASE("tick: c_s expiry with a keep draw redraws c_s only and decrements c_o") {
  const SpsConfig cfg = oneshot_cfg(2, 6);
  // Find a seed whose first uniform is >= p_r, mirroring a 0.9 draw.
  std::uint64_t seed = 0;
  for (;; ++seed) {
    auto probe = derive_rng(seed, 0);
    if (probe.uniform() >= cfg.reselect_prob()) break;
  }
  SchedulerState st;
  const Grant g{1050, 2, 2, GrantOrigin::sps};
  st.current_grant = g;
  st.c_s = 0;
  st.c_o = 3;
  auto rng = derive_rng(seed, 0);
  const auto r = sps_transmit_tick(st, pool(), rng, cfg);
  CHECK(r.tick_case == TickCase::sps_expired);
  CHECK(r.grant == g);
  CHECK_FALSE(r.sps_reselected);
  CHECK(st.c_s >= cfg.cs_min - 1);
  CHECK(st.c_s <= cfg.cs_max - 1);
  CHECK(st.c_o == 2);
}

TEST_CASE("tick: c_o expiry sends once on a fresh grant then returns to SPS") {
  const SpsConfig cfg = oneshot_cfg(2, 6);
  SchedulerState st;
  const Grant g{1050, 2, 2, GrantOrigin::sps};
  st.current_grant = g;
  st.c_s = 4;
  st.c_o = 0;
  auto rng = derive_rng(2, 0);
  const auto r = sps_transmit_tick(st, pool(), rng, cfg);
  CHECK(r.tick_case == TickCase::oneshot_expired);
  CHECK(r.grant.origin == GrantOrigin::oneshot);
  CHECK_FALSE(r.grant.same_resource(g, kPeriod));
  CHECK(st.saved_sps_grant == g);
  CHECK(st.c_s == 3);
  const auto next = sps_transmit_tick(st, pool(), rng, cfg);
  CHECK(next.grant == g);
  CHECK_FALSE(st.saved_sps_grant.has_value());
}

TEST_CASE("tick: both expired with keep transmits a one-shot and keeps SPS for next") {
  const SpsConfig cfg = oneshot_cfg(2, 6);
  std::uint64_t seed = 0;
  for (;; ++seed) {
    auto probe = derive_rng(seed, 0);
    if (probe.uniform() >= cfg.reselect_prob()) break;
  }
  SchedulerState st;
  const Grant g{1050, 2, 2, GrantOrigin::sps};
  st.current_grant = g;
  st.c_s = 0;
  st.c_o = 0;
  auto rng = derive_rng(seed, 0);
  const auto r = sps_transmit_tick(st, pool(), rng, cfg);
  CHECK(r.tick_case == TickCase::both_expired);
  CHECK(r.grant.origin == GrantOrigin::oneshot);
  CHECK(st.saved_sps_grant == g);
  CHECK(sps_transmit_tick(st, pool(), rng, cfg).grant == g);
}

TEST_CASE("counters stay in range and one-shot grants are used once") {
  const SpsConfig cfg = oneshot_cfg(2, 6);
  SchedulerState st;
  auto rng = derive_rng(9, 0);
  std::optional<TickResult> prev;
  std::optional<Grant> stashed;
  for (int i = 0; i < 200000; ++i) {
    const auto r = sps_transmit_tick(st, pool(), rng, cfg);
    REQUIRE(st.c_s >= 0);
    REQUIRE(st.c_s <= cfg.cs_max - 1);
    REQUIRE(st.c_o.has_value());
    REQUIRE(*st.c_o >= 0);
    REQUIRE(*st.c_o <= cfg.oneshot->beta - 1);
    REQUIRE((r.grant.origin == GrantOrigin::oneshot) == st.saved_sps_grant.has_value());
    if (prev && prev->grant.origin == GrantOrigin::oneshot) {
      REQUIRE(r.grant.origin == GrantOrigin::sps);
      if (!r.sps_reselected) REQUIRE(r.grant == *stashed);
    }
    stashed = st.saved_sps_grant;
    prev = r;
  }
}

TEST_CASE("mean SPS lifetime is mean(c_s) / p_r transmissions") {
  SpsConfig cfg;
  SchedulerState st;
  auto rng = derive_rng(21, 0);
  const auto cands = pool();
  std::int64_t ticks = 0;
  int intervals = -1;
  while (intervals < 100000) {
    const auto r = sps_transmit_tick(st, cands, rng, cfg);
    if (r.sps_reselected) ++intervals;
    ++ticks;
  }
  const double expected = (cfg.cs_min + (cfg.cs_max - cfg.cs_min) / 2.0) / cfg.reselect_prob();
  // The last interval is still open; ticks counts the closed ones plus one tick.
  CHECK(static_cast<double>(ticks - 1) / intervals == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("keep probability 0 is trace-equivalent to eSPS with one interval") {
  for (const bool with_oneshot : {false, true}) {
    SpsConfig a;
    a.keep_prob = 0.0;
    SpsConfig b;
    b.keep_prob = 0.8;
    b.esps_max_intervals = 1;
    if (with_oneshot) {
      a.oneshot = OneShotWindow{2, 6};
      b.oneshot = a.oneshot;
    }
    SchedulerState sa;
    SchedulerState sb;
    auto ra = derive_rng(31, 0);
    auto rb = derive_rng(31, 0);
    for (int i = 0; i < 20000; ++i) {
      const auto x = sps_transmit_tick(sa, pool(), ra, a);
      const auto y = sps_transmit_tick(sb, pool(), rb, b);
      REQUIRE(x.grant == y.grant);
      REQUIRE(x.tick_case == y.tick_case);
      REQUIRE(x.sps_reselected == y.sps_reselected);
      REQUIRE(sa.c_s == sb.c_s);
      REQUIRE(sa.c_o == sb.c_o);
    }
  }
}

TEST_CASE("eSPS forces reselection after m intervals") {
  SpsConfig cfg;
  cfg.keep_prob = 0.8;
  cfg.esps_max_intervals = 3;
  SchedulerState st;
  auto rng = derive_rng(41, 0);
  int used = 0;
  for (int i = 0; i < 50000; ++i) {
    const auto r = sps_transmit_tick(st, pool(), rng, cfg);
    if (r.sps_reselected) used = 1;
    else if (r.tick_case == TickCase::sps_expired) ++used;
    REQUIRE(used <= 3);
    REQUIRE(st.esps_intervals_used == used);
  }
}

TEST_CASE("scheduler trace rows are stable text") {
  std::ostringstream out;
  write_trace_header(out);
  SchedulerTraceRow row;
  row.subframe = 20;
  row.tx_subframe = 60;
  row.vehicle = 3;
  row.grant = Grant{60, 4, 2, GrantOrigin::sps};
  row.tick_case = TickCase::initial;
  row.c_s = 9;
  row.esps_intervals_used = 1;
  write_trace_row(out, row);
  CHECK(out.str() ==
        "subframe,tx_subframe,vehicle,case,origin,grant_subframe,vrb_start,vrb_count,c_s,c_o,esps_intervals\n"
        "20,60,3,initial,sps,60,4,2,9,-1,1\n");
}
