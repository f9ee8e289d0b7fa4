// SPDX-License-Identifier: GPL-2.0-only
#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

#include "cv2x/scenario.hpp"

using namespace cv2x;

TEST_CASE("vehicle count and spacing follow density and length") {
  ScenarioConfig cfg;
  SpsConfig sps;
  cfg.highway_length_m = 5000.0;
  cfg.density_vpk = 400.0;
  auto w = build_world(cfg, sps);
  CHECK(w.size() == 2000);
  CHECK(w.spacing_m == doctest::Approx(2.5).epsilon(1e-12));

  cfg.density_vpk = 125.0;
  w = build_world(cfg, sps);
  CHECK(w.size() == 625);
  CHECK(w.spacing_m == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("sub-channels per sub-frame follow bandwidth") {
  ScenarioConfig cfg;
  cfg.bandwidth_mhz = 20;
  CHECK(cfg.effective_subchannels() == 10);
  cfg.bandwidth_mhz = 10;
  CHECK(cfg.effective_subchannels() == 5);
  cfg.subchannels_per_subframe = 7;
  CHECK(cfg.effective_subchannels() == 7);
}

TEST_CASE("world rebuild is bit-identical") {
  ScenarioConfig cfg;
  cfg.highway_length_m = 1000.0;
  cfg.master_seed = 99;
  SpsConfig sps;
  const auto a = build_world(cfg, sps);
  const auto b = build_world(cfg, sps);
  REQUIRE(a.size() == b.size());
  CHECK(a.subchannels == b.subchannels);
  CHECK(a.pairs_per_subframe == b.pairs_per_subframe);
  for (std::size_t v = 0; v < a.size(); ++v) {
    CHECK(a.vehicles[v].position_m == b.vehicles[v].position_m);
    CHECK(a.vehicles[v].initial_offset_ms == b.vehicles[v].initial_offset_ms);
    CHECK(a.mac_stream(static_cast<std::uint32_t>(v)).state() == b.mac_stream(static_cast<std::uint32_t>(v)).state());
  }
}

TEST_CASE("initial offsets lie in [0, 100)") {
  ScenarioConfig cfg;
  cfg.highway_length_m = 5000.0;
  SpsConfig sps;
  const auto w = build_world(cfg, sps);
  std::set<int> seen;
  for (const auto& v : w.vehicles) {
    CHECK(v.initial_offset_ms >= 0);
    CHECK(v.initial_offset_ms < 100);
    seen.insert(v.initial_offset_ms);
  }
  CHECK(seen.size() > 90);
}

TEST_CASE("invalid configs name the violated invariant") {
  ScenarioConfig cfg;
  cfg.density_vpk = 0.1;
  cfg.highway_length_m = 1.0;
  CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("vehicles"), InvalidConfig);

  SpsConfig sps;
  sps.cs_min = 15;
  sps.cs_max = 5;
  CHECK_THROWS_WITH_AS(validate(sps), doctest::Contains("cs_min"), InvalidConfig);
  sps = SpsConfig{};
  sps.keep_prob = 0.5;
  CHECK_THROWS_WITH_AS(validate(sps), doctest::Contains("keep_prob"), InvalidConfig);
}

TEST_CASE("streams: same id repeats, neighbouring ids and seeds differ") {
  const std::uint64_t s = 12345;
  auto a = derive_rng(s, 7);
  auto b = derive_rng(s, 7);
  auto c = derive_rng(s, 8);
  auto d = derive_rng(s + 1, 7);
  int same_ab = 0;
  int same_ac = 0;
  int same_ad = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    same_ab += x == b.next_u64();
    same_ac += x == c.next_u64();
    same_ad += x == d.next_u64();
  }
  CHECK(same_ab == 1000);
  CHECK(same_ac == 0);
  CHECK(same_ad == 0);
}

TEST_CASE("stream ids separate domains") {
  CHECK(stream_id(StreamDomain::mac, 5) != stream_id(StreamDomain::channel, 5));
  CHECK(stream_id(StreamDomain::channel, 5) == ((1ULL << 32) | 5));
}

TEST_CASE("uniform_int is unbiased over a small range") {
  auto r = derive_rng(1, 1);
  std::array<int, 6> counts{};
  const int n = 600000;
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(r.uniform_int(0, 5))]++;
  for (int c : counts) CHECK(std::abs(c - n / 6) < 1500);
}

TEST_CASE("uniform stays in [0, 1) and uniform_open in (0, 1)") {
  auto r = derive_rng(3, 3);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    const double o = r.uniform_open();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(o > 0.0);
    REQUIRE(o < 1.0);
  }
}
