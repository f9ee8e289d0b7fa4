// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cv2x {

namespace {

constexpr std::uint32_t kNoVehicle = std::numeric_limits<std::uint32_t>::max();

enum class EventKind : std::uint8_t { prr, ipg, ia, end, loss };

struct MetricEvent {
  EventKind kind;
  std::int8_t bin;
  std::uint8_t flag;   // prr: received; end: origin
  std::uint8_t cause;  // loss or end cause
  std::uint32_t dist_m;
  std::int64_t a;
  std::int64_t b;
};

template <class T>
void put_le(unsigned char*& p, T v) {
  std::make_unsigned_t<T> u;
  std::memcpy(&u, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) *p++ = static_cast<unsigned char>((u >> (8 * i)) & 0xFFu);
}

template <class T>
T get_le(const unsigned char*& p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(*p++) << (8 * i);
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

void put_f32(unsigned char*& p, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_le(p, u);
}

float get_f32(const unsigned char*& p) {
  const auto u = get_le<std::uint32_t>(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

void encode_event(const EventRecord& r, unsigned char* out) {
  unsigned char* p = out;
  put_le(p, r.subframe);
  put_le(p, r.tx);
  put_le(p, r.rx);
  *p++ = r.received;
  *p++ = static_cast<unsigned char>(r.loss_cause);
  put_le(p, std::uint16_t{0});
  put_f32(p, r.pssch_sinr_db);
  put_f32(p, r.pscch_sinr_db);
  put_f32(p, r.distance_m);
}

EventRecord decode_event(const unsigned char* in) {
  const unsigned char* p = in;
  EventRecord r;
  r.subframe = get_le<std::int64_t>(p);
  r.tx = get_le<std::uint32_t>(p);
  r.rx = get_le<std::uint32_t>(p);
  r.received = *p++;
  r.loss_cause = static_cast<LossCause>(*p++);
  (void)get_le<std::uint16_t>(p);
  r.pssch_sinr_db = get_f32(p);
  r.pscch_sinr_db = get_f32(p);
  r.distance_m = get_f32(p);
  return r;
}

void validate(const EngineConfig& cfg) {
  validate(cfg.scenario);
  validate(cfg.sps);
  validate(cfg.congestion);
  if (!(cfg.metrics.eval_radius_m > 0.0)) throw InvalidConfig("invalid-config: eval_radius_m > 0");
  if (!(cfg.metrics.bin_half_width_m >= 0.0)) throw InvalidConfig("invalid-config: bin_half_width_m >= 0");
  for (double b : cfg.metrics.ccdf_bins_m)
    if (!(b >= 0.0)) throw InvalidConfig("invalid-config: ccdf bins >= 0");
  if (cfg.metrics.ccdf_bins_m.size() > 100) throw InvalidConfig("invalid-config: at most 100 ccdf bins");
  if (cfg.reception.kind == ReceptionModel::Kind::bler &&
      (cfg.reception.bler_pssch.empty() || cfg.reception.bler_pscch.empty()))
    throw InvalidConfig("invalid-config: BLER reception needs pssch and pscch tables");
  if (cfg.pathloss.kind == PathlossModel::Kind::table && cfg.pathloss.table.empty())
    throw InvalidConfig("invalid-config: path-loss table model needs a table");
  if (cfg.threads < 0) throw InvalidConfig("invalid-config: threads >= 0");
}

World build_world(const EngineConfig& cfg) { return build_world(cfg.scenario, cfg.sps); }

struct Engine::PairState {
  std::int64_t last_rx_sf = -1;
  std::int64_t last_rx_gen = 0;
  std::int32_t misses = 0;
  LossCause first_loss = LossCause::none;
  std::uint32_t interferer = kNoVehicle;
  std::uint64_t tx_serial = 0;
  std::uint64_t interferer_serial = 0;
  bool tx_oneshot = false;          // first lost transmission used a one-shot grant
  bool interferer_oneshot = false;  // so did the interferer's
};

struct Engine::RxScratch {
  std::vector<double> gain;
  std::vector<double> h0;
  std::vector<double> h1;
  std::vector<float> rssi;
  std::vector<MetricEvent> events;
  std::vector<EventRecord> records;
};

Engine::Engine(const World& world, const EngineConfig& cfg) : world_(world), cfg_(cfg) {
  validate(cfg_);
  radio_ = RadioParams::from(cfg_.scenario);
  sel_ = SelectionParams::from(cfg_.sps, cfg_.scenario.subchannels_per_bsm);
  duration_ = std::llround(cfg_.scenario.sim_duration_s * 1000.0);
  warmup_ = std::llround(cfg_.scenario.warmup_s * 1000.0);
  const std::size_t n = world_.size();
  const int nsc = world_.subchannels;
  const int pairs = world_.pairs_per_subframe;
  const int per = cfg_.scenario.subchannels_per_bsm;

  path_gain_.resize(n);
  nak_m_.resize(n);
  dist_m_.resize(n);
  bin_.resize(n);
  store_ = MetricStore(cfg_.metrics, duration_, warmup_);
  for (std::size_t d = 0; d < n; ++d) {
    const double dist = static_cast<double>(d) * world_.spacing_m;
    path_gain_[d] = db_to_lin(-pathloss_db(dist, cfg_.pathloss));
    nak_m_[d] = nakagami_m(dist);
    dist_m_[d] = static_cast<int>(std::floor(dist + 1e-9));
    bin_[d] = store_.bin_of(dist);
  }

  leak_data_.resize(static_cast<std::size_t>(pairs * pairs));
  leak_ctrl_.resize(leak_data_.size());
  for (int s = 0; s < pairs; ++s) {
    for (int d = 0; d < pairs; ++d) {
      leak_data_[static_cast<std::size_t>(s * pairs + d)] = leakage_gain(cfg_.ibe, s * per, per, d * per, per);
      leak_ctrl_[static_cast<std::size_t>(s * pairs + d)] = leakage_gain(cfg_.ibe, s * per, per, d * per, 1);
    }
  }
  vrb_profile_.assign(static_cast<std::size_t>(pairs * nsc), 0.0);
  const double first_vrb_mw =
      radio_.ctrl_psd_mw * radio_.pscch_prbs + radio_.data_psd_mw * (radio_.prbs_per_subchannel - radio_.pscch_prbs);
  const double other_vrb_mw = radio_.data_psd_mw * radio_.prbs_per_subchannel;
  for (int s = 0; s < pairs; ++s) {
    for (int v = 0; v < nsc; ++v) {
      double sum = 0.0;
      for (int u = s * per; u < (s + 1) * per; ++u)
        sum += (u == s * per ? first_vrb_mw : other_vrb_mw) * cfg_.ibe.gain(u - v);
      vrb_profile_[static_cast<std::size_t>(s * nsc + v)] = sum;
    }
  }
  noise_vrb_mw_ = radio_.noise_prb_mw * radio_.prbs_per_subchannel;

  // Stats region and congestion neighbourhoods.
  bool any_stats = false;
  for (std::size_t v = 0; v < n; ++v) {
    if (!world_.in_stats_region(v)) continue;
    if (!any_stats) stats_lo_ = static_cast<std::uint32_t>(v);
    stats_hi_ = static_cast<std::uint32_t>(v);
    any_stats = true;
  }
  if (!any_stats) throw InvalidConfig("invalid-config: stats region contains no vehicle");
  k_eval_ = static_cast<std::uint32_t>(std::floor(cfg_.metrics.eval_radius_m / world_.spacing_m + 1e-9));
  const auto k_cong = static_cast<std::uint32_t>(std::floor(cfg_.congestion.radius_m / world_.spacing_m + 1e-9));

  vues_.reserve(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto id = static_cast<std::uint32_t>(v);
    vues_.emplace_back(SensingHistory(nsc, per, cfg_.sps.sensing_depth_ms, cfg_.sps.reservation_period_ms(),
                                      cfg_.sps.cbr_rssi_threshold_dbm));
    auto& s = vues_.back();
    s.mac_rng = world_.mac_stream(id);
    s.chan_rng = world_.channel_stream(id);
    const std::uint32_t lo = id > k_cong ? id - k_cong : 0;
    const std::uint32_t hi = std::min<std::uint32_t>(static_cast<std::uint32_t>(n - 1), id + k_cong);
    s.cong = CongestionState(id, lo, hi, cfg_.congestion);
    s.cong.next_generation_ms = world_.vehicles[v].initial_offset_ms;
  }

  pair_offset_.assign(n, std::numeric_limits<std::size_t>::max());
  pair_tx_lo_.assign(n, 0);
  pair_tx_n_.assign(n, 0);
  std::size_t total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto rid = static_cast<std::uint32_t>(r);
    const std::uint32_t lo = std::max(stats_lo_, rid > k_eval_ ? rid - k_eval_ : 0);
    const std::uint32_t hi = std::min<std::uint32_t>(stats_hi_, rid + k_eval_);
    if (lo > hi) continue;
    pair_offset_[r] = total;
    pair_tx_lo_[r] = lo;
    pair_tx_n_[r] = hi - lo + 1;
    total += hi - lo + 1;
  }
  pairs_.assign(total, PairState{});

  const double centre = cfg_.scenario.highway_length_m / 2.0;
  for (std::size_t v = 0; v < n; ++v)
    if (std::abs(world_.vehicles[v].position_m - centre) <= 25.0) cbr_vehicles_.push_back(static_cast<std::uint32_t>(v));

  ledger_index_.assign(n, -1);
  scratch_.resize(n);
  for (auto& s : scratch_) s.rssi.resize(static_cast<std::size_t>(nsc));
  store_.seeds = {cfg_.scenario.master_seed};

  auto selection = [n](const std::vector<std::uint32_t>& ids) {
    std::vector<char> sel(n, ids.empty() ? 1 : 0);
    for (auto id : ids)
      if (id < n) sel[id] = 1;
    return sel;
  };
  auto open = [](std::ofstream& f, const std::filesystem::path& p, std::ios::openmode mode) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    f.open(p, mode);
    if (!f) throw std::runtime_error("cannot write " + p.string());
  };
  if (!cfg_.trace.scheduler_csv.empty()) {
    open(sched_out_, cfg_.trace.scheduler_csv, std::ios::out | std::ios::binary);
    write_trace_header(sched_out_);
    sched_sel_ = selection(cfg_.trace.scheduler_vehicles);
  }
  if (!cfg_.trace.congestion_csv.empty()) {
    open(cong_out_, cfg_.trace.congestion_csv, std::ios::out | std::ios::binary);
    write_congestion_header(cong_out_);
    cong_sel_ = selection(cfg_.trace.congestion_vehicles);
  }
  if (!cfg_.trace.event_log.empty()) open(event_out_, cfg_.trace.event_log, std::ios::out | std::ios::binary);
}

Engine::~Engine() = default;

Engine::PairState* Engine::pair_state(std::uint32_t tx, std::uint32_t rx) {
  const std::size_t off = pair_offset_[rx];
  if (off == std::numeric_limits<std::size_t>::max()) return nullptr;
  if (tx < pair_tx_lo_[rx] || tx >= pair_tx_lo_[rx] + pair_tx_n_[rx]) return nullptr;
  return &pairs_[off + (tx - pair_tx_lo_[rx])];
}

void Engine::congestion_tick() {
  for (std::size_t v = 0; v < vues_.size(); ++v) {
    auto& c = vues_[v].cong;
    update_density(c, now_, cfg_.congestion);
    if (cong_out_.is_open() && cong_sel_[v])
      write_congestion_row(cong_out_, {now_, static_cast<std::uint32_t>(v), c.n_count(), c.n_smoothed(), c.interval_ms()});
  }
  const auto step = static_cast<std::size_t>(now_ / 100);
  if (step >= store_.interval_sum.size()) return;
  double isum = 0.0;
  for (std::uint32_t v = stats_lo_; v <= stats_hi_; ++v) isum += vues_[v].cong.interval_ms();
  store_.interval_sum[step] += isum / static_cast<double>(stats_hi_ - stats_lo_ + 1);
  store_.interval_n[step] += 1;
  if (now_ >= cfg_.sps.sensing_depth_ms && !cbr_vehicles_.empty()) {
    double csum = 0.0;
    for (auto v : cbr_vehicles_) csum += vues_[v].sensing.busy_ratio();
    store_.cbr_sum[step] += csum / static_cast<double>(cbr_vehicles_.size());
    store_.cbr_n[step] += 1;
  }
}

void Engine::generate(std::uint32_t v) {
  auto& s = vues_[v];
  if (s.pending) {
    // A newer BSM replaces the untransmitted one; the reserved slot is kept.
    s.pending->gen_sf = now_;
    s.cong.pending_generation = now_;
  } else {
    const CandidateSource source = [&](const Grant* exclude) {
      return select_candidates(s.sensing, now_, sel_, exclude);
    };
    const TickResult res = sps_transmit_tick(s.sched, source, s.mac_rng, cfg_.sps);
    if (res.sps_reselected) ++s.sps_serial;
    PlannedTx p;
    p.gen_sf = now_;
    p.grant = res.grant;
    p.tx_sf = grant_to_subframe(res.grant, now_, cfg_.sps.t1_ms, cfg_.sps.reservation_period_ms());
    p.reserves = res.grant.origin == GrantOrigin::sps && s.sched.c_s > 0;
    s.pending = p;
    s.cong.pending_generation = now_;
    if (sched_out_.is_open() && sched_sel_[v]) {
      SchedulerTraceRow row;
      row.subframe = now_;
      row.tx_subframe = p.tx_sf;
      row.vehicle = v;
      row.grant = res.grant;
      row.tick_case = res.tick_case;
      row.c_s = s.sched.c_s;
      row.c_o = s.sched.c_o.value_or(-1);
      row.esps_intervals_used = s.sched.esps_intervals_used;
      write_trace_row(sched_out_, row);
    }
  }
  s.cong.next_generation_ms += s.cong.interval_ms();
}

void Engine::build_ledger() {
  for (const auto& e : ledger_.entries) ledger_index_[e.tx] = -1;
  ledger_.entries.clear();
  ledger_.subframe = now_;
  const int per = cfg_.scenario.subchannels_per_bsm;
  for (std::uint32_t v = 0; v < vues_.size(); ++v) {
    auto& s = vues_[v];
    if (!s.pending) continue;
    if (s.pending->tx_sf < now_) throw std::logic_error("planned transmission in the past");
    if (s.pending->tx_sf != now_ || !gate_transmission(s.cong, now_)) continue;
    const PlannedTx& p = *s.pending;
    LedgerEntry e;
    e.tx = v;
    e.vrb_start = p.grant.vrb_start;
    e.vrb_count = p.grant.vrb_count;
    e.pair = p.grant.vrb_start / per;
    e.origin = p.grant.origin;
    e.gen_sf = p.gen_sf;
    e.reserves = p.reserves;
    ledger_index_[v] = static_cast<int>(ledger_.entries.size());
    ledger_.entries.push_back(e);
    s.pending.reset();
    s.cong.pending_generation.reset();
    const bool stats = v >= stats_lo_ && v <= stats_hi_;
    if (stats && now_ >= warmup_) {
      if (s.last_tx_sf >= warmup_) s.max_itt_ms = std::max(s.max_itt_ms, now_ - s.last_tx_sf);
      ++store_.transmissions;
    }
    s.last_tx_sf = now_;
    ++s.transmissions;
  }
}

void Engine::receive(std::uint32_t r) {
  auto& sc = scratch_[r];
  sc.events.clear();
  sc.records.clear();
  auto& me = vues_[r];
  const auto& led = ledger_.entries;
  const std::size_t m = led.size();
  const bool log = event_out_.is_open() && now_ >= warmup_;
  const int pairs = world_.pairs_per_subframe;
  const int nsc = world_.subchannels;
  auto idx_dist = [r](std::uint32_t a) { return static_cast<std::size_t>(a > r ? a - r : r - a); };

  // `interferer` indexes the ledger: the receiver itself for half-duplex, the
  // strongest same-sub-frame transmitter for collisions, otherwise none.
  auto on_loss = [&](const LedgerEntry& e, PairState& ps, LossCause cause, int interferer) {
    if (++ps.misses == 1) {
      ps.first_loss = cause;
      ps.tx_serial = vues_[e.tx].sps_serial;
      ps.tx_oneshot = e.origin == GrantOrigin::oneshot;
      ps.interferer = kNoVehicle;
      ps.interferer_serial = 0;
      ps.interferer_oneshot = false;
      if (interferer >= 0) {
        const LedgerEntry& b = led[static_cast<std::size_t>(interferer)];
        ps.interferer = b.tx;
        ps.interferer_serial = vues_[b.tx].sps_serial;
        ps.interferer_oneshot = b.origin == GrantOrigin::oneshot;
      }
    }
  };

  if (ledger_index_[r] >= 0) {
    me.sensing.record_unsensed(now_);
    for (const auto& e : led) {
      if (e.tx == r) continue;
      PairState* ps = pair_state(e.tx, r);
      if (!ps) continue;
      const std::size_t d = idx_dist(e.tx);
      if (now_ >= warmup_) {
        sc.events.push_back({EventKind::prr, -1, 0, 0, static_cast<std::uint32_t>(dist_m_[d]), 0, 0});
        sc.events.push_back({EventKind::loss, -1, 0, static_cast<std::uint8_t>(LossCause::hd), 0, 0, 0});
      }
      if (log) {
        sc.records.push_back({now_, e.tx, r, 0, LossCause::hd, -std::numeric_limits<float>::infinity(),
                              -std::numeric_limits<float>::infinity(),
                              static_cast<float>(static_cast<double>(d) * world_.spacing_m)});
      }
      on_loss(e, *ps, LossCause::hd, ledger_index_[r]);
    }
    return;
  }

  sc.gain.resize(m);
  sc.h0.resize(m);
  sc.h1.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t d = idx_dist(led[i].tx);
    sc.gain[i] = path_gain_[d];
    if (cfg_.fading) {
      sc.h0[i] = draw_fading(nak_m_[d], 1.0, me.chan_rng);
      sc.h1[i] = draw_fading(nak_m_[d], 1.0, me.chan_rng);
    } else {
      sc.h0[i] = 1.0;
      sc.h1[i] = 1.0;
    }
  }

  for (int v = 0; v < nsc; ++v) {
    double p = noise_vrb_mw_;
    for (std::size_t i = 0; i < m; ++i)
      p += sc.gain[i] * 0.5 * (sc.h0[i] + sc.h1[i]) * vrb_profile_[static_cast<std::size_t>(led[i].pair * nsc + v)];
    sc.rssi[static_cast<std::size_t>(v)] = static_cast<float>(p);
  }

  const bool bler = cfg_.reception.kind == ReceptionModel::Kind::bler;
  const double noise = radio_.noise_prb_mw;
  const int phase = static_cast<int>(now_ % cfg_.sps.reservation_period_ms());
  for (std::size_t j = 0; j < m; ++j) {
    const LedgerEntry& e = led[j];
    const double u_ctrl = bler ? me.chan_rng.uniform() : 0.0;
    const double u_data = bler ? me.chan_rng.uniform() : 0.0;
    const double h[kRxAntennas] = {sc.h0[j], sc.h1[j]};
    double id[kRxAntennas] = {0.0, 0.0};
    double ic[kRxAntennas] = {0.0, 0.0};
    int dominant = -1;
    double dominant_p = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == j) continue;
      const auto lut = static_cast<std::size_t>(led[k].pair * pairs + e.pair);
      const double bd = radio_.data_psd_mw * sc.gain[k] * leak_data_[lut];
      const double bc = radio_.data_psd_mw * sc.gain[k] * leak_ctrl_[lut];
      id[0] += bd * sc.h0[k];
      id[1] += bd * sc.h1[k];
      ic[0] += bc * sc.h0[k];
      ic[1] += bc * sc.h1[k];
      const double pk = bd * sc.h0[k] + bd * sc.h1[k];
      if (pk > dominant_p) {
        dominant_p = pk;
        dominant = static_cast<int>(k);
      }
    }
    double sinr_d = 0.0;
    double sinr_c = 0.0;
    for (int a = 0; a < kRxAntennas; ++a) {
      sinr_d += radio_.data_psd_mw * sc.gain[j] * h[a] / (id[a] + noise);
      sinr_c += radio_.ctrl_psd_mw * sc.gain[j] * h[a] / (ic[a] + noise);
    }
    const bool ok_c = decode_success(sinr_c, ChannelKind::pscch, radio_, cfg_.reception, u_ctrl);
    const bool ok_d = decode_success(sinr_d, ChannelKind::pssch, radio_, cfg_.reception, u_data);
    const bool success = ok_c && ok_d;
    if (ok_c) {
      const double rsrp = lin_to_db(radio_.data_psd_mw * sc.gain[j] * 0.5 * (h[0] + h[1]));
      me.sensing.record_sci(now_, e.tx, phase, e.pair, static_cast<float>(rsrp), e.reserves);
    }
    if (success) me.cong.heard(e.tx, now_);

    PairState* ps = pair_state(e.tx, r);
    if (!ps) continue;
    const std::size_t d = idx_dist(e.tx);
    const int bin = bin_[d];

    LossCause cause = LossCause::none;
    if (!success) {
      double unit_d = 0.0;
      double unit_c = 0.0;
      double free_d = 0.0;
      double free_c = 0.0;
      for (int a = 0; a < kRxAntennas; ++a) {
        unit_d += radio_.data_psd_mw * sc.gain[j] / noise;
        unit_c += radio_.ctrl_psd_mw * sc.gain[j] / noise;
        free_d += radio_.data_psd_mw * sc.gain[j] * h[a] / noise;
        free_c += radio_.ctrl_psd_mw * sc.gain[j] * h[a] / noise;
      }
      if (unit_d < radio_.pssch_threshold_lin || unit_c < radio_.pscch_threshold_lin)
        cause = LossCause::noise_floor;
      else if (decode_success(free_c, ChannelKind::pscch, radio_, cfg_.reception, u_ctrl) &&
               decode_success(free_d, ChannelKind::pssch, radio_, cfg_.reception, u_data))
        cause = LossCause::collision;
      else
        cause = LossCause::fading;
    }

    if (now_ >= warmup_) {
      sc.events.push_back(
          {EventKind::prr, -1, static_cast<std::uint8_t>(success), 0, static_cast<std::uint32_t>(dist_m_[d]), 0, 0});
      if (!success) sc.events.push_back({EventKind::loss, -1, 0, static_cast<std::uint8_t>(cause), 0, 0, 0});
    }
    if (log) {
      sc.records.push_back({now_, e.tx, r, static_cast<std::uint8_t>(success), cause,
                            static_cast<float>(lin_to_db(sinr_d)), static_cast<float>(lin_to_db(sinr_c)),
                            static_cast<float>(static_cast<double>(d) * world_.spacing_m)});
    }

    if (!success) {
      on_loss(e, *ps, cause, cause == LossCause::collision ? dominant : -1);
      continue;
    }

    if (ps->last_rx_sf >= 0 && bin >= 0 && now_ >= warmup_) {
      if (ps->last_rx_sf >= warmup_)
        sc.events.push_back({EventKind::ipg, static_cast<std::int8_t>(bin), 0, 0, 0, now_ - ps->last_rx_sf, 0});
      const std::int64_t from = std::max(ps->last_rx_sf, warmup_);
      if (from < now_)
        sc.events.push_back({EventKind::ia, static_cast<std::int8_t>(bin), 0, 0, 0, from - ps->last_rx_gen,
                             now_ - 1 - ps->last_rx_gen});
      if (ps->misses >= 2 && ps->last_rx_sf >= warmup_) {
        EndCause end;
        if (ps->first_loss == LossCause::noise_floor) {
          end = EndCause::noise;
        } else if (e.origin == GrantOrigin::oneshot || ps->tx_oneshot || vues_[e.tx].sps_serial != ps->tx_serial) {
          end = EndCause::reselection;
        } else if (ps->interferer == kNoVehicle) {
          end = EndCause::better_conditions;
        } else {
          const std::uint32_t b = ps->interferer;
          const auto& bs = vues_[b].sched;
          if (ps->interferer_oneshot || vues_[b].sps_serial != ps->interferer_serial ||
              (bs.current_grant && bs.current_grant->origin == GrantOrigin::oneshot))
            end = EndCause::reselection;
          else if (ledger_index_[b] >= 0)
            end = EndCause::better_conditions;  // still shares the sub-frame
          else
            end = EndCause::slippage;
        }
        sc.events.push_back({EventKind::end, static_cast<std::int8_t>(bin), static_cast<std::uint8_t>(ps->first_loss),
                             static_cast<std::uint8_t>(end), 0, now_ - ps->last_rx_sf, 0});
      }
    }
    ps->last_rx_sf = now_;
    ps->last_rx_gen = e.gen_sf;
    ps->misses = 0;
  }
  me.sensing.record_rssi(now_, sc.rssi);
}

void Engine::apply_scratch(std::uint32_t r) {
  auto& sc = scratch_[r];
  for (const auto& ev : sc.events) {
    switch (ev.kind) {
      case EventKind::prr:
        store_.prr_tx[ev.dist_m] += 1;
        store_.prr_rx[ev.dist_m] += ev.flag;
        break;
      case EventKind::loss: store_.loss_causes[ev.cause] += 1; break;
      case EventKind::ipg: store_.add_ipg(ev.bin, ev.a); break;
      case EventKind::ia: store_.add_ia_run(ev.bin, ev.a, ev.b); break;
      case EventKind::end:
        store_.add_end({ev.a, static_cast<EndCause>(ev.cause), static_cast<LossCause>(ev.flag), ev.bin});
        break;
    }
  }
  if (event_out_.is_open()) {
    unsigned char buf[kEventRecordBytes];
    for (const auto& rec : sc.records) {
      encode_event(rec, buf);
      event_out_.write(reinterpret_cast<const char*>(buf), kEventRecordBytes);
    }
  }
}

void Engine::step() {
  if (finished_ || now_ >= duration_) throw std::logic_error("engine stepped past its duration");
  if (now_ % cfg_.congestion.update_period_ms == 0) congestion_tick();
  for (std::uint32_t v = 0; v < vues_.size(); ++v)
    if (std::floor(vues_[v].cong.next_generation_ms) <= static_cast<double>(now_)) generate(v);
  build_ledger();

  const auto n = static_cast<std::int64_t>(vues_.size());
  if (cfg_.kernel == KernelKind::openmp) {
    std::exception_ptr error;
#ifdef _OPENMP
    const int threads = cfg_.threads > 0 ? cfg_.threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
#endif
    for (std::int64_t r = 0; r < n; ++r) {
      try {
        receive(static_cast<std::uint32_t>(r));
      } catch (...) {
#ifdef _OPENMP
#pragma omp critical(cv2x_kernel_error)
#endif
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    for (std::int64_t r = 0; r < n; ++r) receive(static_cast<std::uint32_t>(r));
  }
  for (std::int64_t r = 0; r < n; ++r) apply_scratch(static_cast<std::uint32_t>(r));
  ++now_;
}

void Engine::finish() {
  if (finished_) return;
  finished_ = true;
  for (std::size_t r = 0; r < vues_.size(); ++r) {
    if (pair_offset_[r] == std::numeric_limits<std::size_t>::max()) continue;
    for (std::uint32_t k = 0; k < pair_tx_n_[r]; ++k) {
      const auto& ps = pairs_[pair_offset_[r] + k];
      const std::uint32_t tx = pair_tx_lo_[r] + k;
      const int bin = bin_[tx > r ? tx - r : r - tx];
      if (ps.last_rx_sf < 0 || bin < 0) continue;
      const std::int64_t from = std::max(ps.last_rx_sf, warmup_);
      if (from < now_) store_.add_ia_run(bin, from - ps.last_rx_gen, now_ - 1 - ps.last_rx_gen);
    }
  }
  for (std::uint32_t v = stats_lo_; v <= stats_hi_; ++v)
    store_.max_itt.push_back({cfg_.scenario.master_seed, v, vues_[v].max_itt_ms});
  store_.tx_vehicle_seconds =
      static_cast<double>(stats_hi_ - stats_lo_ + 1) * static_cast<double>(now_ - std::min(now_, warmup_)) / 1000.0;
  sched_out_.flush();
  cong_out_.flush();
  event_out_.flush();
}

MetricStore Engine::run() {
  while (now_ < duration_) step();
  finish();
  return store_;
}

MetricStore run_engine(const World& world, const EngineConfig& cfg) {
  Engine e(world, cfg);
  return e.run();
}

}  // namespace cv2x
