// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/channel.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace cv2x {

double lin_to_db(double lin) {
  return lin > 0.0 ? 10.0 * std::log10(lin) : -std::numeric_limits<double>::infinity();
}

double nakagami_m(double distance_m) {
  if (distance_m < 50.0) return 3.0;
  if (distance_m < 150.0) return 1.5;
  return 1.0;
}

double draw_fading(double m, double omega, RngStream& rng) { return rng.gamma(m, omega / m); }

InterpTable::InterpTable(std::vector<std::pair<double, double>> points) : pts_(std::move(points)) {
  if (pts_.empty()) throw std::invalid_argument("interpolation table is empty");
  for (std::size_t i = 1; i < pts_.size(); ++i) {
    if (!(pts_[i].first > pts_[i - 1].first))
      throw std::invalid_argument("interpolation table x axis must be strictly increasing (row " +
                                  std::to_string(i + 1) + ")");
  }
}

double InterpTable::operator()(double x) const {
  if (pts_.empty()) throw std::logic_error("lookup in empty interpolation table");
  if (x <= pts_.front().first) return pts_.front().second;
  if (x >= pts_.back().first) return pts_.back().second;
  const auto hi = std::upper_bound(pts_.begin(), pts_.end(), x,
                                   [](double v, const std::pair<double, double>& p) { return v < p.first; });
  const auto lo = hi - 1;
  if (x == lo->first) return lo->second;
  const double f = (x - lo->first) / (hi->first - lo->first);
  return lo->second + f * (hi->second - lo->second);
}

InterpTable load_table_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open table file " + path.string());
  std::vector<std::pair<double, double>> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double x = 0.0;
    double y = 0.0;
    if (!(fields >> x)) continue;
    if (!(fields >> y))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected two columns");
    pts.emplace_back(x, y);
  }
  return InterpTable(std::move(pts));
}

double pathloss_db(double distance_m, const PathlossModel& model) {
  const double d = std::max(distance_m, model.d_min_m);
  switch (model.kind) {
    case PathlossModel::Kind::log_distance:
      return model.pl0_db + 10.0 * model.exponent * std::log10(d / model.d0_m);
    case PathlossModel::Kind::table:
      return model.table(d);
  }
  return 0.0;
}

double IbeMask::attenuation(int offset) const {
  offset = std::abs(offset);
  if (offset == 0) return 0.0;
  if (attenuation_db.empty()) return -std::numeric_limits<double>::infinity();
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(offset - 1), attenuation_db.size() - 1);
  return attenuation_db[idx];
}

double leakage_gain(const IbeMask& mask, int src_start, int src_n, int dst_start, int dst_n) {
  double sum = 0.0;
  for (int v = dst_start; v < dst_start + dst_n; ++v) {
    if (v >= src_start && v < src_start + src_n) {
      sum += 1.0;
      continue;
    }
    for (int u = src_start; u < src_start + src_n; ++u) sum += mask.gain(u - v);
  }
  return sum / dst_n;
}

RadioParams RadioParams::from(const ScenarioConfig& cfg) {
  RadioParams r;
  r.prbs_per_subchannel = cfg.prbs_per_subchannel;
  r.pscch_prbs = cfg.pscch_prbs;
  r.pssch_prbs = cfg.subchannels_per_bsm * cfg.prbs_per_subchannel - cfg.pscch_prbs;
  const double boost = db_to_lin(cfg.pscch_boost_db);
  const double total_mw = db_to_lin(cfg.tx_power_dbm);
  r.data_psd_mw = total_mw / (r.pssch_prbs + boost * r.pscch_prbs);
  r.ctrl_psd_mw = boost * r.data_psd_mw;
  r.noise_prb_mw = db_to_lin(cfg.thermal_noise_dbm_per_hz + 10.0 * std::log10(kPrbHz) + cfg.noise_figure_db);
  r.pssch_threshold_db = cfg.sinr_threshold_pssch_db;
  r.pscch_threshold_db = cfg.sinr_threshold_pscch_db;
  r.pssch_threshold_lin = db_to_lin(r.pssch_threshold_db);
  r.pscch_threshold_lin = db_to_lin(r.pscch_threshold_db);
  return r;
}

double RadioParams::noise_dbm(int prbs) const { return lin_to_db(noise_prb_mw * prbs); }

SinrReport compose_sinr(const LinkBudget& wanted, const std::vector<LinkBudget>& interferers, ChannelKind kind,
                        const RadioParams& radio, const IbeMask& mask, bool rx_transmitting) {
  SinrReport report;
  const bool ctrl = kind == ChannelKind::pscch;
  const int prbs = ctrl ? radio.pscch_prbs : radio.pssch_prbs;
  report.noise_dbm = radio.noise_dbm(prbs);
  if (rx_transmitting) {
    report.hd_blocked = true;
    return report;
  }
  const int dst_start = wanted.vrb_start;
  const int dst_n = ctrl ? 1 : wanted.vrb_count;
  const double psd = ctrl ? radio.ctrl_psd_mw : radio.data_psd_mw;
  const double wanted_gain = db_to_lin(-wanted.pathloss_db);

  std::array<double, kRxAntennas> interference{};
  report.interference_dbm.reserve(interferers.size());
  for (const auto& it : interferers) {
    const double base = radio.data_psd_mw * db_to_lin(-it.pathloss_db) *
                        leakage_gain(mask, it.vrb_start, it.vrb_count, dst_start, dst_n);
    double mean = 0.0;
    for (int a = 0; a < kRxAntennas; ++a) {
      interference[a] += base * it.fading_gain_linear[a];
      mean += base * it.fading_gain_linear[a];
    }
    report.interference_dbm.push_back(lin_to_db(mean / kRxAntennas * prbs));
  }

  double sinr = 0.0;
  double signal_mean = 0.0;
  for (int a = 0; a < kRxAntennas; ++a) {
    const double s = psd * wanted_gain * wanted.fading_gain_linear[a];
    signal_mean += s;
    sinr += s / (interference[a] + radio.noise_prb_mw);
  }
  report.signal_dbm = lin_to_db(signal_mean / kRxAntennas * prbs);
  report.post_mrc_sinr_db = lin_to_db(sinr);
  return report;
}

bool decode_success(double sinr_lin, ChannelKind kind, const RadioParams& radio, const ReceptionModel& model,
                    double draw) {
  const bool ctrl = kind == ChannelKind::pscch;
  if (model.kind == ReceptionModel::Kind::threshold)
    return sinr_lin >= (ctrl ? radio.pscch_threshold_lin : radio.pssch_threshold_lin);
  const InterpTable& table = ctrl ? model.bler_pscch : model.bler_pssch;
  return draw >= table(lin_to_db(sinr_lin));
}

DecodeOutcome decode(const SinrReport& sinr, ChannelKind kind, const RadioParams& radio, const ReceptionModel& model,
                     RngStream& rng) {
  if (sinr.hd_blocked) throw std::logic_error("decode called on a half-duplex blocked report");
  DecodeOutcome out;
  if (model.kind == ReceptionModel::Kind::bler) out.draw = rng.uniform();
  out.success = decode_success(db_to_lin(sinr.post_mrc_sinr_db), kind, radio, model, out.draw);
  return out;
}

}  // namespace cv2x
