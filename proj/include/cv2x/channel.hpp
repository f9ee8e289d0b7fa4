// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cv2x/rng.hpp"
#include "cv2x/scenario.hpp"

namespace cv2x {

inline constexpr int kRxAntennas = 2;
inline constexpr double kPrbHz = 180e3;

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
double lin_to_db(double lin);

/// Nakagami shape factor versus V2V distance.
double nakagami_m(double distance_m);

/// One power gain from Nakagami(m, omega), i.e. Gamma(shape m, scale omega/m).
double draw_fading(double m, double omega, RngStream& rng);

/// Sorted (x, y) table with linear interpolation and flat extrapolation.
class InterpTable {
public:
  InterpTable() = default;
  /// Throws std::invalid_argument unless x is strictly increasing.
  explicit InterpTable(std::vector<std::pair<double, double>> points);
  double operator()(double x) const;
  const std::vector<std::pair<double, double>>& points() const { return pts_; }
  bool empty() const { return pts_.empty(); }

private:
  std::vector<std::pair<double, double>> pts_;
};

/// Two-column whitespace/comma separated text; '#' starts a comment.
InterpTable load_table_file(const std::filesystem::path& path);

struct PathlossModel {
  enum class Kind { log_distance, table };
  Kind kind = Kind::log_distance;
  double pl0_db = 47.0;  // at reference distance d0
  double d0_m = 1.0;
  double exponent = 2.75;
  double d_min_m = 1.0;  // distances clamp up to this floor
  InterpTable table;     // distance_m -> loss_db
};

double pathloss_db(double distance_m, const PathlossModel& model);

/// Adjacent sub-channel leakage, per sub-channel offset. offset 0 is 0 dB;
/// offsets past the end reuse the last entry.
struct IbeMask {
  std::vector<double> attenuation_db{-30.0, -45.0};  // offsets 1, 2, ...
  double attenuation(int offset) const;               // dB
  double gain(int offset) const { return db_to_lin(attenuation(offset)); }
};

/// Mean leakage gain from an allocation [src, src+src_n) into each
/// sub-channel of [dst, dst+dst_n), averaged over the destination. A
/// destination sub-channel inside the source allocation sees full power.
double leakage_gain(const IbeMask& mask, int src_start, int src_n, int dst_start, int dst_n);

/// Radio constants derived once from the scenario.
struct RadioParams {
  double data_psd_mw = 0.0;   // PSSCH power per PRB
  double ctrl_psd_mw = 0.0;   // PSCCH power per PRB (boosted)
  double noise_prb_mw = 0.0;  // thermal noise + NF over one PRB
  int pssch_prbs = 0;
  int pscch_prbs = 0;
  int prbs_per_subchannel = 0;
  double pssch_threshold_db = 3.0;
  double pscch_threshold_db = 0.0;
  double pssch_threshold_lin = 0.0;
  double pscch_threshold_lin = 0.0;

  static RadioParams from(const ScenarioConfig& cfg);
  double noise_dbm(int prbs) const;
};

struct LinkBudget {
  std::uint32_t tx_id = 0;
  std::uint32_t rx_id = 0;
  double distance_m = 0.0;
  double pathloss_db = 0.0;
  std::array<double, kRxAntennas> fading_gain_linear{1.0, 1.0};
  int vrb_start = 0;
  int vrb_count = 2;
};

enum class ChannelKind { pssch, pscch };

struct SinrReport {
  double signal_dbm = 0.0;
  std::vector<double> interference_dbm;  // one per contributing interferer
  double noise_dbm = 0.0;
  double post_mrc_sinr_db = 0.0;
  bool hd_blocked = false;
};

/// SINR of `wanted` on one channel, with co- and adjacent-channel interferers.
/// MRC sums per-antenna linear SINR. hd_blocked skips the computation.
SinrReport compose_sinr(const LinkBudget& wanted, const std::vector<LinkBudget>& interferers,
                        ChannelKind kind, const RadioParams& radio, const IbeMask& mask,
                        bool rx_transmitting = false);

struct ReceptionModel {
  enum class Kind { threshold, bler };
  Kind kind = Kind::threshold;
  InterpTable bler_pssch;  // sinr_db -> block error rate
  InterpTable bler_pscch;
};

struct DecodeOutcome {
  bool success = false;
  double draw = 0.0;  // uniform used by the BLER model, 0 for threshold
};

/// Throws std::logic_error on an hd_blocked report.
DecodeOutcome decode(const SinrReport& sinr, ChannelKind kind, const RadioParams& radio,
                     const ReceptionModel& model, RngStream& rng);

/// Success rule shared by decode() and the engine kernel, on linear SINR.
/// Threshold model: sinr >= threshold (inclusive). BLER model: draw >= BLER(sinr).
bool decode_success(double sinr_lin, ChannelKind kind, const RadioParams& radio, const ReceptionModel& model,
                    double draw);

}  // namespace cv2x
