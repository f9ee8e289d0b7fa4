// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cv2x {

enum class LossCause : std::uint8_t { none = 0, hd, collision, noise_floor, fading };
inline constexpr std::size_t kLossCauses = 5;

enum class EndCause : std::uint8_t { reselection = 0, slippage, better_conditions, noise };
inline constexpr std::size_t kEndCauses = 4;

const char* to_string(LossCause c);
const char* to_string(EndCause c);

struct EndCauseRecord {
  std::int64_t ipg_ms = 0;
  EndCause cause = EndCause::better_conditions;
  LossCause origin = LossCause::none;  // cause of the first loss in the gap
  int bin = -1;                        // CCDF bin, -1 when outside every bin
};

/// Figure-style class 1..6: noise, reselection/HD, slippage/HD,
/// reselection/collision, slippage/collision, better conditions.
int end_class(const EndCauseRecord& r);

/// Empirical exceedance F(i) = P(X > i) on a 1 ms grid starting at 0.
struct CcdfCurve {
  std::vector<double> ccdf;
  std::uint64_t samples = 0;

  /// Linear between grid points; 1 below 0, 0 past the grid.
  double at(double x_ms) const;
};

/// Throws std::invalid_argument on an empty sample set.
CcdfCurve ipg_ccdf(std::span<const double> samples, std::size_t grid_len);
/// Histogram bin i counts samples equal to i ms. Throws when empty.
CcdfCurve ccdf_from_histogram(std::span<const std::uint64_t> hist);

struct Improvement {
  double value = 0.0;
  int points = 0;   // grid points used
  int skipped = 0;  // base == 0
  bool flagged = false;  // skipped > 1% of the grid
};

/// Mean over the 1 ms grid on [lo, hi] of (F_base - F_variant) / F_base.
/// Points where F_base == 0 are skipped. Throws std::invalid_argument if
/// F_base is zero on the whole range.
Improvement relative_improvement(const CcdfCurve& base, const CcdfCurve& variant, double lo_ms = 3000.0,
                                 double hi_ms = 10000.0);

struct Reception {
  std::int64_t rx_sf = 0;
  std::int64_t gen_sf = 0;
};

/// IA(t) = t - generation time of the latest BSM received by t, sampled
/// every ms on [t_begin, t_end). Samples before the first reception are omitted.
std::vector<std::int64_t> ia_series(std::span<const Reception> receptions, std::int64_t t_begin, std::int64_t t_end);

/// R / T; absent when T == 0.
std::optional<double> prr(std::uint64_t received, std::uint64_t transmitted);

struct PercentileResult {
  double value = 0.0;
  bool low_confidence = false;  // fewer than 1 / (1 - q) samples
};

/// Nearest-rank: the ceil(q n)-th smallest sample. Throws on empty input.
PercentileResult percentile(std::span<const double> samples, double q = 0.999);
std::optional<PercentileResult> percentile_hist(std::span<const std::uint64_t> hist, double q = 0.999);

struct DistanceBin {
  double center_m = 0.0;
  double half_width_m = 25.0;
  bool contains(double d) const { return d >= center_m - half_width_m && d <= center_m + half_width_m; }
};

struct MetricConfig {
  std::vector<double> ccdf_bins_m{200.0, 300.0, 400.0};
  double bin_half_width_m = 25.0;
  double eval_radius_m = 500.0;
  std::int64_t long_ipg_ms = 1000;
};

struct IttRow {
  std::uint64_t seed = 0;
  std::uint32_t vehicle = 0;
  std::int64_t max_itt_ms = 0;
};

/**
 * Additive accumulators for one or more runs.
 *
 * Every field is either an integer count or a per-time-step sum, so merging
 * two stores equals accumulating the concatenated events.
 */
struct MetricStore {
  MetricConfig config;
  std::int64_t hist_len = 0;  // ms; histograms span [0, hist_len)
  std::vector<std::vector<std::uint64_t>> ipg_hist;  // per CCDF bin
  std::vector<std::vector<std::int64_t>> ia_diff;  // difference array, length hist_len + 1
  std::vector<std::uint64_t> prr_tx;  // per metre of distance
  std::vector<std::uint64_t> prr_rx;
  std::array<std::uint64_t, kLossCauses> loss_causes{};
  std::array<std::uint64_t, kEndCauses> end_causes{};       // gaps with >= 2 misses
  std::array<std::uint64_t, kEndCauses> end_causes_long{};  // gaps > long_ipg_ms
  std::array<std::uint64_t, 7> end_classes_long{};          // index 1..6
  std::vector<std::array<std::uint64_t, kEndCauses>> end_causes_long_bin;  // per CCDF bin
  std::vector<EndCauseRecord> long_ipg_ends;
  std::vector<double> cbr_sum;  // per 100 ms step
  std::vector<std::uint64_t> cbr_n;
  std::vector<double> interval_sum;
  std::vector<std::uint64_t> interval_n;
  std::vector<IttRow> max_itt;
  std::uint64_t transmissions = 0;  // stats-region vehicles, after warm-up
  double tx_vehicle_seconds = 0.0;
  std::int64_t warmup_ms = 0;
  std::vector<std::uint64_t> seeds;

  MetricStore() = default;
  MetricStore(const MetricConfig& cfg, std::int64_t duration_ms, std::int64_t warmup);

  /// CCDF bin index containing `d`, or -1.
  int bin_of(double d) const;
  void add_ipg(int bin, std::int64_t ipg_ms);
  /// IA values a, a+1, ..., b (inclusive) each observed once.
  void add_ia_run(int bin, std::int64_t a, std::int64_t b);
  void add_end(const EndCauseRecord& r);

  void merge(const MetricStore& other);

  CcdfCurve ipg_curve(int bin) const { return ccdf_from_histogram(ipg_hist.at(static_cast<std::size_t>(bin))); }
  std::vector<std::uint64_t> ia_hist(int bin) const;
  CcdfCurve ia_curve(int bin) const { return ccdf_from_histogram(ia_hist(bin)); }
  /// PRR over distances within the half-width of `center_m`.
  std::optional<double> prr_at(double center_m, double half_width_m) const;
  /// Mean of the CBR series over steps at or after warm-up.
  std::optional<double> mean_cbr() const;
  std::optional<double> mean_interval_ms() const;
  std::uint64_t ipg_samples(int bin) const;
};

/// CSV files described in the README; returns the paths written.
std::vector<std::filesystem::path> write_metric_csvs(const MetricStore& store, const std::filesystem::path& dir);

/// File-name label of a distance bin: the rounded centre in metres.
std::string bin_label(double center_m);

/// Reads a two-column CCDF file as written by write_metric_csvs. Absent when
/// the file has a header only. Throws std::runtime_error on malformed rows.
std::optional<CcdfCurve> read_ccdf_csv(const std::filesystem::path& path);

/// Shortest round-trip decimal for CSV output.
std::string format_double(double v);

}  // namespace cv2x
