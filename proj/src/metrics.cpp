// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace cv2x {

const char* to_string(LossCause c) {
  switch (c) {
    case LossCause::none: return "none";
    case LossCause::hd: return "hd";
    case LossCause::collision: return "collision";
    case LossCause::noise_floor: return "noise_floor";
    case LossCause::fading: return "fading";
  }
  return "?";
}

const char* to_string(EndCause c) {
  switch (c) {
    case EndCause::reselection: return "reselection";
    case EndCause::slippage: return "slippage";
    case EndCause::better_conditions: return "better_conditions";
    case EndCause::noise: return "noise";
  }
  return "?";
}

int end_class(const EndCauseRecord& r) {
  const bool hd = r.origin == LossCause::hd;
  switch (r.cause) {
    case EndCause::noise: return 1;
    case EndCause::reselection: return hd ? 2 : 4;
    case EndCause::slippage: return hd ? 3 : 5;
    case EndCause::better_conditions: return 6;
  }
  return 0;
}

double CcdfCurve::at(double x_ms) const {
  if (x_ms < 0.0) return 1.0;
  if (ccdf.empty()) return 0.0;
  const double last = static_cast<double>(ccdf.size() - 1);
  if (x_ms >= last) return x_ms == last ? ccdf.back() : 0.0;
  const auto i = static_cast<std::size_t>(x_ms);
  const double f = x_ms - static_cast<double>(i);
  return f == 0.0 ? ccdf[i] : ccdf[i] + f * (ccdf[i + 1] - ccdf[i]);
}

CcdfCurve ipg_ccdf(std::span<const double> samples, std::size_t grid_len) {
  if (samples.empty()) throw std::invalid_argument("ccdf of an empty sample set");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  CcdfCurve c;
  c.samples = sorted.size();
  c.ccdf.resize(grid_len);
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < grid_len; ++i) {
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), static_cast<double>(i));
    c.ccdf[i] = static_cast<double>(above) / n;
  }
  return c;
}

CcdfCurve ccdf_from_histogram(std::span<const std::uint64_t> hist) {
  const std::uint64_t n = std::accumulate(hist.begin(), hist.end(), std::uint64_t{0});
  if (n == 0) throw std::invalid_argument("ccdf of an empty histogram");
  std::size_t len = hist.size();
  while (len > 0 && hist[len - 1] == 0) --len;
  CcdfCurve c;
  c.samples = n;
  c.ccdf.resize(len);
  std::uint64_t cum = 0;
  for (std::size_t i = 0; i < len; ++i) {
    cum += hist[i];
    c.ccdf[i] = static_cast<double>(n - cum) / static_cast<double>(n);
  }
  return c;
}

Improvement relative_improvement(const CcdfCurve& base, const CcdfCurve& variant, double lo_ms, double hi_ms) {
  Improvement out;
  double sum = 0.0;
  int grid = 0;
  for (auto k = static_cast<std::int64_t>(std::ceil(lo_ms)); k <= static_cast<std::int64_t>(std::floor(hi_ms)); ++k) {
    ++grid;
    const double fb = base.at(static_cast<double>(k));
    if (fb <= 0.0) {
      ++out.skipped;
      continue;
    }
    sum += (fb - variant.at(static_cast<double>(k))) / fb;
    ++out.points;
  }
  if (out.points == 0) throw std::invalid_argument("baseline CCDF is zero on the whole comparison range");
  out.value = sum / out.points;
  out.flagged = out.skipped * 100 > grid;
  return out;
}

std::vector<std::int64_t> ia_series(std::span<const Reception> receptions, std::int64_t t_begin, std::int64_t t_end) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < receptions.size(); ++i) {
    const std::int64_t from = std::max(receptions[i].rx_sf, t_begin);
    const std::int64_t to = i + 1 < receptions.size() ? std::min(receptions[i + 1].rx_sf, t_end) : t_end;
    for (std::int64_t t = from; t < to; ++t) out.push_back(t - receptions[i].gen_sf);
  }
  return out;
}

std::optional<double> prr(std::uint64_t received, std::uint64_t transmitted) {
  if (transmitted == 0) return std::nullopt;
  return static_cast<double>(received) / static_cast<double>(transmitted);
}

namespace {

std::uint64_t nearest_rank(std::uint64_t n, double q) {
  const auto r = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  return std::clamp<std::uint64_t>(r, 1, n);
}

bool low_confidence(std::uint64_t n, double q) { return static_cast<double>(n) * (1.0 - q) < 1.0 - 1e-9; }

}  // namespace

PercentileResult percentile(std::span<const double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("percentile of an empty sample set");
  std::vector<double> v(samples.begin(), samples.end());
  const auto r = nearest_rank(v.size(), q);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(r - 1), v.end());
  return {v[r - 1], low_confidence(v.size(), q)};
}

std::optional<PercentileResult> percentile_hist(std::span<const std::uint64_t> hist, double q) {
  const std::uint64_t n = std::accumulate(hist.begin(), hist.end(), std::uint64_t{0});
  if (n == 0) return std::nullopt;
  const auto r = nearest_rank(n, q);
  std::uint64_t cum = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    cum += hist[i];
    if (cum >= r) return PercentileResult{static_cast<double>(i), low_confidence(n, q)};
  }
  return std::nullopt;
}

MetricStore::MetricStore(const MetricConfig& cfg, std::int64_t duration_ms, std::int64_t warmup)
    : config(cfg), hist_len(duration_ms + 1), warmup_ms(warmup) {
  const auto bins = cfg.ccdf_bins_m.size();
  ipg_hist.assign(bins, std::vector<std::uint64_t>(static_cast<std::size_t>(hist_len), 0));
  ia_diff.assign(bins, std::vector<std::int64_t>(static_cast<std::size_t>(hist_len) + 1, 0));
  end_causes_long_bin.assign(bins, {});
  const auto radius = static_cast<std::size_t>(std::floor(cfg.eval_radius_m)) + 1;
  prr_tx.assign(radius, 0);
  prr_rx.assign(radius, 0);
  const auto steps = static_cast<std::size_t>(duration_ms / 100 + 1);
  cbr_sum.assign(steps, 0.0);
  cbr_n.assign(steps, 0);
  interval_sum.assign(steps, 0.0);
  interval_n.assign(steps, 0);
}

int MetricStore::bin_of(double d) const {
  for (std::size_t b = 0; b < config.ccdf_bins_m.size(); ++b) {
    if (DistanceBin{config.ccdf_bins_m[b], config.bin_half_width_m}.contains(d)) return static_cast<int>(b);
  }
  return -1;
}

void MetricStore::add_ipg(int bin, std::int64_t ipg_ms) {
  auto& h = ipg_hist[static_cast<std::size_t>(bin)];
  h[static_cast<std::size_t>(std::min<std::int64_t>(ipg_ms, hist_len - 1))] += 1;
}

void MetricStore::add_ia_run(int bin, std::int64_t a, std::int64_t b) {
  if (b < a) return;
  auto& d = ia_diff[static_cast<std::size_t>(bin)];
  a = std::clamp<std::int64_t>(a, 0, hist_len - 1);
  b = std::clamp<std::int64_t>(b, 0, hist_len - 1);
  d[static_cast<std::size_t>(a)] += 1;
  d[static_cast<std::size_t>(b) + 1] -= 1;
}

std::vector<std::uint64_t> MetricStore::ia_hist(int bin) const {
  const auto& d = ia_diff.at(static_cast<std::size_t>(bin));
  std::vector<std::uint64_t> h(static_cast<std::size_t>(hist_len), 0);
  std::int64_t run = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    run += d[i];
    h[i] = static_cast<std::uint64_t>(run);
  }
  return h;
}

void MetricStore::add_end(const EndCauseRecord& r) {
  end_causes[static_cast<std::size_t>(r.cause)] += 1;
  if (r.ipg_ms > config.long_ipg_ms) {
    end_causes_long[static_cast<std::size_t>(r.cause)] += 1;
    end_classes_long[static_cast<std::size_t>(end_class(r))] += 1;
    if (r.bin >= 0) end_causes_long_bin.at(static_cast<std::size_t>(r.bin))[static_cast<std::size_t>(r.cause)] += 1;
    long_ipg_ends.push_back(r);
  }
}

namespace {

template <class T>
void add_into(std::vector<T>& dst, const std::vector<T>& src) {
  if (dst.size() < src.size()) dst.resize(src.size(), T{});
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

void MetricStore::merge(const MetricStore& o) {
  if (ipg_hist.empty()) {
    const auto seeds_before = seeds;
    *this = o;
    seeds.insert(seeds.begin(), seeds_before.begin(), seeds_before.end());
    return;
  }
  if (o.ipg_hist.size() != ipg_hist.size()) throw std::invalid_argument("merging stores with different CCDF bins");
  if (o.hist_len > hist_len) {
    for (auto& d : ia_diff) d.resize(static_cast<std::size_t>(o.hist_len) + 1, 0);
    hist_len = o.hist_len;
  }
  for (std::size_t b = 0; b < ipg_hist.size(); ++b) {
    add_into(ipg_hist[b], o.ipg_hist[b]);
    add_into(ia_diff[b], o.ia_diff[b]);
  }
  for (auto& h : ipg_hist) h.resize(static_cast<std::size_t>(hist_len), 0);
  add_into(prr_tx, o.prr_tx);
  add_into(prr_rx, o.prr_rx);
  for (std::size_t i = 0; i < kLossCauses; ++i) loss_causes[i] += o.loss_causes[i];
  for (std::size_t i = 0; i < kEndCauses; ++i) {
    end_causes[i] += o.end_causes[i];
    end_causes_long[i] += o.end_causes_long[i];
  }
  for (std::size_t i = 0; i < end_classes_long.size(); ++i) end_classes_long[i] += o.end_classes_long[i];
  for (std::size_t b = 0; b < end_causes_long_bin.size(); ++b)
    for (std::size_t i = 0; i < kEndCauses; ++i) end_causes_long_bin[b][i] += o.end_causes_long_bin.at(b)[i];
  long_ipg_ends.insert(long_ipg_ends.end(), o.long_ipg_ends.begin(), o.long_ipg_ends.end());
  add_into(cbr_sum, o.cbr_sum);
  add_into(cbr_n, o.cbr_n);
  add_into(interval_sum, o.interval_sum);
  add_into(interval_n, o.interval_n);
  max_itt.insert(max_itt.end(), o.max_itt.begin(), o.max_itt.end());
  transmissions += o.transmissions;
  tx_vehicle_seconds += o.tx_vehicle_seconds;
  seeds.insert(seeds.end(), o.seeds.begin(), o.seeds.end());
}

std::optional<double> MetricStore::prr_at(double center_m, double half_width_m) const {
  std::uint64_t t = 0;
  std::uint64_t r = 0;
  const DistanceBin bin{center_m, half_width_m};
  for (std::size_t d = 0; d < prr_tx.size(); ++d) {
    if (!bin.contains(static_cast<double>(d))) continue;
    t += prr_tx[d];
    r += prr_rx[d];
  }
  return prr(r, t);
}

namespace {

std::optional<double> series_mean(const std::vector<double>& sum, const std::vector<std::uint64_t>& n,
                                  std::int64_t warmup_ms) {
  double acc = 0.0;
  std::uint64_t steps = 0;
  for (std::size_t k = 0; k < sum.size(); ++k) {
    if (static_cast<std::int64_t>(k) * 100 < warmup_ms || n[k] == 0) continue;
    acc += sum[k] / static_cast<double>(n[k]);
    ++steps;
  }
  if (steps == 0) return std::nullopt;
  return acc / static_cast<double>(steps);
}

}  // namespace

std::optional<double> MetricStore::mean_cbr() const { return series_mean(cbr_sum, cbr_n, warmup_ms); }

std::optional<double> MetricStore::mean_interval_ms() const {
  return series_mean(interval_sum, interval_n, warmup_ms);
}

std::uint64_t MetricStore::ipg_samples(int bin) const {
  const auto& h = ipg_hist.at(static_cast<std::size_t>(bin));
  return std::accumulate(h.begin(), h.end(), std::uint64_t{0});
}

std::string format_double(double v) { return fmt::format("{}", v); }

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_curve(const std::filesystem::path& path, const char* column, const std::optional<CcdfCurve>& c) {
  auto out = open_csv(path);
  out << column << ",ccdf\n";
  if (!c) return;
  for (std::size_t i = 0; i < c->ccdf.size(); ++i) out << i << ',' << format_double(c->ccdf[i]) << '\n';
}

}  // namespace

std::string bin_label(double center_m) { return fmt::format("{}", static_cast<long long>(std::llround(center_m))); }

std::vector<std::filesystem::path> write_metric_csvs(const MetricStore& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto curve_or_none = [](auto&& make) -> std::optional<CcdfCurve> {
    try {
      return make();
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  };

  for (std::size_t b = 0; b < s.config.ccdf_bins_m.size(); ++b) {
    const int bin = static_cast<int>(b);
    const auto label = bin_label(s.config.ccdf_bins_m[b]);
    const auto ipg = dir / ("ccdf_ipg_" + label + ".csv");
    write_curve(ipg, "ipg_ms", curve_or_none([&] { return s.ipg_curve(bin); }));
    written.push_back(ipg);
    const auto ia = dir / ("ccdf_ia_" + label + ".csv");
    write_curve(ia, "ia_ms", curve_or_none([&] { return s.ia_curve(bin); }));
    written.push_back(ia);
  }

  {
    const auto path = dir / "prr_vs_distance.csv";
    auto out = open_csv(path);
    out << "distance_m,transmitted,received,prr\n";
    for (std::size_t d = 0; d < s.prr_tx.size(); ++d) {
      if (s.prr_tx[d] == 0) continue;
      out << d << ',' << s.prr_tx[d] << ',' << s.prr_rx[d] << ',' << format_double(*prr(s.prr_rx[d], s.prr_tx[d]))
          << '\n';
    }
    written.push_back(path);
  }

  {
    const auto path = dir / "percentiles.csv";
    auto out = open_csv(path);
    out << "bin_m,ipg_samples,ipg_p999_ms,ia_p999_ms,prr,low_confidence\n";
    for (std::size_t b = 0; b < s.config.ccdf_bins_m.size(); ++b) {
      const int bin = static_cast<int>(b);
      const auto ipg = percentile_hist(s.ipg_hist[b]);
      const auto ia_h = s.ia_hist(bin);
      const auto ia = percentile_hist(ia_h);
      const auto p = s.prr_at(s.config.ccdf_bins_m[b], s.config.bin_half_width_m);
      out << bin_label(s.config.ccdf_bins_m[b]) << ',' << s.ipg_samples(bin) << ','
          << (ipg ? format_double(ipg->value) : "") << ',' << (ia ? format_double(ia->value) : "") << ','
          << (p ? format_double(*p) : "") << ',' << ((ipg && ipg->low_confidence) || !ipg ? 1 : 0) << '\n';
    }
    written.push_back(path);
  }

  {
    const auto path = dir / "cbr_timeseries.csv";
    auto out = open_csv(path);
    out << "time_ms,cbr,mean_interval_ms\n";
    for (std::size_t k = 0; k < s.cbr_sum.size(); ++k) {
      if (s.cbr_n[k] == 0) continue;
      out << k * 100 << ',' << format_double(s.cbr_sum[k] / static_cast<double>(s.cbr_n[k])) << ',';
      if (k < s.interval_n.size() && s.interval_n[k] > 0)
        out << format_double(s.interval_sum[k] / static_cast<double>(s.interval_n[k]));
      out << '\n';
    }
    written.push_back(path);
  }

  {
    const auto path = dir / "max_itt.csv";
    auto out = open_csv(path);
    out << "seed,vehicle,max_itt_ms\n";
    for (const auto& r : s.max_itt) out << r.seed << ',' << r.vehicle << ',' << r.max_itt_ms << '\n';
    written.push_back(path);
  }

  {
    const auto path = dir / "end_causes.csv";
    auto out = open_csv(path);
    out << "cause,all_gaps,long_gaps";
    for (double b : s.config.ccdf_bins_m) out << ",long_gaps_" << bin_label(b);
    out << '\n';
    for (std::size_t c = 0; c < kEndCauses; ++c) {
      out << to_string(static_cast<EndCause>(c)) << ',' << s.end_causes[c] << ',' << s.end_causes_long[c];
      for (const auto& per_bin : s.end_causes_long_bin) out << ',' << per_bin[c];
      out << '\n';
    }
    for (std::size_t k = 1; k < s.end_classes_long.size(); ++k) {
      out << 'C' << k << ",," << s.end_classes_long[k];
      for (std::size_t b = 0; b < s.end_causes_long_bin.size(); ++b) out << ',';
      out << '\n';
    }
    written.push_back(path);
  }
  return written;
}

std::optional<CcdfCurve> read_ccdf_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  CcdfCurve c;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::size_t used = 0;
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      const auto x = std::stoull(line.substr(0, comma));
      const double y = std::stod(line.substr(comma + 1), &used);
      if (x != c.ccdf.size()) throw std::invalid_argument("grid gap");
      c.ccdf.push_back(y);
    } catch (const std::exception&) {
      throw std::runtime_error(fmt::format("{}:{}: malformed CCDF row", path.string(), lineno));
    }
  }
  if (c.ccdf.empty()) return std::nullopt;
  return c;
}

}  // namespace cv2x
