// SPDX-License-Identifier: GPL-2.0-only
#include "cv2x/campaign.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cv2x {

namespace {

using json = nlohmann::ordered_json;

std::filesystem::path trace_path(const std::filesystem::path& p, const std::filesystem::path& cell_dir,
                                 std::uint64_t seed, bool many) {
  if (p.empty()) return p;
  std::filesystem::path out = p.is_relative() ? cell_dir / p : p;
  if (many || !p.is_relative()) {
    auto name = out.stem().string();
    if (!p.is_relative()) name += "." + cell_dir.filename().string();
    out.replace_filename(name + fmt::format(".seed{}", seed) + out.extension().string());
  }
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> json_optional(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string cell_name(const RunConfig& cfg) {
  return fmt::format("d{}-bw{}-{}", format_double(cfg.engine.scenario.density_vpk), cfg.engine.scenario.bandwidth_mhz,
                     variant_label(cfg.engine.sps));
}

std::vector<Cell> paper_table_cells(const RunConfig& base) {
  std::vector<Cell> cells;
  for (double density : {125.0, 400.0, 800.0}) {
    for (int bw : {20, 10}) {
      for (const auto& variant : {std::optional<OneShotWindow>{}, std::optional<OneShotWindow>{OneShotWindow{5, 15}},
                                  std::optional<OneShotWindow>{OneShotWindow{2, 6}}}) {
        RunConfig c = base;
        c.engine.scenario.density_vpk = density;
        c.engine.scenario.bandwidth_mhz = bw;
        c.engine.scenario.subchannels_per_subframe = 0;
        c.engine.sps.oneshot = variant;
        cells.push_back({cell_name(c), c});
      }
    }
  }
  return cells;
}

std::vector<CellResult> run_cells(const std::vector<Cell>& cells, const std::filesystem::path& out, int workers,
                                  const ProgressFn& progress) {
  struct Task {
    std::size_t cell;
    int seed_index;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    validate(cells[c].cfg);
    for (int s = 0; s < cells[c].cfg.seeds; ++s) tasks.push_back({c, s});
  }
  for (std::size_t a = 0; a < cells.size(); ++a)
    for (std::size_t b = a + 1; b < cells.size(); ++b)
      if (cells[a].name == cells[b].name) throw ConfigError("duplicate cell name '" + cells[a].name + "'");

  std::vector<MetricStore> stores(tasks.size());
  std::vector<std::string> errors(tasks.size());
  const auto n = static_cast<std::int64_t>(tasks.size());
  std::int64_t done = 0;
#ifdef _OPENMP
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    const Task& t = tasks[static_cast<std::size_t>(i)];
    const Cell& cell = cells[t.cell];
    const auto start = std::chrono::steady_clock::now();
    EngineConfig cfg = cell.cfg.engine;
    const std::uint64_t seed = cfg.scenario.master_seed + static_cast<std::uint64_t>(t.seed_index);
    cfg.scenario.master_seed = seed;
    const bool many = cell.cfg.seeds > 1;
    const auto dir = out / cell.name;
    cfg.trace.scheduler_csv = trace_path(cfg.trace.scheduler_csv, dir, seed, many);
    cfg.trace.congestion_csv = trace_path(cfg.trace.congestion_csv, dir, seed, many);
    cfg.trace.event_log = trace_path(cfg.trace.event_log, dir, seed, many);
    try {
      stores[static_cast<std::size_t>(i)] = run_engine(build_world(cfg), cfg);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
#ifdef _OPENMP
#pragma omp critical(cv2x_progress)
#endif
    {
      ++done;
      if (progress)
        progress(fmt::format("[{}/{}] {} seed {} {} ({:.1f} s)", done, n, cell.name, seed,
                             errors[static_cast<std::size_t>(i)].empty() ? "done" : "FAILED", secs));
    }
  }

  std::vector<CellResult> results;
  results.reserve(cells.size());
  std::size_t i = 0;
  for (const auto& cell : cells) {
    CellResult r;
    r.cell = cell;
    for (int s = 0; s < cell.cfg.seeds; ++s, ++i) {
      r.seeds.push_back(cell.cfg.engine.scenario.master_seed + static_cast<std::uint64_t>(s));
      if (!errors[i].empty()) {
        if (r.error.empty()) r.error = fmt::format("seed {}: {}", r.seeds.back(), errors[i]);
        continue;
      }
      r.metrics.merge(stores[i]);
      stores[i] = MetricStore{};
    }
    results.push_back(std::move(r));
  }
  return results;
}

void write_cell_outputs(const CellResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.ini", canonical_dump(r.cell.cfg));

  json manifest;
  manifest["version"] = version_string();
  manifest["cell"] = r.cell.name;
  manifest["config_hash"] = hex64(config_hash(r.cell.cfg));
  manifest["master_seed"] = r.cell.cfg.engine.scenario.master_seed;
  manifest["seeds"] = r.seeds;
  manifest["rng"] = "xoshiro256** per (seed, domain << 32 | vehicle), SplitMix64 seeding";
  manifest["status"] = r.ok() ? "ok" : "failed";
  if (!r.ok()) manifest["error"] = r.error;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  if (!r.ok()) return;

  write_metric_csvs(r.metrics, dir);
  const CellSummary s = summarize(r);
  json summary;
  summary["cell"] = s.name;
  summary["density_vpk"] = s.density_vpk;
  summary["bandwidth_mhz"] = s.bandwidth_mhz;
  summary["variant"] = s.variant;
  summary["transmissions"] = r.metrics.transmissions;
  summary["mean_cbr"] = optional_json(s.cbr);
  summary["mean_interval_ms"] = optional_json(s.mean_interval_ms);
  json bins = json::array();
  for (const auto& b : s.bins) {
    json jb;
    jb["bin_m"] = b.bin_m;
    jb["prr"] = optional_json(b.prr);
    jb["ipg_p999_ms"] = optional_json(b.ipg_p999_ms);
    jb["ia_p999_ms"] = optional_json(b.ia_p999_ms);
    bins.push_back(jb);
  }
  summary["bins"] = bins;
  json losses;
  for (std::size_t c = 1; c < kLossCauses; ++c)
    losses[to_string(static_cast<LossCause>(c))] = r.metrics.loss_causes[c];
  summary["loss_causes"] = losses;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
}

CellSummary summarize(const CellResult& r) {
  const auto& m = r.metrics;
  const auto& sc = r.cell.cfg.engine.scenario;
  CellSummary s;
  s.name = r.cell.name;
  s.density_vpk = sc.density_vpk;
  s.bandwidth_mhz = sc.bandwidth_mhz;
  s.variant = variant_label(r.cell.cfg.engine.sps);
  s.cbr = m.mean_cbr();
  s.mean_interval_ms = m.mean_interval_ms();
  for (std::size_t b = 0; b < m.config.ccdf_bins_m.size(); ++b) {
    const int bin = static_cast<int>(b);
    BinSummary bs;
    bs.bin_m = m.config.ccdf_bins_m[b];
    if (m.ipg_samples(bin) > 0) bs.ipg = m.ipg_curve(bin);
    const auto ia = m.ia_hist(bin);
    if (std::any_of(ia.begin(), ia.end(), [](auto v) { return v > 0; })) bs.ia = ccdf_from_histogram(ia);
    if (auto p = percentile_hist(m.ipg_hist[b])) bs.ipg_p999_ms = p->value;
    if (auto p = percentile_hist(ia)) bs.ia_p999_ms = p->value;
    bs.prr = m.prr_at(bs.bin_m, m.config.bin_half_width_m);
    s.bins.push_back(std::move(bs));
  }
  return s;
}

CellSummary load_cell_summary(const std::filesystem::path& dir) {
  std::ifstream in(dir / "summary.json");
  if (!in) throw std::runtime_error("no summary.json in " + dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error((dir / "summary.json").string() + ": " + e.what());
  }
  CellSummary s;
  s.name = j.at("cell").get<std::string>();
  s.density_vpk = j.at("density_vpk").get<double>();
  s.bandwidth_mhz = j.at("bandwidth_mhz").get<int>();
  s.variant = j.at("variant").get<std::string>();
  s.cbr = json_optional(j, "mean_cbr");
  s.mean_interval_ms = json_optional(j, "mean_interval_ms");
  for (const auto& jb : j.at("bins")) {
    BinSummary b;
    b.bin_m = jb.at("bin_m").get<double>();
    b.prr = json_optional(jb, "prr");
    b.ipg_p999_ms = json_optional(jb, "ipg_p999_ms");
    b.ia_p999_ms = json_optional(jb, "ia_p999_ms");
    const auto label = bin_label(b.bin_m);
    b.ipg = read_ccdf_csv(dir / ("ccdf_ipg_" + label + ".csv"));
    b.ia = read_ccdf_csv(dir / ("ccdf_ia_" + label + ".csv"));
    s.bins.push_back(std::move(b));
  }
  return s;
}

std::vector<Table> build_tables(const std::vector<CellSummary>& cells) {
  std::map<std::pair<double, int>, const CellSummary*> base;
  std::vector<std::string> variants;
  std::vector<double> densities;
  for (const auto& c : cells) {
    if (c.variant == "off")
      base[{c.density_vpk, c.bandwidth_mhz}] = &c;
    else if (std::find(variants.begin(), variants.end(), c.variant) == variants.end())
      variants.push_back(c.variant);
    if (std::find(densities.begin(), densities.end(), c.density_vpk) == densities.end())
      densities.push_back(c.density_vpk);
  }
  for (const auto& c : cells)
    if (c.variant != "off" && !base.count({c.density_vpk, c.bandwidth_mhz}))
      throw ConfigError(fmt::format("missing baseline (oneshot off) for cell '{}'", c.name));
  auto rank = [](const std::string& v) { return v == "515" ? 0 : v == "26" ? 1 : 2; };
  std::stable_sort(variants.begin(), variants.end(),
                   [&](const auto& a, const auto& b) { return rank(a) != rank(b) ? rank(a) < rank(b) : a < b; });
  std::sort(densities.begin(), densities.end());

  struct Column {
    std::string label;
    std::string variant;
    int bw;
  };
  std::vector<Column> columns;
  for (int bw : {20, 10}) {
    for (const auto& v : variants) {
      const bool present = std::any_of(cells.begin(), cells.end(),
                                       [&](const auto& c) { return c.variant == v && c.bandwidth_mhz == bw; });
      if (present) columns.push_back({v + "-" + std::to_string(bw), v, bw});
    }
  }
  for (const auto& c : cells) {
    if (c.bandwidth_mhz == 20 || c.bandwidth_mhz == 10) continue;
    const auto label = c.variant + "-" + std::to_string(c.bandwidth_mhz);
    if (c.variant != "off" && std::none_of(columns.begin(), columns.end(), [&](const auto& x) { return x.label == label; }))
      columns.push_back({label, c.variant, c.bandwidth_mhz});
  }

  using Metric = std::function<std::optional<double>(const BinSummary&, const BinSummary&)>;
  auto ratio_drop = [](const std::optional<double>& b, const std::optional<double>& v) -> std::optional<double> {
    if (!b || !v || *b == 0.0) return std::nullopt;
    return (*b - *v) / *b;
  };
  auto ccdf_gain = [](const std::optional<CcdfCurve>& b, const std::optional<CcdfCurve>& v) -> std::optional<double> {
    if (!b || !v) return std::nullopt;
    try {
      return relative_improvement(*b, *v).value;
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  };
  const std::vector<std::pair<std::string, Metric>> metrics = {
      {"ipg_ccdf_improvement", [&](const BinSummary& b, const BinSummary& v) { return ccdf_gain(b.ipg, v.ipg); }},
      {"ipg_p999_improvement", [&](const BinSummary& b, const BinSummary& v) { return ratio_drop(b.ipg_p999_ms, v.ipg_p999_ms); }},
      {"ia_ccdf_improvement", [&](const BinSummary& b, const BinSummary& v) { return ccdf_gain(b.ia, v.ia); }},
      {"ia_p999_improvement", [&](const BinSummary& b, const BinSummary& v) { return ratio_drop(b.ia_p999_ms, v.ia_p999_ms); }},
      {"prr_change",
       [](const BinSummary& b, const BinSummary& v) -> std::optional<double> {
         if (!b.prr || !v.prr || *b.prr == 0.0) return std::nullopt;
         return (*v.prr - *b.prr) / *b.prr;
       }},
  };

  std::vector<Table> tables;
  for (const auto& [name, metric] : metrics) {
    Table t;
    t.name = name;
    for (const auto& c : columns) t.columns.push_back(c.label);
    for (double d : densities) {
      const CellSummary* any_base = nullptr;
      for (const auto& [key, ptr] : base)
        if (key.first == d) any_base = ptr;
      if (!any_base) continue;
      for (std::size_t b = 0; b < any_base->bins.size(); ++b) {
        Table::Row row{d, any_base->bins[b].bin_m, {}};
        for (const auto& col : columns) {
          std::optional<double> value;
          const auto bit = base.find({d, col.bw});
          const auto vit = std::find_if(cells.begin(), cells.end(), [&](const auto& c) {
            return c.density_vpk == d && c.bandwidth_mhz == col.bw && c.variant == col.variant;
          });
          if (bit != base.end() && vit != cells.end() && b < bit->second->bins.size() && b < vit->bins.size())
            value = metric(bit->second->bins[b], vit->bins[b]);
          row.values.push_back(value);
        }
        t.rows.push_back(std::move(row));
      }
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

std::vector<std::filesystem::path> write_tables(const std::vector<Table>& tables,
                                                const std::vector<CellSummary>& cells,
                                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& t : tables) {
    std::string text = "density_vpk,distance_m";
    for (const auto& c : t.columns) text += "," + c;
    text += '\n';
    for (const auto& r : t.rows) {
      text += format_double(r.density_vpk) + "," + format_double(r.bin_m);
      for (const auto& v : r.values) text += "," + (v ? format_double(*v) : std::string());
      text += '\n';
    }
    const auto path = dir / (t.name + ".csv");
    write_text(path, text);
    written.push_back(path);
  }
  std::vector<const CellSummary*> sorted;
  for (const auto& c : cells) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->name < b->name; });
  std::string text = "cell,density_vpk,bandwidth_mhz,variant,cbr,mean_interval_ms\n";
  for (const auto* c : sorted)
    text += fmt::format("{},{},{},{},{},{}\n", c->name, format_double(c->density_vpk), c->bandwidth_mhz, c->variant,
                        c->cbr ? format_double(*c->cbr) : "", c->mean_interval_ms ? format_double(*c->mean_interval_ms) : "");
  write_text(dir / "cbr.csv", text);
  written.push_back(dir / "cbr.csv");
  return written;
}

std::string render_table(const Table& t) {
  std::string out = t.name + "\n" + fmt::format("{:>8} {:>6}", "density", "bin");
  for (const auto& c : t.columns) out += fmt::format(" {:>9}", c);
  out += '\n';
  for (const auto& r : t.rows) {
    out += fmt::format("{:>8} {:>6}", format_double(r.density_vpk), format_double(r.bin_m));
    for (const auto& v : r.values) out += v ? fmt::format(" {:>9.5f}", *v) : fmt::format(" {:>9}", "-");
    out += '\n';
  }
  return out;
}

}  // namespace cv2x
