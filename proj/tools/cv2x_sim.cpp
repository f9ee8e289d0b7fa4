// SPDX-License-Identifier: GPL-2.0-only
// Command-line front end: simulate, analyze, compare, report.
#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "cv2x/analytic.hpp"
#include "cv2x/campaign.hpp"

namespace {

using namespace cv2x;

struct CommonOpts {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::string> presets;
  int seeds = 0;
};

void add_common(CLI::App* app, CommonOpts& o) {
  app->add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", o.sets, "Override one key: section.key=value")->allow_extra_args(false);
  app->add_option("--preset", o.presets, "desk or paper-tables (repeatable)")->allow_extra_args(false);
  app->add_option("--seeds", o.seeds, "Seeds per cell")->check(CLI::PositiveNumber);
}

/// Defaults, then presets, then the config file, then --set, then --seeds.
RunConfig resolve(const CommonOpts& o, bool* table_matrix) {
  RunConfig cfg;
  if (table_matrix) *table_matrix = false;
  for (const auto& p : o.presets) {
    if (p == "paper-tables") {
      if (!table_matrix) throw ConfigError("preset 'paper-tables' applies to simulate only");
      *table_matrix = true;
    } else {
      apply_preset(cfg, p);
    }
  }
  if (!o.config.empty()) apply_ini_file(cfg, o.config);
  for (const auto& s : o.sets) apply_override(cfg, s);
  if (o.seeds > 0) cfg.seeds = o.seeds;
  return cfg;
}

void progress(const std::string& line) {
  std::cerr << line << '\n';
  std::cerr.flush();
}

int cmd_simulate(const CommonOpts& o, const std::string& out, int workers) {
  bool matrix = false;
  const RunConfig base = resolve(o, &matrix);
  std::vector<Cell> cells = matrix ? paper_table_cells(base) : std::vector<Cell>{{cell_name(base), base}};
  progress(fmt::format("{} cell(s), {} seed(s) each, output {}", cells.size(), base.seeds, out));
  const auto results = run_cells(cells, out, workers, progress);

  std::vector<CellSummary> summaries;
  int failed = 0;
  for (const auto& r : results) {
    write_cell_outputs(r, std::filesystem::path(out) / r.cell.name);
    if (r.ok())
      summaries.push_back(summarize(r));
    else
      ++failed;
  }
  const bool has_variants = std::any_of(summaries.begin(), summaries.end(), [](auto& s) { return s.variant != "off"; });
  if (has_variants) {
    try {
      const auto tables = build_tables(summaries);
      write_tables(tables, summaries, std::filesystem::path(out) / "tables");
    } catch (const ConfigError& e) {
      progress(fmt::format("tables skipped: {}", e.what()));
    }
  }
  if (failed > 0) {
    progress(fmt::format("{} of {} cell(s) failed:", failed, results.size()));
    for (const auto& r : results)
      if (!r.ok()) progress(fmt::format("  {}: {}", r.cell.name, r.error));
    return 1;
  }
  return 0;
}

TailModelParams model_params(const RunConfig& cfg, double p_f, double interval_ms, int k_max) {
  return TailModelParams::from(cfg.engine.sps, p_f, interval_ms, k_max);
}

void write_tail_csv(const std::filesystem::path& path, const TailCurve& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ipg_ms,ccdf\n";
  const auto last = static_cast<long long>(std::floor(c.interval_ms * static_cast<double>(c.p.size() - 1)));
  for (long long t = 0; t <= last; ++t) out << t << ',' << format_double(c.at_ms(static_cast<double>(t))) << '\n';
}

int cmd_analyze(const CommonOpts& o, double p_f, double interval_ms, int k_max, const std::string& out, bool verbose) {
  const RunConfig cfg = resolve(o, nullptr);
  const auto m = model_params(cfg, p_f, interval_ms, k_max);
  const auto plain = tail_no_slippage(m);
  const auto slip = tail_with_slippage(m);
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  write_tail_csv(dir / "analytic_no_slippage.csv", plain);
  write_tail_csv(dir / "analytic_slippage.csv", slip);
  const double psi = slippage_psi(interval_ms, m.pdb_ms);
  if (verbose) {
    progress(fmt::format("psi = {} ms, gamma = {}", psi, slippage_gamma(m.t1_ms, m.pdb_ms)));
    progress(fmt::format("slippage branches: k <= {} | k <= {} | beyond", psi - m.t1_ms, psi + m.t1_ms));
    if (slip.clamped) progress("cumulative slippage probability reached 1");
  }
  progress(fmt::format("wrote {} and {}", (dir / "analytic_no_slippage.csv").string(),
                       (dir / "analytic_slippage.csv").string()));
  return 0;
}

/// P_f and interval defaults from a simulated cell directory.
void defaults_from_cell(const std::filesystem::path& ccdf, std::optional<double>& p_f, std::optional<double>& interval) {
  const auto summary = ccdf.parent_path() / "summary.json";
  if ((p_f && interval) || !std::filesystem::exists(summary)) return;
  std::ifstream in(summary);
  const auto j = nlohmann::json::parse(in);
  if (!interval && j.contains("mean_interval_ms") && !j["mean_interval_ms"].is_null())
    interval = j["mean_interval_ms"].get<double>();
  if (!p_f) {
    const auto stem = ccdf.stem().string();
    const auto us = stem.rfind('_');
    const std::string label = us == std::string::npos ? "" : stem.substr(us + 1);
    for (const auto& b : j.at("bins"))
      if (bin_label(b.at("bin_m").get<double>()) == label && !b.at("prr").is_null()) p_f = b["prr"].get<double>();
  }
}

int cmd_compare(const CommonOpts& o, const std::string& ccdf_path, std::optional<double> p_f,
                std::optional<double> interval, const std::string& model_kind, double lo, double hi, double anchor,
                int k_max) {
  const RunConfig cfg = resolve(o, nullptr);
  defaults_from_cell(ccdf_path, p_f, interval);
  if (!p_f) throw ConfigError("--pf not given and no matching summary.json next to the CCDF");
  if (!interval) throw ConfigError("--interval not given and no summary.json next to the CCDF");
  const auto sim = read_ccdf_csv(ccdf_path);
  if (!sim) throw std::runtime_error(ccdf_path + ": empty CCDF");
  const auto m = model_params(cfg, *p_f, *interval, k_max);
  bool slippage = model_kind == "slippage";
  if (model_kind == "auto") slippage = slippage_psi(*interval, m.pdb_ms) != 0.0;
  const auto model = slippage ? tail_with_slippage(m) : tail_no_slippage(m);
  const auto r = compare_slopes(*sim, model, lo, hi, anchor);
  std::cout << "model,p_f,interval_ms,points,sim_slope_per_s,model_slope_per_s,slope_ratio,rms_log_gap\n"
            << (slippage ? "slippage" : "no_slippage") << ',' << format_double(*p_f) << ','
            << format_double(*interval) << ',' << r.points << ',' << format_double(r.sim_slope) << ','
            << format_double(r.model_slope) << ',' << format_double(r.ratio) << ',' << format_double(r.rms_gap)
            << '\n';
  return 0;
}

int cmd_report(const std::string& dir) {
  std::vector<CellSummary> cells;
  std::vector<std::filesystem::path> subdirs;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory() && std::filesystem::exists(e.path() / "summary.json")) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& d : subdirs) cells.push_back(load_cell_summary(d));
  if (cells.empty()) throw std::runtime_error("no cell outputs under " + dir);
  const auto tables = build_tables(cells);
  write_tables(tables, cells, std::filesystem::path(dir) / "tables");
  for (const auto& t : tables) std::cout << render_table(t) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"C-V2X mode-4 sidelink SPS simulator and IPG tail model"};
  app.set_version_flag("--version", std::string(cv2x::version_string()));
  app.require_subcommand(1);

  CommonOpts sim_o;
  std::string sim_out;
  int workers = 0;
  auto* sim = app.add_subcommand("simulate", "Run one cell or a preset matrix");
  add_common(sim, sim_o);
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--workers", workers, "Parallel runs (0: OpenMP default)")->check(CLI::NonNegativeNumber);

  CommonOpts an_o;
  double an_pf = 0.9;
  double an_interval = 100.0;
  int an_kmax = 200;
  std::string an_out;
  bool an_verbose = false;
  auto* an = app.add_subcommand("analyze", "Analytical IPG tail curves");
  add_common(an, an_o);
  an->add_option("--pf", an_pf, "Success probability of a fresh selection")->check(CLI::Range(0.0, 1.0));
  an->add_option("--interval", an_interval, "BSM generation interval, ms")->check(CLI::PositiveNumber);
  an->add_option("--kmax", an_kmax, "Last opportunity index")->check(CLI::PositiveNumber);
  an->add_option("--out", an_out, "Output directory")->required();
  an->add_flag("-v,--verbose", an_verbose, "Print slippage branch boundaries");

  CommonOpts cmp_o;
  std::string cmp_ccdf;
  std::optional<double> cmp_pf;
  std::optional<double> cmp_interval;
  std::string cmp_model = "auto";
  double cmp_lo = 3000.0;
  double cmp_hi = 10000.0;
  double cmp_anchor = 3000.0;
  int cmp_kmax = 200;
  auto* cmp = app.add_subcommand("compare", "Slope of a simulated IPG CCDF against the model");
  add_common(cmp, cmp_o);
  cmp->add_option("--ccdf", cmp_ccdf, "Simulated ccdf_ipg_<bin>.csv")->required()->check(CLI::ExistingFile);
  cmp->add_option("--pf", cmp_pf, "P_f; default: PRR of the bin from summary.json");
  cmp->add_option("--interval", cmp_interval, "Interval, ms; default: mean interval from summary.json");
  cmp->add_option("--model", cmp_model, "auto, slippage or no-slippage")
      ->check(CLI::IsMember({"auto", "slippage", "no-slippage"}));
  cmp->add_option("--lo", cmp_lo, "Fit window start, ms");
  cmp->add_option("--hi", cmp_hi, "Fit window end, ms");
  cmp->add_option("--anchor", cmp_anchor, "Anchor abscissa, ms");
  cmp->add_option("--kmax", cmp_kmax, "Last opportunity index")->check(CLI::PositiveNumber);

  std::string rep_dir;
  auto* rep = app.add_subcommand("report", "Tables from a simulate output directory");
  rep->add_option("--out", rep_dir, "Directory written by simulate")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(sim_o, sim_out, workers);
    if (*an) return cmd_analyze(an_o, an_pf, an_interval, an_kmax, an_out, an_verbose);
    if (*cmp) return cmd_compare(cmp_o, cmp_ccdf, cmp_pf, cmp_interval, cmp_model, cmp_lo, cmp_hi, cmp_anchor, cmp_kmax);
    if (*rep) return cmd_report(rep_dir);
  } catch (const cv2x::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const cv2x::InvalidConfig& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
