// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cv2x/config.hpp"
#include "cv2x/metrics.hpp"

namespace cv2x {

struct Cell {
  std::string name;  // unique within a campaign; also the output sub-directory
  RunConfig cfg;
};

/// "d<density>-bw<MHz>-<variant>".
std::string cell_name(const RunConfig& cfg);

/// Densities {125, 400, 800} x {20, 10} MHz x {off, [5,15], [2,6]} on top of `base`.
std::vector<Cell> paper_table_cells(const RunConfig& base);

struct CellResult {
  Cell cell;
  MetricStore metrics;
  std::vector<std::uint64_t> seeds;
  std::string error;  // empty on success
  bool ok() const { return error.empty(); }
};

using ProgressFn = std::function<void(const std::string&)>;

/**
 * Runs every (cell, seed) pair, seeds master_seed + 0 .. seeds - 1, on up to
 * `workers` threads (0: OpenMP default) and merges each cell's seeds in seed
 * order. Relative trace paths are placed under `out / cell` with a seed suffix.
 */
std::vector<CellResult> run_cells(const std::vector<Cell>& cells, const std::filesystem::path& out, int workers = 0,
                                  const ProgressFn& progress = {});

/// Metric CSVs, config.ini, manifest.json and summary.json for one cell.
void write_cell_outputs(const CellResult& r, const std::filesystem::path& dir);

struct BinSummary {
  double bin_m = 0.0;
  std::optional<CcdfCurve> ipg;
  std::optional<CcdfCurve> ia;
  std::optional<double> ipg_p999_ms;
  std::optional<double> ia_p999_ms;
  std::optional<double> prr;
};

/// What the tables need from one cell.
struct CellSummary {
  std::string name;
  double density_vpk = 0.0;
  int bandwidth_mhz = 0;
  std::string variant;
  std::vector<BinSummary> bins;
  std::optional<double> cbr;
  std::optional<double> mean_interval_ms;
};

CellSummary summarize(const CellResult& r);
/// Reads a directory written by write_cell_outputs.
CellSummary load_cell_summary(const std::filesystem::path& dir);

/// One table: rows (density, bin) x columns "<variant>-<MHz>".
struct Table {
  std::string name;
  std::vector<std::string> columns;
  struct Row {
    double density_vpk;
    double bin_m;
    std::vector<std::optional<double>> values;
  };
  std::vector<Row> rows;
};

/**
 * Relative IPG/IA CCDF improvement over [3 s, 10 s], 99.9th-percentile
 * improvement (base - variant) / base, and PRR change (variant - base) / base,
 * each against the "off" cell of the same density and bandwidth. Throws
 * ConfigError when a variant has no baseline.
 */
std::vector<Table> build_tables(const std::vector<CellSummary>& cells);

/// One CSV per table plus cbr.csv; returns the paths written.
std::vector<std::filesystem::path> write_tables(const std::vector<Table>& tables,
                                                const std::vector<CellSummary>& cells,
                                                const std::filesystem::path& dir);

/// Fixed-width text rendering for terminals.
std::string render_table(const Table& t);

}  // namespace cv2x
