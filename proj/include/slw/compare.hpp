#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slw/config.hpp"

namespace slw {

/// A grid of runs: every cell (a config patch) x every sweep value x every seed.
///
///   {"base": {...config...},
///    "cells": [{"label": "baseline", "set": {"method": "baseline"}}, ...],
///    "sweep": {"key": "lr_schedule.peak", "values": [6e-4, 1.2e-3]},   (optional)
///    "seeds": [0, 1, 2],
///    "threshold": 1.2}
///
/// The first cell is the reference the others are compared against.
struct CompareGrid {
  struct Cell {
    std::string label;
    json set = json::object();
  };
  json base = json::object();
  std::vector<Cell> cells;
  std::string sweep_key;
  std::vector<json> sweep_values;
  std::vector<std::uint64_t> seeds;
  double threshold = 1.2;
};

CompareGrid parse_grid(const json& doc);

struct CompareRow {
  std::string cell;
  std::string sweep_value;  // "" without a sweep
  std::uint64_t seed = 0;
  RunSummary summary;
  InstabilitySummary at_threshold;
  std::vector<std::pair<std::int64_t, double>> val_curve;  // (tokens_consumed, val_ppl) at each evaluation
};

struct CellAggregate {
  std::string cell;
  std::string sweep_value;
  std::int64_t runs = 0;
  std::int64_t diverged = 0;
  std::int64_t runs_with_spike = 0;  // runs with >= 1 ratio above the threshold
  double median_count_above = 0;
  double median_final_val_ppl = 0;  // over runs that finished with a validation value
};

struct PairFlag {
  std::string sweep_value;
  std::string cell;
  std::string reference;
  double cell_median = 0;
  double reference_median = 0;
  std::string fewer_spikes;  // label of the cell with the lower median count, or "tie"
  /// Earliest-better point: tokens at the first evaluation where a run of the cell
  /// matches the reference's median final validation perplexity; median over the
  /// runs that get there.
  std::int64_t runs_reaching = 0;
  std::optional<double> earliest_better_tokens;
};

struct CompareReport {
  double threshold = 1.2;
  std::vector<CompareRow> rows;
  std::vector<CellAggregate> aggregates;
  std::vector<PairFlag> flags;
};

double median(std::vector<double> values);

/// Resolved configs in row order (cell-major, then sweep value, then seed).
std::vector<std::pair<CompareRow, ExperimentConfig>> expand_grid(const CompareGrid& grid);

/// Tabulates the aggregates and reference comparisons from finished rows.
void summarize(CompareReport& report, const CompareGrid& grid);

/// Runs every cell; cell runs go to out_dir/runs/<cell>[_<sweep>]_seed<k>/ when out_dir is set.
CompareReport compare(const CompareGrid& grid, const std::filesystem::path& out_dir,
                      std::int64_t progress_every = 0);

/// compare.csv (one row per run) and compare.json (rows, aggregates, flags).
void write_compare_outputs(const CompareReport& report, const std::filesystem::path& out_dir);

}  // namespace slw
