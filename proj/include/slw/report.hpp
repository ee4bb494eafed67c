#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "slw/metrics.hpp"

namespace slw {

struct RunLog {
  std::string label;   // unique per report, derived from the directory name
  std::string method;  // from manifest.json
  std::vector<MetricRecord> records;
};

/// Reads metrics.csv and manifest.json from a run directory.
RunLog load_run_dir(const std::filesystem::path& dir);

/// Writes into out_dir:
///   instability.csv        run, method, threshold, steps, count_above, fraction, max_ratio
///   pearson.csv            run, method, x, y, n, r, p_value
///   normalized_<run>.csv   step, tokens_consumed, loss_ratio, var_l1, var_max (each divided by its max)
///   val_ppl.csv            run, method, step, tokens_consumed, val_ppl
/// Returns the labels used, in input order.
std::vector<std::string> report_data(std::span<const std::filesystem::path> run_dirs,
                                     const std::filesystem::path& out_dir);

}  // namespace slw
