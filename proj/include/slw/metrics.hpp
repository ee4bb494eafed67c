#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace slw {

/// Ratio of each step's training loss to the lowest loss seen before it.
class LossRatioTracker {
 public:
  struct Entry {
    double loss;
    double ratio;
  };

  /// Returns loss / min(previous losses), 1.0 on the first call. A non-finite
  /// loss throws DivergenceError and leaves the tracker unchanged.
  double update(double loss);

  double running_min() const { return running_min_; }
  const std::vector<Entry>& history() const { return history_; }

 private:
  double running_min_ = std::numeric_limits<double>::infinity();
  std::vector<Entry> history_;
};

/// Loss ratios recomputed from scratch over a loss trace.
std::vector<double> loss_ratios(std::span<const double> losses);

struct InstabilitySummary {
  std::int64_t count_above = 0;
  double fraction = 0;
  double max_ratio = 0;
};

/// Ratios strictly above `threshold`. Throws ContractError on an empty trace.
InstabilitySummary instability_summary(std::span<const double> ratios, double threshold);

struct Correlation {
  double r = 0;
  double p_value = 1;
};

/// Sample Pearson r with a two-sided Student-t p-value (n - 2 degrees of freedom).
Correlation pearson(std::span<const double> x, std::span<const double> y);

double perplexity(double mean_nll);

/// x / max(x). Throws ContractError when the maximum is not positive.
std::vector<double> normalize_series(std::span<const double> x);

/// One row of the per-step run log.
struct MetricRecord {
  std::int64_t step = 0;
  std::int64_t tokens_consumed = 0;
  std::int64_t seqlen = 0;
  std::int64_t batch_size = 0;
  double lr = 0;
  double train_loss = 0;
  double loss_ratio = 1;
  double grad_norm_preclip = 0;
  bool clipped = false;
  double var_l1 = 0;
  double var_max = 0;
  double mom_l1 = 0;
  std::optional<double> val_ppl;

  bool operator==(const MetricRecord&) const = default;
};

/// Column names of metrics.csv, in order.
const std::vector<std::string>& metric_columns();

/// Doubles printed with 17 significant digits, which round-trips exactly.
std::string format_double(double v);

/// Append-only CSV writer for MetricRecords; writes the header on open.
class MetricsCsvWriter {
 public:
  explicit MetricsCsvWriter(const std::filesystem::path& path);
  void append(const MetricRecord& r);

 private:
  std::ofstream out_;
};

std::string to_csv_row(const MetricRecord& r);

/// Parses a metrics.csv produced by MetricsCsvWriter. FormatError names the file and line.
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace slw
