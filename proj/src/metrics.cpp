#include "slw/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "slw/errors.hpp"

namespace slw {

double LossRatioTracker::update(double loss) {
  if (!std::isfinite(loss)) {
    throw DivergenceError("non-finite training loss at tracker step " + std::to_string(history_.size()),
                          static_cast<long long>(history_.size()));
  }
  const double ratio = history_.empty() ? 1.0 : loss / running_min_;
  history_.push_back({loss, ratio});
  running_min_ = std::min(running_min_, loss);
  return ratio;
}

std::vector<double> loss_ratios(std::span<const double> losses) {
  std::vector<double> out;
  out.reserve(losses.size());
  for (std::size_t t = 0; t < losses.size(); ++t) {
    if (t == 0) {
      out.push_back(1.0);
      continue;
    }
    double lowest = losses[0];
    for (std::size_t s = 1; s < t; ++s) lowest = std::min(lowest, losses[s]);
    out.push_back(losses[t] / lowest);
  }
  return out;
}

InstabilitySummary instability_summary(std::span<const double> ratios, double threshold) {
  if (ratios.empty()) throw ContractError("instability_summary: empty ratio trace");
  if (!(threshold > 1)) throw ContractError("instability_summary: threshold must be > 1");
  InstabilitySummary s;
  s.max_ratio = ratios[0];
  for (double r : ratios) {
    if (r > threshold) ++s.count_above;
    s.max_ratio = std::max(s.max_ratio, r);
  }
  s.fraction = static_cast<double>(s.count_above) / static_cast<double>(ratios.size());
  return s;
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("pearson: series lengths differ");
  const std::size_t n = x.size();
  if (n < 3) throw ContractError("pearson: need at least 3 points");
  double mx = 0;
  double my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0;
  double sxx = 0;
  double syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw ContractError("pearson: correlation undefined for a zero-variance series");
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(n - 2);
  if (std::abs(c.r) >= 1.0) {
    c.p_value = 0.0;
  } else {
    const double t = c.r * std::sqrt(dof / (1.0 - c.r * c.r));
    boost::math::students_t dist(dof);
    c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

double perplexity(double mean_nll) { return std::exp(mean_nll); }

std::vector<double> normalize_series(std::span<const double> x) {
  if (x.empty()) throw ContractError("normalize_series: empty series");
  const double mx = *std::max_element(x.begin(), x.end());
  if (!(mx > 0)) throw ContractError("normalize_series: series maximum must be positive");
  std::vector<double> out;
  out.reserve(x.size());
  for (double v : x) out.push_back(v == mx ? 1.0 : v / mx);
  return out;
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {"step",       "tokens_consumed", "seqlen_t", "batch_size",
                                                "lr",         "train_loss",      "loss_ratio",
                                                "grad_norm_preclip", "clipped",  "var_l1",   "var_max",
                                                "mom_l1",     "val_ppl"};
  return cols;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv_row(const MetricRecord& r) {
  std::string s;
  s += std::to_string(r.step) + ',' + std::to_string(r.tokens_consumed) + ',' + std::to_string(r.seqlen) + ',' +
       std::to_string(r.batch_size) + ',';
  s += format_double(r.lr) + ',' + format_double(r.train_loss) + ',' + format_double(r.loss_ratio) + ',' +
       format_double(r.grad_norm_preclip) + ',' + (r.clipped ? "1" : "0") + ',';
  s += format_double(r.var_l1) + ',' + format_double(r.var_max) + ',' + format_double(r.mom_l1) + ',';
  if (r.val_ppl) s += format_double(*r.val_ppl);
  return s;
}

MetricsCsvWriter::MetricsCsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
  const auto& cols = metric_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
  out_ << '\n';
  out_.flush();
}

void MetricsCsvWriter::append(const MetricRecord& r) {
  out_ << to_csv_row(r) << '\n';
  out_.flush();
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& field, const std::string& where) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) throw FormatError(where + ": cannot parse '" + field + "'");
  return value;
}

}  // namespace

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw FormatError(path.string() + ":1: missing header");
  const auto header = split(line);
  if (header != metric_columns()) throw FormatError(path.string() + ":1: header does not match the metrics schema");
  std::vector<MetricRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(f.size()));
    }
    MetricRecord r;
    r.step = parse_number<std::int64_t>(f[0], where);
    r.tokens_consumed = parse_number<std::int64_t>(f[1], where);
    r.seqlen = parse_number<std::int64_t>(f[2], where);
    r.batch_size = parse_number<std::int64_t>(f[3], where);
    r.lr = parse_number<double>(f[4], where);
    r.train_loss = parse_number<double>(f[5], where);
    r.loss_ratio = parse_number<double>(f[6], where);
    r.grad_norm_preclip = parse_number<double>(f[7], where);
    const auto clipped = parse_number<int>(f[8], where);
    if (clipped != 0 && clipped != 1) throw FormatError(where + ": clipped must be 0 or 1");
    r.clipped = clipped == 1;
    r.var_l1 = parse_number<double>(f[9], where);
    r.var_max = parse_number<double>(f[10], where);
    r.mom_l1 = parse_number<double>(f[11], where);
    if (!f[12].empty()) r.val_ppl = parse_number<double>(f[12], where);
    out.push_back(r);
  }
  return out;
}

}  // namespace slw
