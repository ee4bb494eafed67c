#include "slw/report.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "slw/errors.hpp"

namespace slw {

namespace {

std::vector<double> column(const std::vector<MetricRecord>& records, double MetricRecord::*field) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.*field);
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

RunLog load_run_dir(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw FormatError(manifest_path.string() + ": missing run manifest");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  RunLog log;
  log.method = manifest.value("method", std::string("unknown"));
  log.records = read_metrics_csv(dir / "metrics.csv");
  auto name = std::filesystem::absolute(dir).lexically_normal();
  if (name.filename().empty()) name = name.parent_path();
  log.label = name.filename().string();
  return log;
}

std::vector<std::string> report_data(std::span<const std::filesystem::path> run_dirs,
                                     const std::filesystem::path& out_dir) {
  if (run_dirs.empty()) throw ContractError("report_data needs at least one run directory");
  std::vector<RunLog> runs;
  std::set<std::string> used;
  for (const auto& dir : run_dirs) {
    RunLog log = load_run_dir(dir);
    std::string label = log.label;
    for (int k = 2; used.count(label) != 0; ++k) label = log.label + "_" + std::to_string(k);
    used.insert(label);
    log.label = label;
    runs.push_back(std::move(log));
  }
  std::filesystem::create_directories(out_dir);

  auto inst = open_out(out_dir / "instability.csv");
  inst << "run,method,threshold,steps,count_above,fraction,max_ratio\n";
  auto corr = open_out(out_dir / "pearson.csv");
  corr << "run,method,x,y,n,r,p_value\n";
  auto ppl = open_out(out_dir / "val_ppl.csv");
  ppl << "run,method,step,tokens_consumed,val_ppl\n";

  std::vector<std::string> labels;
  for (const auto& run : runs) {
    labels.push_back(run.label);
    const auto ratios = column(run.records, &MetricRecord::loss_ratio);
    const auto var_l1 = column(run.records, &MetricRecord::var_l1);
    const auto var_max = column(run.records, &MetricRecord::var_max);
    for (double threshold : {1.2, 1.5}) {
      inst << run.label << ',' << run.method << ',' << format_double(threshold) << ',' << run.records.size() << ',';
      if (ratios.empty()) {
        inst << "0,,\n";
        continue;
      }
      const auto s = instability_summary(ratios, threshold);
      inst << s.count_above << ',' << format_double(s.fraction) << ',' << format_double(s.max_ratio) << '\n';
    }
    for (const auto& [name, y] : {std::pair{"var_l1", &var_l1}, std::pair{"var_max", &var_max}}) {
      corr << run.label << ',' << run.method << ",loss_ratio," << name << ',' << ratios.size() << ',';
      try {
        const auto c = pearson(ratios, *y);
        corr << format_double(c.r) << ',' << format_double(c.p_value) << '\n';
      } catch (const ContractError&) {
        corr << ",\n";  // undefined: too few points or a constant series
      }
    }

    auto norm = open_out(out_dir / ("normalized_" + run.label + ".csv"));
    norm << "step,tokens_consumed,loss_ratio,var_l1,var_max\n";
    if (!run.records.empty()) {
      const auto nr = normalize_series(ratios);
      const auto n1 = normalize_series(var_l1);
      const auto nm = normalize_series(var_max);
      for (std::size_t i = 0; i < run.records.size(); ++i) {
        norm << run.records[i].step << ',' << run.records[i].tokens_consumed << ',' << format_double(nr[i]) << ','
             << format_double(n1[i]) << ',' << format_double(nm[i]) << '\n';
      }
    }

    for (const auto& r : run.records) {
      if (!r.val_ppl) continue;
      ppl << run.label << ',' << run.method << ',' << r.step << ',' << r.tokens_consumed << ','
          << format_double(*r.val_ppl) << '\n';
    }
  }
  return labels;
}

}  // namespace slw
