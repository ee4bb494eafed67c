#include "slw/compare.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include "slw/errors.hpp"

namespace slw {

CompareGrid parse_grid(const json& doc) {
  std::vector<std::string> problems;
  CompareGrid g;
  if (!doc.is_object()) throw ConfigError("grid must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "base" && it.key() != "cells" && it.key() != "sweep" && it.key() != "seeds" &&
        it.key() != "threshold") {
      problems.push_back("grid: unknown key '" + it.key() + "'");
    }
  }
  if (doc.contains("base")) g.base = doc.at("base");
  if (!g.base.is_object()) problems.push_back("grid.base must be an object");
  if (!doc.contains("cells") || !doc.at("cells").is_array()) {
    problems.push_back("grid.cells must be an array");
  } else {
    for (const auto& c : doc.at("cells")) {
      if (!c.is_object() || !c.contains("label") || !c.at("label").is_string()) {
        problems.push_back("grid.cells entries need a string label");
        continue;
      }
      CompareGrid::Cell cell{c.at("label").get<std::string>(), c.value("set", json::object())};
      if (!cell.set.is_object()) problems.push_back("grid.cells[" + cell.label + "].set must be an object");
      g.cells.push_back(std::move(cell));
    }
  }
  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    if (!s.is_object() || !s.contains("key") || !s.at("key").is_string() || !s.contains("values") ||
        !s.at("values").is_array() || s.at("values").empty()) {
      problems.push_back("grid.sweep needs a string key and a non-empty values array");
    } else {
      g.sweep_key = s.at("key").get<std::string>();
      for (const auto& v : s.at("values")) g.sweep_values.push_back(v);
    }
  }
  if (doc.contains("seeds") && doc.at("seeds").is_array()) {
    for (const auto& s : doc.at("seeds")) {
      if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
        problems.push_back("grid.seeds must be non-negative integers");
        break;
      }
      g.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  if (g.seeds.empty()) problems.push_back("grid.seeds must be a non-empty array");
  if (doc.contains("threshold")) {
    if (!doc.at("threshold").is_number() || !(doc.at("threshold").get<double>() > 1)) {
      problems.push_back("grid.threshold must be a number > 1");
    } else {
      g.threshold = doc.at("threshold").get<double>();
    }
  }
  if (g.cells.size() * std::max<std::size_t>(g.sweep_values.size(), 1) < 2) {
    problems.push_back("grid must describe at least 2 configurations");
  }
  if (!problems.empty()) throw ConfigError(problems);
  return g;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::string sweep_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string run_dir_name(const CompareRow& row) {
  std::string name = row.cell;
  if (!row.sweep_value.empty()) name += "_" + row.sweep_value;
  name += "_seed" + std::to_string(row.seed);
  for (auto& ch : name) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-' && ch != '.') ch = '_';
  }
  return name;
}

}  // namespace

std::vector<std::pair<CompareRow, ExperimentConfig>> expand_grid(const CompareGrid& grid) {
  std::vector<std::pair<CompareRow, ExperimentConfig>> out;
  std::vector<json> sweep = grid.sweep_values;
  if (sweep.empty()) sweep.push_back(nullptr);
  for (const auto& cell : grid.cells) {
    json doc = grid.base;
    doc.merge_patch(cell.set);
    for (const auto& value : sweep) {
      for (auto seed : grid.seeds) {
        std::vector<std::string> overrides;
        if (!value.is_null()) overrides.push_back(grid.sweep_key + "=" + value.dump());
        overrides.push_back("seed=" + std::to_string(seed));
        ResolvedConfig rc = resolve_config(doc, overrides);
        CompareRow row;
        row.cell = cell.label;
        row.sweep_value = value.is_null() ? "" : sweep_text(value);
        row.seed = seed;
        out.emplace_back(std::move(row), std::move(rc.config));
      }
    }
  }
  return out;
}

void summarize(CompareReport& report, const CompareGrid& grid) {
  report.aggregates.clear();
  report.flags.clear();
  std::vector<std::string> sweep_order;
  for (const auto& r : report.rows) {
    if (std::find(sweep_order.begin(), sweep_order.end(), r.sweep_value) == sweep_order.end()) {
      sweep_order.push_back(r.sweep_value);
    }
  }
  for (const auto& cell : grid.cells) {
    for (const auto& sv : sweep_order) {
      CellAggregate a;
      a.cell = cell.label;
      a.sweep_value = sv;
      std::vector<double> counts;
      std::vector<double> ppls;
      for (const auto& r : report.rows) {
        if (r.cell != cell.label || r.sweep_value != sv) continue;
        ++a.runs;
        if (r.summary.diverged) ++a.diverged;
        if (r.at_threshold.count_above > 0) ++a.runs_with_spike;
        counts.push_back(static_cast<double>(r.at_threshold.count_above));
        if (r.summary.final_val_ppl && !r.summary.diverged) ppls.push_back(*r.summary.final_val_ppl);
      }
      if (a.runs == 0) continue;
      a.median_count_above = median(counts);
      a.median_final_val_ppl = median(ppls);
      report.aggregates.push_back(a);
    }
  }
  if (grid.cells.empty()) return;
  const std::string& ref = grid.cells.front().label;
  for (const auto& sv : sweep_order) {
    const CellAggregate* ra = nullptr;
    for (const auto& a : report.aggregates) {
      if (a.cell == ref && a.sweep_value == sv) ra = &a;
    }
    if (!ra) continue;
    for (const auto& a : report.aggregates) {
      if (a.cell == ref || a.sweep_value != sv) continue;
      PairFlag f;
      f.sweep_value = sv;
      f.cell = a.cell;
      f.reference = ref;
      f.cell_median = a.median_count_above;
      f.reference_median = ra->median_count_above;
      f.fewer_spikes = "tie";
      if (a.median_count_above < ra->median_count_above) f.fewer_spikes = a.cell;
      if (a.median_count_above > ra->median_count_above) f.fewer_spikes = ref;
      if (!std::isnan(ra->median_final_val_ppl)) {
        std::vector<double> reached;
        for (const auto& r : report.rows) {
          if (r.cell != a.cell || r.sweep_value != sv || r.summary.diverged) continue;
          for (const auto& [tokens, ppl] : r.val_curve) {
            if (ppl <= ra->median_final_val_ppl) {
              reached.push_back(static_cast<double>(tokens));
              break;
            }
          }
        }
        f.runs_reaching = static_cast<std::int64_t>(reached.size());
        if (!reached.empty()) f.earliest_better_tokens = median(reached);
      }
      report.flags.push_back(f);
    }
  }
}

CompareReport compare(const CompareGrid& grid, const std::filesystem::path& out_dir, std::int64_t progress_every) {
  CompareReport report;
  report.threshold = grid.threshold;
  auto plan = expand_grid(grid);
  std::map<std::string, std::vector<std::int32_t>> corpora;
  for (auto& [row, config] : plan) {
    const std::string key = to_json(config).at("data").dump();
    auto it = corpora.find(key);
    if (it == corpora.end()) it = corpora.emplace(key, corpus_tokens(config.data)).first;
    const CorpusIndex index = build_index(it->second, config.seqlen_e(), config.data.val_fraction, config.seed);
    RunOptions opts;
    opts.progress_every = progress_every;
    if (!out_dir.empty()) opts.out_dir = out_dir / "runs" / run_dir_name(row);
    if (progress_every > 0) std::cerr << "== " << run_dir_name(row) << '\n';
    const RunOutput out = run(config, index, opts);
    row.summary = out.summary;
    std::vector<double> ratios;
    for (const auto& r : out.records) ratios.push_back(r.loss_ratio);
    if (!ratios.empty()) row.at_threshold = instability_summary(ratios, grid.threshold);
    for (const auto& r : out.records) {
      if (r.val_ppl) row.val_curve.emplace_back(r.tokens_consumed, *r.val_ppl);
    }
    report.rows.push_back(row);
  }
  summarize(report, grid);
  return report;
}

void write_compare_outputs(const CompareReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "compare.csv", std::ios::binary | std::ios::trunc);
  csv << "cell,sweep_value,seed,diverged,steps,tokens_consumed,count_above_threshold,threshold,"
         "count_above_1.2,count_above_1.5,max_ratio,final_val_ppl,wall_time_s\n";
  json rows = json::array();
  for (const auto& r : report.rows) {
    const auto& s = r.summary;
    csv << r.cell << ',' << r.sweep_value << ',' << r.seed << ',' << (s.diverged ? 1 : 0) << ',' << s.steps << ','
        << s.tokens_consumed << ',' << r.at_threshold.count_above << ',' << format_double(report.threshold) << ','
        << s.instability_1_2.count_above << ',' << s.instability_1_5.count_above << ','
        << format_double(r.at_threshold.max_ratio) << ','
        << (s.final_val_ppl ? format_double(*s.final_val_ppl) : std::string()) << ','
        << format_double(s.wall_time_s) << '\n';
    json j = to_json(s);
    j["cell"] = r.cell;
    j["sweep_value"] = r.sweep_value;
    j["seed"] = r.seed;
    j["count_above_threshold"] = r.at_threshold.count_above;
    rows.push_back(j);
  }
  json aggregates = json::array();
  for (const auto& a : report.aggregates) {
    aggregates.push_back({{"cell", a.cell},
                          {"sweep_value", a.sweep_value},
                          {"runs", a.runs},
                          {"diverged", a.diverged},
                          {"runs_with_spike", a.runs_with_spike},
                          {"median_count_above", a.median_count_above},
                          {"median_final_val_ppl", std::isnan(a.median_final_val_ppl) ? json(nullptr)
                                                                                        : json(a.median_final_val_ppl)}});
  }
  json flags = json::array();
  for (const auto& f : report.flags) {
    flags.push_back({{"sweep_value", f.sweep_value},
                     {"cell", f.cell},
                     {"reference", f.reference},
                     {"cell_median_count", f.cell_median},
                     {"reference_median_count", f.reference_median},
                     {"fewer_spikes", f.fewer_spikes},
                     {"runs_reaching_reference_ppl", f.runs_reaching},
                     {"earliest_better_tokens", f.earliest_better_tokens ? json(*f.earliest_better_tokens) : json(nullptr)}});
  }
  std::ofstream js(out_dir / "compare.json", std::ios::binary | std::ios::trunc);
  js << json{{"threshold", report.threshold}, {"rows", rows}, {"aggregates", aggregates}, {"comparisons", flags}}.dump(2)
     << '\n';
}

}  // namespace slw
