#include "slw/cli.hpp"

#include <cstdlib>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "slw/compare.hpp"
#include "slw/config.hpp"
#include "slw/errors.hpp"
#include "slw/report.hpp"
#include "slw/tuning.hpp"
#include "slw/version.hpp"

namespace slw {

namespace {

/// SLWLAB_LOG: 0 silent (default), 1 progress every 100 steps, 2 every step.
std::int64_t progress_every_from_env() {
  const char* level = std::getenv("SLWLAB_LOG");
  if (level == nullptr) return 0;
  const std::string v(level);
  if (v == "2" || v == "debug") return 1;
  if (v == "1" || v == "info") return 100;
  return 0;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

struct Failure {
  int code;
  std::string kind;
  std::vector<std::string> problems;
};

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string grid;
  std::vector<std::string> run_dirs;
  std::int64_t corpus_bytes = 5'000'000;
  std::uint64_t corpus_seed = 0;
  bool no_checkpoint = false;
};

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const ResolvedConfig rc = load_config_file(o.config, o.overrides);
  RunOptions ro;
  ro.out_dir = o.out;
  ro.write_checkpoint = !o.no_checkpoint;
  ro.progress_every = progress_every_from_env();
  const RunOutput result = run(rc.config, ro);
  out << to_json(result.summary).dump(2) << '\n';
  if (result.summary.diverged) {
    err << "run diverged: " << result.summary.divergence_reason << '\n';
    return kExitDivergence;
  }
  return kExitOk;
}

int cmd_tune(const Options& o, std::ostream& out) {
  const ResolvedConfig rc = load_config_file(o.config, o.overrides);
  const CorpusIndex index = load_corpus(rc.config);
  std::filesystem::create_directories(o.out);
  const TuneResult result = tune_experiment(rc.config, index, o.out);
  const json report = to_json(result, probe_window_steps(rc.config));
  write_json_file(std::filesystem::path(o.out) / "tune.json", report);

  json tuned = rc.document;
  tuned["method"] = "slw";
  tuned["pacing"]["seqlen_s"] = result.chosen_seqlen_s;
  tuned["pacing"]["T"] = result.chosen_T;
  write_json_file(std::filesystem::path(o.out) / "tuned_config.json", tuned);
  out << report.dump(2) << '\n';
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  std::ifstream in(o.grid);
  if (!in) throw ConfigError("cannot read grid file '" + o.grid + "'");
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("grid file '" + o.grid + "' is not valid JSON");
  const CompareGrid grid = parse_grid(doc);
  expand_grid(grid);  // validates every cell before any training starts
  const CompareReport report = compare(grid, o.out, progress_every_from_env());
  write_compare_outputs(report, o.out);
  std::ifstream summary(std::filesystem::path(o.out) / "compare.json");
  out << summary.rdbuf();
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  std::vector<std::filesystem::path> dirs(o.run_dirs.begin(), o.run_dirs.end());
  for (const auto& label : report_data(dirs, o.out)) out << label << '\n';
  return kExitOk;
}

int cmd_make_corpus(const Options& o) {
  if (o.corpus_bytes <= 0) throw ConfigError("--bytes must be positive");
  const std::string text = synthetic_corpus(static_cast<std::size_t>(o.corpus_bytes), o.corpus_seed);
  std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + o.out + " for writing");
  f << text;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequence length warmup lab: train, tune, compare and summarize tiny GPT runs", "slwlab"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);
  bool error_json = false;
  app.add_flag("--error-json", error_json, "On failure also print a JSON error object to stdout");

  Options o;
  auto* train = app.add_subcommand("train", "Train one run and write its run directory");
  train->add_option("--config", o.config, "Config JSON (a run manifest also works)")->required();
  train->add_option("--set", o.overrides, "Override a dotted key, e.g. lr_schedule.peak=6e-4");
  train->add_option("--out", o.out, "Run directory")->required();
  train->add_flag("--no-checkpoint", o.no_checkpoint, "Skip checkpoint.bin");

  auto* tune = app.add_subcommand("tune", "Search seqlen_s and T for the SLW pacing function");
  tune->add_option("--config", o.config, "Config JSON")->required();
  tune->add_option("--set", o.overrides, "Override a dotted key");
  tune->add_option("--out", o.out, "Output directory")->required();

  auto* cmp = app.add_subcommand("compare", "Run a grid of configs x seeds and tabulate instability");
  cmp->add_option("--grid", o.grid, "Grid JSON")->required();
  cmp->add_option("--out", o.out, "Output directory")->required();

  auto* report = app.add_subcommand("report-data", "Consolidate run directories into analysis CSVs");
  report->add_option("dirs", o.run_dirs, "Run directories")->required();
  report->add_option("--out", o.out, "Output directory")->required();

  auto* defaults = app.add_subcommand("defaults", "Print the default config with every key");

  auto* corpus = app.add_subcommand("make-corpus", "Write a deterministic synthetic text corpus");
  corpus->add_option("--bytes", o.corpus_bytes, "Size in bytes");
  corpus->add_option("--seed", o.corpus_seed, "Generator seed");
  corpus->add_option("--out", o.out, "Output file")->required();

  auto fail = [&](const Failure& f) {
    for (const auto& p : f.problems) err << "error: " << p << '\n';
    if (error_json) {
      out << json{{"status", "error"}, {"exit_code", f.code}, {"kind", f.kind}, {"problems", f.problems}}.dump()
          << '\n';
    }
    return f.code;
  };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help / --version
      out << (e.get_name() == "CallForVersion" ? std::string(e.what()) + "\n" : app.help());
      return kExitOk;
    }
    return fail({kExitConfig, "usage", {e.what()}});
  }

  try {
    if (*train) return cmd_train(o, out, err);
    if (*tune) return cmd_tune(o, out);
    if (*cmp) return cmd_compare(o, out);
    if (*report) return cmd_report(o, out);
    if (*defaults) {
      out << default_config_json().dump(2) << '\n';
      return kExitOk;
    }
    if (*corpus) return cmd_make_corpus(o);
  } catch (const ConfigError& e) {
    return fail({kExitConfig, "config", e.problems()});
  } catch (const DivergenceError& e) {
    return fail({kExitDivergence, "divergence", {e.what()}});
  } catch (const TuningError& e) {
    return fail({kExitTuning, "tuning", {e.what()}});
  } catch (const std::exception& e) {
    return fail({kExitFailure, "runtime", {e.what()}});
  }
  return kExitFailure;
}

int run_cli(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees the same large activation buffers every step;
  // keeping them on the heap avoids an mmap/munmap pair and page faults per buffer.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace slw
