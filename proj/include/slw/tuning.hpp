#pragma once

#include <filesystem>

#include "slw/config.hpp"
#include "slw/training.hpp"
#include "slw/tuner.hpp"

namespace slw {

/// LR warmup expressed in steps at full length (token-unit schedules are converted).
std::int64_t lr_warmup_steps(const ExperimentConfig& config);

/// Probe window: tuner.window_steps when set, else tuner.window_multiple x LR warmup steps.
std::int64_t probe_window_steps(const ExperimentConfig& config);

/// Short SLW run of at most window steps; returns the validation-perplexity series.
ProbeOutcome probe_pacing(const ExperimentConfig& base, const CorpusIndex& index, std::int64_t seqlen_s,
                          std::int64_t duration, std::uint64_t seed, const std::filesystem::path& log_dir);

/// Runs the low-cost pacing search on `base` (method forced to slw). Per-probe
/// logs go under out_dir/probes/ when out_dir is non-empty.
TuneResult tune_experiment(const ExperimentConfig& base, const CorpusIndex& index,
                           const std::filesystem::path& out_dir);

json to_json(const TuneResult& result, std::int64_t window_steps);

}  // namespace slw
