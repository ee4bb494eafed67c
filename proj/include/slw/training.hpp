#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slw/data.hpp"
#include "slw/metrics.hpp"
#include "slw/model.hpp"
#include "slw/optimizer.hpp"
#include "slw/schedules.hpp"

namespace slw {

enum class Method { baseline, slw, two_stage, bsz_warmup, mixed_seqlen };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct DataConfig {
  std::vector<std::string> paths;
  /// Used when no paths are given: size of the generated corpus in bytes.
  std::int64_t synthetic_bytes = 0;
  std::uint64_t synthetic_seed = 0;
  double val_fraction = 0.01;

  bool operator==(const DataConfig&) const = default;
};

struct TunerConfig {
  double factor = 1.3;
  /// Probe window = window_multiple x lr_schedule.warmup (in steps), unless
  /// window_steps gives it directly.
  std::int64_t window_multiple = 3;
  std::int64_t window_steps = 0;
  std::int64_t eval_every = 10;
  std::vector<std::int64_t> seqlen_candidates = {8, 16, 32, 64};
  std::int64_t T_lo = 10;
  std::int64_t T_hi = 1000;
  std::vector<std::uint64_t> seeds = {0};

  bool operator==(const TunerConfig&) const = default;
};

/// Complete description of one training run.
struct ExperimentConfig {
  ModelConfig model;
  AdamConfig optimizer;
  LrSchedule lr_schedule{6e-4, 6e-5, 100'000, 1'000'000, ScheduleUnit::tokens};
  Method method = Method::baseline;
  /// SLW pacing (linear or root); seqlen_e always equals model.max_seqlen.
  PacingFunction pacing;
  /// Two-stage schedule; uses pacing-independent fields stage1_len / switch_step.
  std::int64_t stage1_len = 128;
  std::int64_t switch_step = 1000;
  BszWarmup bsz_warmup;
  MixedSeqlen mixed;
  std::int64_t batch_size = 8;
  std::int64_t target_tokens = 1'000'000;
  /// Hard stop on steps; 0 means none. Used by tuning probes.
  std::int64_t max_steps = 0;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  /// Validation cadence in steps; 0 evaluates only at the end.
  std::int64_t eval_every = 100;
  std::int64_t val_batch_size = 8;
  DataConfig data;
  TunerConfig tuner;

  std::int64_t seqlen_e() const { return model.max_seqlen; }
  /// The pacing function with seqlen_e filled in from the model.
  PacingFunction resolved_pacing() const;
  PacingFunction resolved_two_stage() const;
  MixedSeqlen resolved_mixed() const;
};

/// Every invariant violation across all sections.
std::vector<std::string> collect_problems(const ExperimentConfig& config);
void validate(const ExperimentConfig& config);

/// Sequence length the configured method uses at `step`.
std::int64_t planned_seqlen(const ExperimentConfig& config, std::int64_t step);
/// Batch size the configured method uses after `tokens_consumed` tokens.
std::int64_t planned_batch_size(const ExperimentConfig& config, std::int64_t tokens_consumed);
/// Learning rate for a step, given the step index and tokens consumed through that step.
double planned_lr(const ExperimentConfig& config, std::int64_t step, std::int64_t tokens_after_step);

struct TrainState {
  GptParameters<double> params;
  AdamState adam;
  std::int64_t step = 0;
  std::int64_t tokens_consumed = 0;
  std::int64_t data_cursor = 0;  // training windows drawn so far
  LossRatioTracker tracker;

  static TrainState initial(const ExperimentConfig& config);
};

/// Raw token stream of the configured files, or the generated corpus.
std::vector<std::int32_t> corpus_tokens(const DataConfig& data);

/// Loads or generates the corpus and indexes it at full length.
CorpusIndex load_corpus(const ExperimentConfig& config);

/// Mean next-token NLL over every validation window.
double validation_nll(const GptParameters<double>& params, const CorpusIndex& index, std::int64_t batch_size);

/// One optimisation step. Throws DivergenceError on a non-finite loss or gradient.
MetricRecord train_step(TrainState& state, const ExperimentConfig& config, const CorpusIndex& index);

bool run_finished(const TrainState& state, const ExperimentConfig& config);

struct RunSummary {
  std::int64_t steps = 0;
  std::int64_t tokens_consumed = 0;
  bool diverged = false;
  std::string divergence_reason;
  std::optional<double> final_val_ppl;
  std::optional<double> best_val_ppl;
  double final_train_loss = 0;
  InstabilitySummary instability_1_2;
  InstabilitySummary instability_1_5;
  double wall_time_s = 0;
};

struct RunOutput {
  RunSummary summary;
  std::vector<MetricRecord> records;
};

struct RunOptions {
  /// Directory for metrics.csv, manifest.json, checkpoint.bin, summary.json; empty keeps everything in memory.
  std::filesystem::path out_dir;
  bool write_checkpoint = true;
  /// Progress lines to stderr every N steps (0: silent).
  std::int64_t progress_every = 0;
};

/// Trains until the token budget (or max_steps) is reached or the run diverges.
RunOutput run(const ExperimentConfig& config, const RunOptions& options);
RunOutput run(const ExperimentConfig& config, const CorpusIndex& index, const RunOptions& options);

}  // namespace slw
