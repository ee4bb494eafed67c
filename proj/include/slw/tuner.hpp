#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace slw {

/// A validation-perplexity series "fluctuates" when some probe exceeds
/// factor x the best probe before it.
struct FluctuationCriterion {
  double factor = 1.3;
  std::int64_t window_steps = 0;  // k x LR warmup steps
  std::int64_t eval_every = 1;
};

bool detect_fluctuation(std::span<const double> val_ppl, const FluctuationCriterion& criterion);

/// What one probe run reports: the early validation perplexities and how many
/// steps it actually trained.
struct ProbeOutcome {
  std::vector<double> val_ppl;
  std::int64_t steps_trained = 0;
  bool diverged = false;  // counts as a fluctuation
};

/// (candidate value, seed) -> outcome
using ProbeFn = std::function<ProbeOutcome(std::int64_t value, std::uint64_t seed)>;

struct TuneTrial {
  std::string parameter;  // "seqlen_s" or "T"
  std::int64_t value = 0;
  bool fluctuated = false;
  std::int64_t cost_steps = 0;
};

struct TuneResult {
  std::int64_t chosen_T = 0;
  std::int64_t chosen_seqlen_s = 0;
  std::vector<TuneTrial> trials;
  bool non_monotone = false;

  std::int64_t total_cost_steps() const;
};

struct TuneOptions {
  FluctuationCriterion criterion;
  /// One probe per seed, majority vote. A tie counts as fluctuating.
  std::vector<std::uint64_t> seeds = {0};
};

/// Smallest candidate whose probe shows no fluctuation. Candidates ascend from 8.
std::int64_t tune_seqlen_start(const ProbeFn& probe, std::span<const std::int64_t> candidates,
                               const TuneOptions& options, std::vector<TuneTrial>& trials);

/// Largest T on the lattice T_lo + k * eval_every (<= T_hi) whose probe does not
/// fluctuate, found by binary search under the assumption that once some T
/// fluctuates every larger T does too. If the probes contradict that
/// assumption the whole lattice is scanned linearly and `non_monotone` set.
/// When the ceil(log2((T_hi - T_lo) / eval_every)) + 1 probe budget leaves room,
/// T_lo is probed as well, which is how a contradiction can surface.
std::int64_t tune_duration(const ProbeFn& probe, std::int64_t T_lo, std::int64_t T_hi, const TuneOptions& options,
                           std::vector<TuneTrial>& trials, bool* non_monotone = nullptr);

/// seqlen_s first (probing with T = initial_T), then T with the chosen seqlen_s.
/// The probe receives the seqlen_s candidate through `seqlen_probe` and T through `duration_probe`.
TuneResult tune_pacing(const ProbeFn& seqlen_probe, const std::function<ProbeFn(std::int64_t seqlen_s)>& duration_probe,
                       std::span<const std::int64_t> candidates, std::int64_t T_lo, std::int64_t T_hi,
                       const TuneOptions& options);

}  // namespace slw
