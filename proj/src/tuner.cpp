#include "slw/tuner.hpp"

#include <algorithm>
#include <bit>
#include <map>

#include "slw/errors.hpp"

namespace slw {

bool detect_fluctuation(std::span<const double> val_ppl, const FluctuationCriterion& criterion) {
  if (val_ppl.empty()) throw ContractError("detect_fluctuation: empty perplexity series");
  double best = val_ppl[0];
  for (std::size_t i = 1; i < val_ppl.size(); ++i) {
    if (val_ppl[i] > criterion.factor * best) return true;
    best = std::min(best, val_ppl[i]);
  }
  return false;
}

std::int64_t TuneResult::total_cost_steps() const {
  std::int64_t total = 0;
  for (const auto& t : trials) total += t.cost_steps;
  return total;
}

namespace {

bool run_probe(const ProbeFn& probe, const std::string& parameter, std::int64_t value, const TuneOptions& options,
               std::vector<TuneTrial>& trials) {
  if (options.seeds.empty()) throw ContractError("tuner: at least one probe seed is required");
  std::size_t votes = 0;
  std::int64_t cost = 0;
  for (auto seed : options.seeds) {
    const ProbeOutcome outcome = probe(value, seed);
    if (options.criterion.window_steps > 0 && outcome.steps_trained > options.criterion.window_steps) {
      throw ContractError("tuner: probe trained " + std::to_string(outcome.steps_trained) +
                          " steps, beyond the window of " + std::to_string(options.criterion.window_steps));
    }
    cost += outcome.steps_trained;
    if (outcome.diverged || detect_fluctuation(outcome.val_ppl, options.criterion)) ++votes;
  }
  const bool fluctuated = 2 * votes >= options.seeds.size();
  trials.push_back({parameter, value, fluctuated, cost});
  return fluctuated;
}

}  // namespace

std::int64_t tune_seqlen_start(const ProbeFn& probe, std::span<const std::int64_t> candidates,
                               const TuneOptions& options, std::vector<TuneTrial>& trials) {
  if (candidates.empty()) throw ContractError("tune_seqlen_start: no candidates");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = candidates[i];
    if (c < 8 || c % 8 != 0) throw ContractError("tune_seqlen_start: candidate " + std::to_string(c) + " is not a multiple of 8");
    if (i > 0 && c <= candidates[i - 1]) throw ContractError("tune_seqlen_start: candidates must ascend");
  }
  for (auto c : candidates) {
    if (!run_probe(probe, "seqlen_s", c, options, trials)) return c;
  }
  throw TuningError("every seqlen_s candidate up to " + std::to_string(candidates.back()) +
                    " fluctuates; try larger starting lengths");
}

std::int64_t tune_duration(const ProbeFn& probe, std::int64_t T_lo, std::int64_t T_hi, const TuneOptions& options,
                           std::vector<TuneTrial>& trials, bool* non_monotone) {
  if (T_lo > T_hi) throw ContractError("tune_duration: T_lo must not exceed T_hi");
  if (T_lo < 1) throw ContractError("tune_duration: T_lo must be >= 1");
  const std::int64_t g = std::max<std::int64_t>(options.criterion.eval_every, 1);
  const std::int64_t points = (T_hi - T_lo) / g + 1;
  auto value_of = [&](std::int64_t k) { return T_lo + k * g; };

  std::map<std::int64_t, bool> seen;  // lattice index -> fluctuated
  auto probe_at = [&](std::int64_t k) {
    auto it = seen.find(k);
    if (it != seen.end()) return it->second;
    const bool f = run_probe(probe, "T", value_of(k), options, trials);
    seen.emplace(k, f);
    return f;
  };

  // Invariant: every index <= lo is stable, every index >= hi fluctuates.
  std::int64_t lo = -1;
  std::int64_t hi = points;
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (probe_at(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }

  // Spare probe within the ceil(log2(n)) + 1 budget: T_lo itself. A fluctuating
  // T_lo below a stable T is the one contradiction bisection can miss.
  const std::int64_t spans = points - 1;
  if (spans >= 2 && !seen.contains(0) &&
      static_cast<std::int64_t>(seen.size()) < static_cast<std::int64_t>(std::bit_width(static_cast<std::uint64_t>(spans - 1))) + 1) {
    probe_at(0);
  }

  bool contradiction = false;
  for (const auto& [k_unstable, f_unstable] : seen) {
    if (!f_unstable) continue;
    for (const auto& [k_stable, f_stable] : seen) {
      if (!f_stable && k_stable > k_unstable) contradiction = true;
    }
  }
  if (non_monotone) *non_monotone = contradiction;
  if (contradiction) {
    lo = -1;
    for (std::int64_t k = 0; k < points; ++k) {
      if (!probe_at(k)) lo = k;
    }
  }
  if (lo < 0) {
    throw TuningError("no pacing duration in [" + std::to_string(T_lo) + ", " + std::to_string(T_hi) +
                      "] avoids validation fluctuation; lower T_lo or raise seqlen_s");
  }
  return value_of(lo);
}

TuneResult tune_pacing(const ProbeFn& seqlen_probe, const std::function<ProbeFn(std::int64_t)>& duration_probe,
                       std::span<const std::int64_t> candidates, std::int64_t T_lo, std::int64_t T_hi,
                       const TuneOptions& options) {
  TuneResult result;
  result.chosen_seqlen_s = tune_seqlen_start(seqlen_probe, candidates, options, result.trials);
  result.chosen_T =
      tune_duration(duration_probe(result.chosen_seqlen_s), T_lo, T_hi, options, result.trials, &result.non_monotone);
  return result;
}

}  // namespace slw
