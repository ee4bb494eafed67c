#include "slw/tuning.hpp"

#include <algorithm>
#include <fstream>

#include "slw/errors.hpp"

namespace slw {

std::int64_t lr_warmup_steps(const ExperimentConfig& c) {
  if (c.lr_schedule.unit == ScheduleUnit::steps) return static_cast<std::int64_t>(std::ceil(c.lr_schedule.warmup));
  const double per_step = static_cast<double>(c.batch_size * c.seqlen_e());
  return static_cast<std::int64_t>(std::ceil(c.lr_schedule.warmup / per_step));
}

std::int64_t probe_window_steps(const ExperimentConfig& c) {
  if (c.tuner.window_steps > 0) return c.tuner.window_steps;
  return std::max<std::int64_t>(c.tuner.window_multiple * lr_warmup_steps(c), c.tuner.eval_every);
}

ProbeOutcome probe_pacing(const ExperimentConfig& base, const CorpusIndex& index, std::int64_t seqlen_s,
                          std::int64_t duration, std::uint64_t seed, const std::filesystem::path& log_dir) {
  ExperimentConfig c = base;
  c.method = Method::slw;
  c.pacing.seqlen_s = seqlen_s;
  c.pacing.duration = duration;
  c.seed = seed;
  c.model.init_seed = seed;
  c.max_steps = probe_window_steps(base);
  c.eval_every = base.tuner.eval_every;
  RunOptions opts;
  opts.out_dir = log_dir;
  opts.write_checkpoint = false;
  const RunOutput out = run(c, index, opts);
  ProbeOutcome outcome;
  outcome.steps_trained = out.summary.steps;
  for (const auto& r : out.records) {
    if (r.val_ppl) outcome.val_ppl.push_back(*r.val_ppl);
  }
  outcome.diverged = out.summary.diverged;
  return outcome;
}

TuneResult tune_experiment(const ExperimentConfig& base, const CorpusIndex& index,
                           const std::filesystem::path& out_dir) {
  TuneOptions options;
  options.criterion.factor = base.tuner.factor;
  options.criterion.window_steps = probe_window_steps(base);
  options.criterion.eval_every = base.tuner.eval_every;
  options.seeds = base.tuner.seeds;

  auto log_dir = [&](const std::string& what, std::int64_t value, std::uint64_t seed) {
    if (out_dir.empty()) return std::filesystem::path();
    return out_dir / "probes" / (what + "_" + std::to_string(value) + "_seed" + std::to_string(seed));
  };
  const std::int64_t initial_T = options.criterion.window_steps;
  ProbeFn seqlen_probe = [&](std::int64_t s, std::uint64_t seed) {
    return probe_pacing(base, index, s, initial_T, seed, log_dir("seqlen_s", s, seed));
  };
  auto duration_probe = [&](std::int64_t s) -> ProbeFn {
    return [&, s](std::int64_t T, std::uint64_t seed) {
      return probe_pacing(base, index, s, T, seed, log_dir("T", T, seed));
    };
  };
  return tune_pacing(seqlen_probe, duration_probe, base.tuner.seqlen_candidates, base.tuner.T_lo, base.tuner.T_hi,
                     options);
}

json to_json(const TuneResult& r, std::int64_t window_steps) {
  json trials = json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"parameter", t.parameter}, {"value", t.value}, {"fluctuated", t.fluctuated},
                      {"cost_steps", t.cost_steps}});
  }
  return {{"chosen_T", r.chosen_T},
          {"chosen_seqlen_s", r.chosen_seqlen_s},
          {"non_monotone", r.non_monotone},
          {"window_steps", window_steps},
          {"total_cost_steps", r.total_cost_steps()},
          {"trials", trials}};
}

}  // namespace slw
