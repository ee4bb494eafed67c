#include "slw/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "slw/errors.hpp"

namespace slw {

void collect_problems(const PacingFunction& p, std::vector<std::string>& problems) {
  if (p.seqlen_s < 1) problems.push_back("pacing.seqlen_s must be >= 1");
  if (p.seqlen_s > p.seqlen_e) problems.push_back("pacing.seqlen_s must not exceed seqlen_e");
  if (p.seqlen_e % kSeqlenGranularity != 0) {
    problems.push_back("pacing.seqlen_e (" + std::to_string(p.seqlen_e) +
                       ") must be a multiple of the sequence-length granularity 8");
  }
  if (p.duration < 1) problems.push_back("pacing.T must be >= 1");
  if (p.shape == PacingShape::root && !(p.root_degree > 0)) problems.push_back("pacing.root_degree must be > 0");
  if (p.shape == PacingShape::two_stage) {
    if (p.stage1_len < 2 || p.stage1_len > p.seqlen_e) problems.push_back("two_stage.stage1_len must lie in [2, seqlen_e]");
    if (p.switch_step < 0) problems.push_back("two_stage.switch_step must be >= 0");
  }
}

std::int64_t seqlen_at(std::int64_t step, const PacingFunction& p) {
  if (p.shape == PacingShape::two_stage) return two_stage_seqlen_at(step, p);
  if (step >= p.duration) return p.seqlen_e;
  std::int64_t len = 0;
  if (p.shape == PacingShape::linear) {
    // Exact: floor(s + (e - s) * t / T) in integers.
    len = p.seqlen_s + (p.seqlen_e - p.seqlen_s) * step / p.duration;
  } else {
    const double frac = std::min(std::pow(static_cast<double>(step) / static_cast<double>(p.duration), p.root_degree), 1.0);
    len = static_cast<std::int64_t>(
        std::floor(static_cast<double>(p.seqlen_s) + static_cast<double>(p.seqlen_e - p.seqlen_s) * frac));
  }
  len -= len % kSeqlenGranularity;
  // Lower bound: the starting length cut to the granularity, and never below 2.
  const std::int64_t floor_len = p.seqlen_s - p.seqlen_s % kSeqlenGranularity;
  return std::min(std::max({len, floor_len, std::int64_t{2}}), p.seqlen_e);
}

std::int64_t two_stage_seqlen_at(std::int64_t step, const PacingFunction& p) {
  return step < p.switch_step ? p.stage1_len : p.seqlen_e;
}

void collect_problems(const MixedSeqlen& m, std::vector<std::string>& problems) {
  if (m.period < 1) problems.push_back("mixed_seqlen.period must be >= 1");
  if (m.long_steps < 0 || m.long_steps > m.period) problems.push_back("mixed_seqlen.long_steps must lie in [0, period]");
  if (m.short_len < 2 || m.short_len > m.full_len) problems.push_back("mixed_seqlen.short_len must lie in [2, full length]");
}

std::int64_t mixed_seqlen_at(std::int64_t step, const MixedSeqlen& m) {
  return (step % m.period) < (m.period - m.long_steps) ? m.short_len : m.full_len;
}

void collect_problems(const LrSchedule& s, std::vector<std::string>& problems) {
  if (!(s.peak >= 0)) problems.push_back("lr_schedule.peak must be >= 0");
  if (!(s.min_lr >= 0 && s.min_lr <= s.peak)) problems.push_back("lr_schedule.min_lr must lie in [0, peak]");
  if (!(s.warmup >= 0)) problems.push_back("lr_schedule.warmup must be >= 0");
  if (!(s.decay_horizon > s.warmup)) problems.push_back("lr_schedule.decay_horizon must exceed warmup");
}

double lr_at(double progress, const LrSchedule& s) {
  if (!(s.decay_horizon > s.warmup)) {
    throw ConfigError("lr_at: decay_horizon (" + std::to_string(s.decay_horizon) + ") must exceed warmup (" +
                      std::to_string(s.warmup) + ")");
  }
  if (progress < s.warmup) return s.peak * progress / s.warmup;
  const double d = std::clamp((progress - s.warmup) / (s.decay_horizon - s.warmup), 0.0, 1.0);
  return s.min_lr + 0.5 * (s.peak - s.min_lr) * (1.0 + std::cos(std::numbers::pi * d));
}

void collect_problems(const BszWarmup& w, std::vector<std::string>& problems) {
  if (w.start_bsz < 1) problems.push_back("bsz_warmup.start_bsz must be >= 1");
  if (w.start_bsz > w.end_bsz) problems.push_back("bsz_warmup.start_bsz must not exceed end_bsz");
  if (w.ramp_tokens < 1) problems.push_back("bsz_warmup.ramp_tokens must be >= 1");
}

std::int64_t batch_size_at(std::int64_t tokens_consumed, const BszWarmup& w) {
  if (tokens_consumed >= w.ramp_tokens) return w.end_bsz;
  const double frac = static_cast<double>(tokens_consumed) / static_cast<double>(w.ramp_tokens);
  const auto b = static_cast<std::int64_t>(
      std::floor(static_cast<double>(w.start_bsz) + static_cast<double>(w.end_bsz - w.start_bsz) * frac));
  return std::clamp(b, w.start_bsz, w.end_bsz);
}

std::string to_string(PacingShape s) {
  switch (s) {
    case PacingShape::linear: return "linear";
    case PacingShape::root: return "root";
    case PacingShape::two_stage: return "two_stage";
  }
  return "?";
}

std::string to_string(ScheduleUnit u) { return u == ScheduleUnit::steps ? "steps" : "tokens"; }

PacingShape parse_pacing_shape(const std::string& s) {
  if (s == "linear") return PacingShape::linear;
  if (s == "root") return PacingShape::root;
  if (s == "two_stage") return PacingShape::two_stage;
  throw ConfigError("unknown pacing shape '" + s + "' (expected linear, root or two_stage)");
}

ScheduleUnit parse_schedule_unit(const std::string& s) {
  if (s == "steps") return ScheduleUnit::steps;
  if (s == "tokens") return ScheduleUnit::tokens;
  throw ConfigError("unknown schedule unit '" + s + "' (expected steps or tokens)");
}

}  // namespace slw
