#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slw {

/// Every emitted sequence length is a multiple of this, apart from the floor of 2.
inline constexpr std::int64_t kSeqlenGranularity = 8;

enum class PacingShape { linear, root, two_stage };

/// Sequence-length warmup schedule.
struct PacingFunction {
  PacingShape shape = PacingShape::linear;
  std::int64_t seqlen_s = 8;
  std::int64_t seqlen_e = 1024;
  std::int64_t duration = 1000;  // T, in steps
  double root_degree = 1.0;      // r, root shape only
  std::int64_t stage1_len = 128;     // two_stage only
  std::int64_t switch_step = 1000;   // two_stage only

  bool operator==(const PacingFunction&) const = default;
};

void collect_problems(const PacingFunction& p, std::vector<std::string>& problems);

/// seqlen_s + (seqlen_e - seqlen_s) * min((t/T)^r, 1), floored, cut down to a
/// multiple of 8 and held at or above seqlen_s cut down to a multiple of 8, and 2.
/// Saturates at exactly seqlen_e once t >= T. two_stage shapes dispatch to
/// two_stage_seqlen_at.
std::int64_t seqlen_at(std::int64_t step, const PacingFunction& p);

/// stage1_len before switch_step, seqlen_e from then on.
std::int64_t two_stage_seqlen_at(std::int64_t step, const PacingFunction& p);

/// Periodic short/full mix: short_len for the first (period - long_steps) steps of
/// each period, full_len for the rest.
struct MixedSeqlen {
  std::int64_t short_len = 128;
  std::int64_t full_len = 1024;
  std::int64_t period = 1000;
  std::int64_t long_steps = 100;

  bool operator==(const MixedSeqlen&) const = default;
};

void collect_problems(const MixedSeqlen& m, std::vector<std::string>& problems);
std::int64_t mixed_seqlen_at(std::int64_t step, const MixedSeqlen& m);

enum class ScheduleUnit { steps, tokens };

/// Linear warmup from 0 to peak, then one cosine decay to min_lr at decay_horizon.
struct LrSchedule {
  double peak = 6e-4;
  double min_lr = 6e-5;
  double warmup = 0;
  double decay_horizon = 1;
  ScheduleUnit unit = ScheduleUnit::steps;

  bool operator==(const LrSchedule&) const = default;
};

void collect_problems(const LrSchedule& s, std::vector<std::string>& problems);
double lr_at(double progress, const LrSchedule& s);

/// Linear batch-size ramp by consumed tokens.
struct BszWarmup {
  std::int64_t start_bsz = 16;
  std::int64_t end_bsz = 256;
  std::int64_t ramp_tokens = 4'000'000'000;

  bool operator==(const BszWarmup&) const = default;
};

void collect_problems(const BszWarmup& w, std::vector<std::string>& problems);
std::int64_t batch_size_at(std::int64_t tokens_consumed, const BszWarmup& w);

inline bool should_terminate(std::int64_t tokens_consumed, std::int64_t target_tokens) {
  return tokens_consumed >= target_tokens;
}

std::string to_string(PacingShape s);
std::string to_string(ScheduleUnit u);
PacingShape parse_pacing_shape(const std::string& s);
ScheduleUnit parse_schedule_unit(const std::string& s);

}  // namespace slw
