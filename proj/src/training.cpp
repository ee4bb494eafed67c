#include "slw/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include "slw/checkpoint.hpp"
#include "slw/config.hpp"
#include "slw/errors.hpp"
#include "slw/version.hpp"

namespace slw {

std::string to_string(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::slw: return "slw";
    case Method::two_stage: return "two_stage";
    case Method::bsz_warmup: return "bsz_warmup";
    case Method::mixed_seqlen: return "mixed_seqlen";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "baseline") return Method::baseline;
  if (s == "slw") return Method::slw;
  if (s == "two_stage") return Method::two_stage;
  if (s == "bsz_warmup") return Method::bsz_warmup;
  if (s == "mixed_seqlen") return Method::mixed_seqlen;
  throw ConfigError("unknown method '" + s + "' (expected baseline, slw, two_stage, bsz_warmup or mixed_seqlen)");
}

PacingFunction ExperimentConfig::resolved_pacing() const {
  PacingFunction p = pacing;
  p.seqlen_e = seqlen_e();
  return p;
}

PacingFunction ExperimentConfig::resolved_two_stage() const {
  PacingFunction p;
  p.shape = PacingShape::two_stage;
  p.seqlen_s = std::min<std::int64_t>(stage1_len, seqlen_e());
  p.seqlen_e = seqlen_e();
  p.stage1_len = stage1_len;
  p.switch_step = switch_step;
  return p;
}

MixedSeqlen ExperimentConfig::resolved_mixed() const {
  MixedSeqlen m = mixed;
  m.full_len = seqlen_e();
  return m;
}

std::vector<std::string> collect_problems(const ExperimentConfig& c) {
  std::vector<std::string> problems;
  collect_problems(c.model, problems);
  if (!(c.optimizer.beta1 >= 0 && c.optimizer.beta1 < 1)) problems.push_back("optimizer.beta1 must lie in [0, 1)");
  if (!(c.optimizer.beta2 >= 0 && c.optimizer.beta2 < 1)) problems.push_back("optimizer.beta2 must lie in [0, 1)");
  if (!(c.optimizer.eps > 0)) problems.push_back("optimizer.eps must be > 0");
  if (!(c.optimizer.weight_decay >= 0)) problems.push_back("optimizer.weight_decay must be >= 0");
  collect_problems(c.lr_schedule, problems);
  switch (c.method) {
    case Method::slw: {
      collect_problems(c.resolved_pacing(), problems);
      if (c.pacing.shape == PacingShape::two_stage) problems.push_back("pacing.shape two_stage: use method two_stage");
      break;
    }
    case Method::two_stage: collect_problems(c.resolved_two_stage(), problems); break;
    case Method::bsz_warmup: collect_problems(c.bsz_warmup, problems); break;
    case Method::mixed_seqlen: collect_problems(c.resolved_mixed(), problems); break;
    case Method::baseline: break;
  }
  if (c.batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (c.target_tokens < 1) problems.push_back("target_tokens must be >= 1");
  if (c.max_steps < 0) problems.push_back("max_steps must be >= 0");
  if (!(c.clip_norm > 0)) problems.push_back("clip_norm must be > 0");
  if (c.eval_every < 0) problems.push_back("eval_every must be >= 0");
  if (c.val_batch_size < 1) problems.push_back("val_batch_size must be >= 1");
  if (c.data.paths.empty() && c.data.synthetic_bytes <= 0) {
    problems.push_back("data: give corpus paths or a positive synthetic_bytes");
  }
  if (!(c.data.val_fraction > 0 && c.data.val_fraction < 1)) problems.push_back("data.val_fraction must lie in (0, 1)");
  if (!(c.tuner.factor > 1)) problems.push_back("tuner.factor must be > 1");
  if (c.tuner.window_multiple < 1) problems.push_back("tuner.window_multiple must be >= 1");
  if (c.tuner.window_steps < 0) problems.push_back("tuner.window_steps must be >= 0");
  if (c.tuner.eval_every < 1) problems.push_back("tuner.eval_every must be >= 1");
  if (c.tuner.T_lo < 1 || c.tuner.T_lo > c.tuner.T_hi) problems.push_back("tuner.T_lo must lie in [1, T_hi]");
  if (c.tuner.seeds.empty()) problems.push_back("tuner.seeds must not be empty");
  for (auto s : c.tuner.seqlen_candidates) {
    if (s != 8 && s % 8 != 0) {
      problems.push_back("tuner.seqlen_candidates: " + std::to_string(s) + " is not a multiple of the granularity 8");
    }
  }
  return problems;
}

void validate(const ExperimentConfig& config) {
  auto problems = collect_problems(config);
  if (!problems.empty()) throw ConfigError(problems);
}

std::int64_t planned_seqlen(const ExperimentConfig& c, std::int64_t step) {
  switch (c.method) {
    case Method::slw: return seqlen_at(step, c.resolved_pacing());
    case Method::two_stage: return two_stage_seqlen_at(step, c.resolved_two_stage());
    case Method::mixed_seqlen: return mixed_seqlen_at(step, c.resolved_mixed());
    case Method::baseline:
    case Method::bsz_warmup: return c.seqlen_e();
  }
  return c.seqlen_e();
}

std::int64_t planned_batch_size(const ExperimentConfig& c, std::int64_t tokens_consumed) {
  return c.method == Method::bsz_warmup ? batch_size_at(tokens_consumed, c.bsz_warmup) : c.batch_size;
}

double planned_lr(const ExperimentConfig& c, std::int64_t step, std::int64_t tokens_after_step) {
  const double progress = c.lr_schedule.unit == ScheduleUnit::tokens ? static_cast<double>(tokens_after_step)
                                                                     : static_cast<double>(step + 1);
  return lr_at(progress, c.lr_schedule);
}

TrainState TrainState::initial(const ExperimentConfig& config) {
  TrainState s;
  ModelConfig mc = config.model;
  mc.init_seed = config.seed;
  s.params = init_parameters<double>(mc);
  s.adam = AdamState::zeros_like(s.params.tensors, config.optimizer);
  return s;
}

std::vector<std::int32_t> corpus_tokens(const DataConfig& data) {
  if (!data.paths.empty()) {
    std::vector<std::filesystem::path> paths(data.paths.begin(), data.paths.end());
    return tokenize_bytes(read_corpus(paths));
  }
  return tokenize_bytes(synthetic_corpus(static_cast<std::size_t>(data.synthetic_bytes), data.synthetic_seed));
}

CorpusIndex load_corpus(const ExperimentConfig& config) {
  return build_index(corpus_tokens(config.data), config.seqlen_e(), config.data.val_fraction, config.seed);
}

double validation_nll(const GptParameters<double>& params, const CorpusIndex& index, std::int64_t batch_size) {
  double total = 0;
  std::int64_t predictions = 0;
  for (const auto& b : validation_batches(index, batch_size)) {
    const std::int64_t n = b.batch_size() * (b.length() - 1);
    total += loss_on_batch(params, b.tokens) * static_cast<double>(n);
    predictions += n;
  }
  return total / static_cast<double>(predictions);
}

MetricRecord train_step(TrainState& state, const ExperimentConfig& config, const CorpusIndex& index) {
  const std::int64_t length = planned_seqlen(config, state.step);
  const std::int64_t bsz = planned_batch_size(config, state.tokens_consumed);
  const Batch batch = batch_at(index, state.data_cursor, bsz, length, state.step);

  auto lg = loss_and_gradients(state.params, batch.tokens);
  if (!std::isfinite(lg.loss)) {
    throw DivergenceError("non-finite training loss at step " + std::to_string(state.step), state.step);
  }
  MetricRecord rec;
  rec.step = state.step;
  rec.seqlen = length;
  rec.batch_size = bsz;
  rec.train_loss = lg.loss;
  rec.loss_ratio = state.tracker.update(lg.loss);

  std::vector<std::string> names;
  names.reserve(state.params.tensors.size());
  for (const auto& t : state.params.tensors) names.push_back(t.name);
  ClipResult clip;
  try {
    clip = clip_global_norm(lg.gradients, config.clip_norm, names);
  } catch (const NonFiniteError& e) {
    throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(state.step), state.step);
  }
  rec.grad_norm_preclip = clip.pre_norm;
  rec.clipped = clip.clipped;

  const std::int64_t tokens_after = state.tokens_consumed + bsz * length;
  rec.lr = planned_lr(config, state.step, tokens_after);
  adam_step(state.params.tensors, lg.gradients, state.adam, rec.lr);

  const VarianceStats vs = variance_stats(state.adam);
  rec.var_l1 = vs.var_l1;
  rec.var_max = vs.var_max;
  rec.mom_l1 = vs.mom_l1;

  state.tokens_consumed = tokens_after;
  state.data_cursor += bsz;
  state.step += 1;
  rec.tokens_consumed = state.tokens_consumed;
  return rec;
}

bool run_finished(const TrainState& state, const ExperimentConfig& config) {
  if (config.max_steps > 0 && state.step >= config.max_steps) return true;
  return should_terminate(state.tokens_consumed, config.target_tokens);
}

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

RunOutput run(const ExperimentConfig& config, const RunOptions& options) {
  validate(config);
  const CorpusIndex index = load_corpus(config);
  return run(config, index, options);
}

RunOutput run(const ExperimentConfig& config, const CorpusIndex& index, const RunOptions& options) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  RunOutput out;
  std::optional<MetricsCsvWriter> writer;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    writer.emplace(options.out_dir / "metrics.csv");
  }
  TrainState state = TrainState::initial(config);
  RunSummary& summary = out.summary;
  try {
    while (!run_finished(state, config)) {
      MetricRecord rec = train_step(state, config, index);
      const bool last = run_finished(state, config);
      if ((config.eval_every > 0 && state.step % config.eval_every == 0) || last) {
        const double ppl = perplexity(validation_nll(state.params, index, config.val_batch_size));
        rec.val_ppl = ppl;
        summary.final_val_ppl = ppl;
        if (!summary.best_val_ppl || ppl < *summary.best_val_ppl) summary.best_val_ppl = ppl;
      }
      if (writer) writer->append(rec);
      if (options.progress_every > 0 && rec.step % options.progress_every == 0) {
        std::cerr << "step " << rec.step << " tokens " << rec.tokens_consumed << " L " << rec.seqlen << " loss "
                  << rec.train_loss << " ratio " << rec.loss_ratio << " lr " << rec.lr
                  << (rec.val_ppl ? " val_ppl " + std::to_string(*rec.val_ppl) : std::string()) << '\n';
      }
      out.records.push_back(std::move(rec));
    }
  } catch (const DivergenceError& e) {
    summary.diverged = true;
    summary.divergence_reason = e.what();
  }

  summary.steps = state.step;
  summary.tokens_consumed = state.tokens_consumed;
  if (!out.records.empty()) {
    summary.final_train_loss = out.records.back().train_loss;
    std::vector<double> ratios;
    ratios.reserve(out.records.size());
    for (const auto& r : out.records) ratios.push_back(r.loss_ratio);
    summary.instability_1_2 = instability_summary(ratios, 1.2);
    summary.instability_1_5 = instability_summary(ratios, 1.5);
  }
  summary.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (!options.out_dir.empty()) {
    if (options.write_checkpoint) {
      write_checkpoint(options.out_dir / "checkpoint.bin",
                       Checkpoint{state.params, state.adam, state.step, state.tokens_consumed});
    }
    const json resolved = to_json(config);
    write_json(options.out_dir / "summary.json", to_json(summary));
    write_json(options.out_dir / "manifest.json", json{{"version", std::string(kVersionString)},
                                                       {"config_hash", config_hash(resolved)},
                                                       {"seed", config.seed},
                                                       {"method", to_string(config.method)},
                                                       {"resolved_config", resolved},
                                                       {"summary", to_json(summary)}});
  }
  return out;
}

}  // namespace slw
