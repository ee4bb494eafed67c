#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "slw/checkpoint.hpp"
#include "slw/config.hpp"
#include "slw/errors.hpp"
#include "slw/training.hpp"
#include "slw/tuning.hpp"

using namespace slw;

namespace {

ExperimentConfig tiny(Method method) {
  const json doc = {
      {"model", {{"n_layers", 1}, {"hidden", 16}, {"n_heads", 2}, {"max_seqlen", 32}}},
      {"method", to_string(method)},
      {"pacing", {{"seqlen_s", 8}, {"T", 20}}},
      {"two_stage", {{"stage1_len", 16}, {"switch_step", 10}}},
      {"mixed_seqlen", {{"short_len", 8}, {"period", 10}, {"long_steps", 2}}},
      {"bsz_warmup", {{"start_bsz", 2}, {"end_bsz", 6}, {"ramp_tokens", 2000}}},
      {"lr_schedule", {{"peak", 3e-3}, {"min_lr", 3e-4}, {"warmup", 500}, {"decay_horizon", 3840}, {"unit", "tokens"}}},
      {"batch_size", 4},
      {"target_tokens", 4 * 32 * 30},
      {"eval_every", 10},
      {"val_batch_size", 4},
      {"data", {{"synthetic_bytes", 40000}, {"synthetic_seed", 2}, {"val_fraction", 0.05}}},
  };
  return resolve_config(doc).config;
}

const CorpusIndex& shared_index() {
  static const CorpusIndex index = load_corpus(tiny(Method::baseline));
  return index;
}

}  // namespace

TEST_CASE("baseline step count is the token budget over full-length batches") {
  const auto cfg = tiny(Method::baseline);
  const auto out = run(cfg, shared_index(), {});
  CHECK(out.summary.steps == 30);
  CHECK(out.summary.tokens_consumed == 3840);
  CHECK_FALSE(out.summary.diverged);
  for (const auto& r : out.records) CHECK(r.seqlen == 32);
  REQUIRE(out.summary.final_val_ppl);
  CHECK(out.records.back().val_ppl == out.summary.final_val_ppl);
  CHECK(out.records[9].val_ppl.has_value());
  CHECK_FALSE(out.records[8].val_ppl.has_value());
}

TEST_CASE("paced runs take more steps for the same tokens and account exactly") {
  for (auto m : {Method::slw, Method::two_stage, Method::mixed_seqlen, Method::bsz_warmup}) {
    CAPTURE(to_string(m));
    const auto cfg = tiny(m);
    const auto out = run(cfg, shared_index(), {});
    CHECK(out.summary.steps > 30);
    std::int64_t tokens = 0;
    for (const auto& r : out.records) {
      CHECK(r.seqlen == planned_seqlen(cfg, r.step));
      CHECK(r.batch_size == planned_batch_size(cfg, tokens));
      tokens += r.batch_size * r.seqlen;
      CHECK(r.tokens_consumed == tokens);
      CHECK(r.lr == lr_at(static_cast<double>(tokens), cfg.lr_schedule));
    }
    CHECK(tokens == out.summary.tokens_consumed);
    CHECK(tokens >= cfg.target_tokens);
    CHECK(tokens - out.records.back().batch_size * out.records.back().seqlen < cfg.target_tokens);
  }
}

TEST_CASE("token-unit lr is identical across methods at equal token counts") {
  const auto base = run(tiny(Method::baseline), shared_index(), {});
  const auto paced = run(tiny(Method::slw), shared_index(), {});
  int matched = 0;
  for (const auto& b : base.records) {
    for (const auto& p : paced.records) {
      if (p.tokens_consumed == b.tokens_consumed) {
        CHECK(p.lr == b.lr);
        ++matched;
      }
    }
  }
  CHECK(matched > 0);
}

TEST_CASE("step-unit lr makes a paced run decay early") {
  auto cfg = tiny(Method::slw);
  cfg.lr_schedule = LrSchedule{3e-3, 3e-4, 5, 30, ScheduleUnit::steps};
  const auto paced = run(cfg, shared_index(), {});
  auto base_cfg = cfg;
  base_cfg.method = Method::baseline;
  const auto base = run(base_cfg, shared_index(), {});
  // By the time the paced run has consumed the baseline's full budget it has hit the floor.
  CHECK(paced.records.back().lr == doctest::Approx(3e-4));
  CHECK(paced.summary.steps > base.summary.steps);
  for (const auto& b : base.records) {
    for (const auto& p : paced.records) {
      if (p.tokens_consumed == b.tokens_consumed && b.step >= 5) CHECK(p.lr <= b.lr);
    }
  }
}

TEST_CASE("runs are deterministic and max_steps stops early") {
  auto cfg = tiny(Method::slw);
  cfg.max_steps = 12;
  const auto a = run(cfg, shared_index(), {});
  const auto b = run(cfg, shared_index(), {});
  CHECK(a.summary.steps == 12);
  CHECK(a.records == b.records);
  cfg.seed = 1;
  CHECK(run(cfg, shared_index(), {}).records != a.records);
}

TEST_CASE("a non-finite parameter is reported as divergence") {
  auto cfg = tiny(Method::baseline);
  auto state = TrainState::initial(cfg);
  state.params.tensors[0].value(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train_step(state, cfg, shared_index()), DivergenceError);
}

TEST_CASE("run directory contents and checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "slw_training_test";
  std::filesystem::remove_all(dir);
  auto cfg = tiny(Method::slw);
  cfg.max_steps = 5;
  const auto out = run(cfg, shared_index(), RunOptions{dir, true, 0});
  for (const char* f : {"metrics.csv", "manifest.json", "summary.json", "checkpoint.bin"}) CHECK(std::filesystem::exists(dir / f));
  CHECK(read_metrics_csv(dir / "metrics.csv") == out.records);

  const auto ck = read_checkpoint(dir / "checkpoint.bin");
  CHECK(ck.step == 5);
  CHECK(ck.tokens_consumed == out.summary.tokens_consumed);
  CHECK(ck.adam.t == 5);
  CHECK(ck.params.config == cfg.model);

  // Replaying the same steps in memory gives the same tensors, bit for bit.
  auto state = TrainState::initial(cfg);
  for (int i = 0; i < 5; ++i) train_step(state, cfg, shared_index());
  REQUIRE(ck.params.tensors.size() == state.params.tensors.size());
  for (std::size_t i = 0; i < ck.params.tensors.size(); ++i) {
    CHECK(ck.params.tensors[i].name == state.params.tensors[i].name);
    CHECK(ck.params.tensors[i].value == state.params.tensors[i].value);
    CHECK(ck.adam.m[i] == state.adam.m[i]);
    CHECK(ck.adam.v[i] == state.adam.v[i]);
  }

  // Rewriting the loaded checkpoint gives the same bytes.
  write_checkpoint(dir / "again.bin", ck);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string bytes = slurp(dir / "checkpoint.bin");
  CHECK(bytes == slurp(dir / "again.bin"));
  CHECK(bytes.substr(0, 4) == "SQWM");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == kCheckpointVersion);

  std::string bad = bytes;
  bad[0] = 'X';
  std::ofstream(dir / "bad.bin", std::ios::binary) << bad;
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.bin"), FormatError);
  std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, 40);
  CHECK_THROWS_AS(read_checkpoint(dir / "short.bin"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("probe window follows the lr warmup unless set directly") {
  auto cfg = tiny(Method::baseline);
  // 500 warmup tokens at 4 x 32 per full-length step: 4 steps, times 3.
  CHECK(lr_warmup_steps(cfg) == 4);
  CHECK(probe_window_steps(cfg) == 12);
  cfg.tuner.window_steps = 7;
  CHECK(probe_window_steps(cfg) == 7);
}

TEST_CASE("tuning on a real model stays inside its probe budget") {
  auto cfg = tiny(Method::baseline);
  cfg.tuner.seqlen_candidates = {8, 16};
  cfg.tuner.T_lo = 10;
  cfg.tuner.T_hi = 40;
  cfg.tuner.eval_every = 4;
  const auto result = tune_experiment(cfg, shared_index(), {});
  const auto window = probe_window_steps(cfg);
  bool seqlen_ok = false;
  bool T_ok = false;
  for (const auto& t : result.trials) {
    CHECK(t.cost_steps <= window);
    if (t.parameter == "seqlen_s" && t.value == result.chosen_seqlen_s) seqlen_ok = !t.fluctuated;
    if (t.parameter == "T" && t.value == result.chosen_T) T_ok = !t.fluctuated;
  }
  CHECK(seqlen_ok);
  CHECK(T_ok);
  CHECK((result.chosen_T - 10) % 4 == 0);
}
