#include "slw/config.hpp"

#include <cstdio>
#include <fstream>

#include "slw/errors.hpp"

namespace slw {

json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = {{"n_layers", c.model.n_layers},     {"hidden", c.model.hidden},
                {"n_heads", c.model.n_heads},       {"vocab", c.model.vocab},
                {"max_seqlen", c.model.max_seqlen}, {"tied_output", c.model.tied_output},
                {"init_std", c.model.init_std},     {"ln_eps", c.model.ln_eps}};
  j["optimizer"] = {{"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"decoupled_weight_decay", c.optimizer.decoupled_weight_decay}};
  j["lr_schedule"] = {{"peak", c.lr_schedule.peak},
                      {"min_lr", c.lr_schedule.min_lr},
                      {"warmup", c.lr_schedule.warmup},
                      {"decay_horizon", c.lr_schedule.decay_horizon},
                      {"unit", to_string(c.lr_schedule.unit)}};
  j["method"] = to_string(c.method);
  j["pacing"] = {{"shape", to_string(c.pacing.shape)},
                 {"seqlen_s", c.pacing.seqlen_s},
                 {"T", c.pacing.duration},
                 {"root_degree", c.pacing.root_degree}};
  j["two_stage"] = {{"stage1_len", c.stage1_len}, {"switch_step", c.switch_step}};
  j["bsz_warmup"] = {{"start_bsz", c.bsz_warmup.start_bsz},
                     {"end_bsz", c.bsz_warmup.end_bsz},
                     {"ramp_tokens", c.bsz_warmup.ramp_tokens}};
  j["mixed_seqlen"] = {{"short_len", c.mixed.short_len}, {"period", c.mixed.period}, {"long_steps", c.mixed.long_steps}};
  j["batch_size"] = c.batch_size;
  j["target_tokens"] = c.target_tokens;
  j["max_steps"] = c.max_steps;
  j["clip_norm"] = c.clip_norm;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["val_batch_size"] = c.val_batch_size;
  j["data"] = {{"paths", c.data.paths},
               {"synthetic_bytes", c.data.synthetic_bytes},
               {"synthetic_seed", c.data.synthetic_seed},
               {"val_fraction", c.data.val_fraction}};
  j["tuner"] = {{"factor", c.tuner.factor},
                {"window_multiple", c.tuner.window_multiple},
                {"window_steps", c.tuner.window_steps},
                {"eval_every", c.tuner.eval_every},
                {"seqlen_candidates", c.tuner.seqlen_candidates},
                {"T_lo", c.tuner.T_lo},
                {"T_hi", c.tuner.T_hi},
                {"seeds", c.tuner.seeds}};
  return j;
}

json default_config_json() { return to_json(ExperimentConfig{}); }

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  const json& m = j.at("model");
  c.model.n_layers = m.at("n_layers").get<int>();
  c.model.hidden = m.at("hidden").get<int>();
  c.model.n_heads = m.at("n_heads").get<int>();
  c.model.vocab = m.at("vocab").get<int>();
  c.model.max_seqlen = m.at("max_seqlen").get<int>();
  c.model.tied_output = m.at("tied_output").get<bool>();
  c.model.init_std = m.at("init_std").get<double>();
  c.model.ln_eps = m.at("ln_eps").get<double>();
  const json& o = j.at("optimizer");
  c.optimizer.beta1 = o.at("beta1").get<double>();
  c.optimizer.beta2 = o.at("beta2").get<double>();
  c.optimizer.eps = o.at("eps").get<double>();
  c.optimizer.weight_decay = o.at("weight_decay").get<double>();
  c.optimizer.decoupled_weight_decay = o.at("decoupled_weight_decay").get<bool>();
  const json& l = j.at("lr_schedule");
  c.lr_schedule.peak = l.at("peak").get<double>();
  c.lr_schedule.min_lr = l.at("min_lr").get<double>();
  c.lr_schedule.warmup = l.at("warmup").get<double>();
  c.lr_schedule.decay_horizon = l.at("decay_horizon").get<double>();
  c.lr_schedule.unit = parse_schedule_unit(l.at("unit").get<std::string>());
  c.method = parse_method(j.at("method").get<std::string>());
  const json& p = j.at("pacing");
  c.pacing.shape = parse_pacing_shape(p.at("shape").get<std::string>());
  c.pacing.seqlen_s = p.at("seqlen_s").get<std::int64_t>();
  c.pacing.duration = p.at("T").get<std::int64_t>();
  c.pacing.root_degree = p.at("root_degree").get<double>();
  c.stage1_len = j.at("two_stage").at("stage1_len").get<std::int64_t>();
  c.switch_step = j.at("two_stage").at("switch_step").get<std::int64_t>();
  const json& b = j.at("bsz_warmup");
  c.bsz_warmup.start_bsz = b.at("start_bsz").get<std::int64_t>();
  c.bsz_warmup.end_bsz = b.at("end_bsz").get<std::int64_t>();
  c.bsz_warmup.ramp_tokens = b.at("ramp_tokens").get<std::int64_t>();
  const json& x = j.at("mixed_seqlen");
  c.mixed.short_len = x.at("short_len").get<std::int64_t>();
  c.mixed.period = x.at("period").get<std::int64_t>();
  c.mixed.long_steps = x.at("long_steps").get<std::int64_t>();
  c.batch_size = j.at("batch_size").get<std::int64_t>();
  c.target_tokens = j.at("target_tokens").get<std::int64_t>();
  c.max_steps = j.at("max_steps").get<std::int64_t>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.model.init_seed = c.seed;
  c.eval_every = j.at("eval_every").get<std::int64_t>();
  c.val_batch_size = j.at("val_batch_size").get<std::int64_t>();
  const json& d = j.at("data");
  c.data.paths = d.at("paths").get<std::vector<std::string>>();
  c.data.synthetic_bytes = d.at("synthetic_bytes").get<std::int64_t>();
  c.data.synthetic_seed = d.at("synthetic_seed").get<std::uint64_t>();
  c.data.val_fraction = d.at("val_fraction").get<double>();
  const json& t = j.at("tuner");
  c.tuner.factor = t.at("factor").get<double>();
  c.tuner.window_multiple = t.at("window_multiple").get<std::int64_t>();
  c.tuner.window_steps = t.at("window_steps").get<std::int64_t>();
  c.tuner.eval_every = t.at("eval_every").get<std::int64_t>();
  c.tuner.seqlen_candidates = t.at("seqlen_candidates").get<std::vector<std::int64_t>>();
  c.tuner.T_lo = t.at("T_lo").get<std::int64_t>();
  c.tuner.T_hi = t.at("T_hi").get<std::int64_t>();
  c.tuner.seeds = t.at("seeds").get<std::vector<std::uint64_t>>();
  return c;
}

namespace {

std::string type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool compatible(const json& schema, const json& value) {
  if (schema.is_boolean()) return value.is_boolean();
  if (schema.is_number_integer()) {
    if (value.is_number_integer()) return !(schema.is_number_unsigned() && value.get<std::int64_t>() < 0);
    return value.is_number_float() && value.get<double>() == static_cast<double>(static_cast<std::int64_t>(value.get<double>()));
  }
  if (schema.is_number()) return value.is_number();
  if (schema.is_string()) return value.is_string();
  if (schema.is_array()) return value.is_array();
  if (schema.is_object()) return value.is_object();
  return false;
}

json coerce(const json& schema, const json& value) {
  if (schema.is_number_integer() && value.is_number_float()) {
    return schema.is_number_unsigned() ? json(static_cast<std::uint64_t>(value.get<double>()))
                                       : json(static_cast<std::int64_t>(value.get<double>()));
  }
  if (schema.is_number_float() && value.is_number_integer()) return json(value.get<double>());
  return value;
}

void merge_into(json& target, const json& user, const std::string& prefix, std::vector<std::string>& problems) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!target.contains(it.key())) {
      problems.push_back("unknown key '" + key + "'");
      continue;
    }
    json& slot = target[it.key()];
    if (!compatible(slot, it.value())) {
      problems.push_back("type mismatch at '" + key + "': expected " + type_name(slot) + ", got " +
                         type_name(it.value()));
      continue;
    }
    if (slot.is_object()) {
      merge_into(slot, it.value(), key, problems);
    } else {
      slot = coerce(slot, it.value());
    }
  }
}

void apply_override(json& doc, const std::string& assignment, std::vector<std::string>& problems) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    problems.push_back("override '" + assignment + "' is not of the form key=value");
    return;
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* slot = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!slot->is_object() || !slot->contains(part)) {
      problems.push_back("override references unknown key '" + key + "'");
      return;
    }
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!compatible(*slot, value)) {
    problems.push_back("type mismatch in override '" + key + "': expected " + type_name(*slot) + ", got " +
                       type_name(value));
    return;
  }
  if (slot->is_object()) {
    merge_into(*slot, value, key, problems);
  } else {
    *slot = coerce(*slot, value);
  }
}

}  // namespace

ResolvedConfig resolve_config(const json& user, std::span<const std::string> overrides) {
  std::vector<std::string> problems;
  json doc = default_config_json();
  if (!user.is_object()) {
    throw ConfigError("configuration must be a JSON object");
  }
  merge_into(doc, user, "", problems);
  for (const auto& o : overrides) apply_override(doc, o, problems);
  if (!problems.empty()) throw ConfigError(problems);
  ExperimentConfig config;
  try {
    config = config_from_json(doc);
  } catch (const ConfigError& e) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  auto invariant_problems = collect_problems(config);
  if (!invariant_problems.empty()) throw ConfigError(invariant_problems);
  return {std::move(doc), std::move(config)};
}

ResolvedConfig load_config_file(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file '" + path.string() + "' is not valid JSON");
  if (doc.is_object() && doc.contains("resolved_config")) doc = doc.at("resolved_config");
  return resolve_config(doc, overrides);
}

std::string config_hash(const json& document) {
  const std::string text = document.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json to_json(const InstabilitySummary& s) {
  return {{"count_above", s.count_above}, {"fraction", s.fraction}, {"max_ratio", s.max_ratio}};
}

json to_json(const RunSummary& s) {
  json j = {{"steps", s.steps},
            {"tokens_consumed", s.tokens_consumed},
            {"diverged", s.diverged},
            {"final_train_loss", s.final_train_loss},
            {"instability_1_2", to_json(s.instability_1_2)},
            {"instability_1_5", to_json(s.instability_1_5)},
            {"wall_time_s", s.wall_time_s}};
  j["final_val_ppl"] = s.final_val_ppl ? json(*s.final_val_ppl) : json(nullptr);
  j["best_val_ppl"] = s.best_val_ppl ? json(*s.best_val_ppl) : json(nullptr);
  if (s.diverged) j["divergence_reason"] = s.divergence_reason;
  return j;
}

}  // namespace slw
