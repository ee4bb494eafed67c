#include "slw/model.hpp"

#include <algorithm>

namespace slw {

void collect_problems(const ModelConfig& c, std::vector<std::string>& problems) {
  if (c.n_layers < 0) problems.push_back("model.n_layers must be >= 0");
  if (c.hidden < 1) problems.push_back("model.hidden must be >= 1");
  if (c.n_heads < 1) {
    problems.push_back("model.n_heads must be >= 1");
  } else if (c.hidden % c.n_heads != 0) {
    problems.push_back("model.hidden (" + std::to_string(c.hidden) + ") must be divisible by model.n_heads (" +
                       std::to_string(c.n_heads) + ")");
  }
  if (c.vocab < 2) problems.push_back("model.vocab must be >= 2");
  if (c.max_seqlen < 8 || c.max_seqlen % 8 != 0) {
    problems.push_back("model.max_seqlen (" + std::to_string(c.max_seqlen) +
                       ") must be >= 8 and a multiple of the sequence-length granularity 8");
  }
  if (!(c.init_std > 0)) problems.push_back("model.init_std must be > 0");
  if (!(c.ln_eps > 0)) problems.push_back("model.ln_eps must be > 0");
}

void validate(const ModelConfig& config) {
  std::vector<std::string> problems;
  collect_problems(config, problems);
  if (!problems.empty()) throw ConfigError(problems);
}

std::vector<ParameterSpec> parameter_layout(const ModelConfig& c) {
  using Init = ParameterSpec::Init;
  const Index h = c.hidden;
  std::vector<ParameterSpec> specs;
  specs.push_back({"wte", c.vocab, h, Init::normal});
  specs.push_back({"wpe", c.max_seqlen, h, Init::normal});
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    specs.push_back({p + "ln_1.gain", 1, h, Init::ones});
    specs.push_back({p + "ln_1.bias", 1, h, Init::zeros});
    specs.push_back({p + "attn.qkv.weight", h, 3 * h, Init::normal});
    specs.push_back({p + "attn.qkv.bias", 1, 3 * h, Init::zeros});
    specs.push_back({p + "attn.proj.weight", h, h, Init::normal});
    specs.push_back({p + "attn.proj.bias", 1, h, Init::zeros});
    specs.push_back({p + "ln_2.gain", 1, h, Init::ones});
    specs.push_back({p + "ln_2.bias", 1, h, Init::zeros});
    specs.push_back({p + "mlp.fc.weight", h, 4 * h, Init::normal});
    specs.push_back({p + "mlp.fc.bias", 1, 4 * h, Init::zeros});
    specs.push_back({p + "mlp.proj.weight", 4 * h, h, Init::normal});
    specs.push_back({p + "mlp.proj.bias", 1, h, Init::zeros});
  }
  specs.push_back({"ln_f.gain", 1, h, Init::ones});
  specs.push_back({"ln_f.bias", 1, h, Init::zeros});
  if (!c.tied_output) specs.push_back({"lm_head", c.vocab, h, Init::normal});
  return specs;
}

std::int64_t count_parameters(const ModelConfig& c) {
  const std::int64_t h = c.hidden;
  const std::int64_t v = c.vocab;
  const std::int64_t per_layer = 12 * h * h + 13 * h;
  std::int64_t n = v * h + std::int64_t{c.max_seqlen} * h + c.n_layers * per_layer + 2 * h;
  if (!c.tied_output) n += v * h;
  return n;
}

std::vector<std::int32_t> greedy_generate(const GptParameters<double>& params, std::vector<std::int32_t> prompt,
                                          int new_tokens) {
  if (prompt.empty()) throw ContractError("greedy_generate: empty prompt");
  for (int step = 0; step < new_tokens; ++step) {
    const std::size_t window = std::min<std::size_t>(prompt.size(), static_cast<std::size_t>(params.config.max_seqlen));
    TokenMatrix tokens(1, static_cast<Index>(window));
    std::copy(prompt.end() - static_cast<std::ptrdiff_t>(window), prompt.end(), tokens.data());
    const auto logits = forward(params, tokens);
    Index best = 0;
    logits.at(0, tokens.cols() - 1).maxCoeff(&best);
    prompt.push_back(static_cast<std::int32_t>(best));
  }
  return prompt;
}

}  // namespace slw
