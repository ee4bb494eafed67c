#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "slw/errors.hpp"
#include "slw/tensor/ops.hpp"

namespace slw {

/// Shape of a GPT-2 style decoder.
struct ModelConfig {
  int n_layers = 4;
  int hidden = 128;
  int n_heads = 4;
  int vocab = 256;
  int max_seqlen = 256;
  bool tied_output = true;
  std::uint64_t init_seed = 0;
  double init_std = 0.02;
  double ln_eps = 1e-5;

  bool operator==(const ModelConfig&) const = default;
};

/// Appends a message for every broken invariant.
void collect_problems(const ModelConfig& config, std::vector<std::string>& problems);
void validate(const ModelConfig& config);

struct ParameterSpec {
  std::string name;
  Index rows;
  Index cols;
  enum class Init { normal, zeros, ones } init;
};

/// Names, shapes and initialisers of every parameter tensor, in storage order:
/// wte, wpe, then per block ln_1, attn.qkv, attn.proj, ln_2, mlp.fc, mlp.proj,
/// then ln_f and (when untied) lm_head.
std::vector<ParameterSpec> parameter_layout(const ModelConfig& config);

/// Closed form: V*H + L*H + layers*(12H^2 + 13H) + 2H, plus V*H when the output is untied.
/// Per block: qkv 3H^2+3H, proj H^2+H, fc 4H^2+4H, fc2 4H^2+H, two norms 4H.
std::int64_t count_parameters(const ModelConfig& config);

template <typename Scalar>
struct GptParameters {
  ModelConfig config;
  std::vector<NamedMatrix<Scalar>> tensors;

  std::int64_t element_count() const {
    std::int64_t n = 0;
    for (const auto& t : tensors) n += t.value.size();
    return n;
  }

  template <typename Other>
  GptParameters<Other> cast() const {
    GptParameters<Other> out{config, {}};
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.value.template cast<Other>()});
    return out;
  }
};

/// Normal(0, init_std) weights, zero biases, unit norm gains; a pure function of init_seed.
template <typename Scalar>
GptParameters<Scalar> init_parameters(const ModelConfig& config) {
  validate(config);
  GptParameters<Scalar> params{config, {}};
  std::mt19937_64 rng(config.init_seed);
  std::normal_distribution<double> normal(0.0, config.init_std);
  for (const auto& spec : parameter_layout(config)) {
    MatrixX<Scalar> m(spec.rows, spec.cols);
    switch (spec.init) {
      case ParameterSpec::Init::normal:
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(normal(rng));
        break;
      case ParameterSpec::Init::zeros:
        m.setZero();
        break;
      case ParameterSpec::Init::ones:
        m.setOnes();
        break;
    }
    params.tensors.push_back({spec.name, std::move(m)});
  }
  return params;
}

/// Next-token logits for a [batch x length] token block, stored as
/// [(batch*length) x vocab] with row b*length + i for position i of sequence b.
template <typename Scalar>
struct Logits {
  Index batch = 0;
  Index length = 0;
  MatrixX<Scalar> values;

  auto at(Index b, Index i) const { return values.row(b * length + i); }
};

template <typename Scalar>
struct LossAndGradients {
  Scalar loss;
  std::vector<MatrixX<Scalar>> gradients;  // aligned with GptParameters::tensors
};

namespace detail {

inline void check_tokens(const ModelConfig& config, const TokenMatrix& tokens) {
  if (tokens.cols() > config.max_seqlen) {
    throw SequenceLengthError("forward: sequence length " + std::to_string(tokens.cols()) +
                              " exceeds max_seqlen " + std::to_string(config.max_seqlen));
  }
  if (tokens.rows() < 1 || tokens.cols() < 1) throw DimensionError("forward: empty token block");
  for (Index i = 0; i < tokens.size(); ++i) {
    const auto t = tokens.data()[i];
    if (t < 0 || t >= config.vocab) {
      throw IndexError("forward: token " + std::to_string(t) + " outside [0, " +
                       std::to_string(config.vocab) + ")");
    }
  }
}

/// Builds the decoder up to the final layer norm; returns [(B*L) x H] hidden states.
template <typename Scalar>
Var<Scalar> decoder_hidden(const std::vector<Var<Scalar>>& p, const ModelConfig& cfg,
                           const TokenMatrix& tokens) {
  const Index batch = tokens.rows();
  const Index length = tokens.cols();
  std::vector<std::int32_t> positions(static_cast<std::size_t>(batch * length));
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < length; ++i) positions[static_cast<std::size_t>(b * length + i)] = static_cast<std::int32_t>(i);
  }
  std::span<const std::int32_t> ids(tokens.data(), static_cast<std::size_t>(tokens.size()));
  Var<Scalar> x = add(embedding(p[0], ids), embedding(p[1], std::span<const std::int32_t>(positions)));
  const Scalar eps = static_cast<Scalar>(cfg.ln_eps);
  std::size_t k = 2;
  for (int layer = 0; layer < cfg.n_layers; ++layer, k += 12) {
    Var<Scalar> h = layer_norm(x, p[k], p[k + 1], eps);
    Var<Scalar> qkv = add_bias(matmul(h, p[k + 2]), p[k + 3]);
    Var<Scalar> att = causal_self_attention(qkv, batch, length, static_cast<Index>(cfg.n_heads));
    x = add(x, add_bias(matmul(att, p[k + 4]), p[k + 5]));
    Var<Scalar> h2 = layer_norm(x, p[k + 6], p[k + 7], eps);
    Var<Scalar> f = gelu(add_bias(matmul(h2, p[k + 8]), p[k + 9]));
    x = add(x, add_bias(matmul(f, p[k + 10]), p[k + 11]));
  }
  return layer_norm(x, p[k], p[k + 1], eps);
}

template <typename Scalar>
Var<Scalar> output_projection(const std::vector<Var<Scalar>>& p, const ModelConfig& cfg, Var<Scalar> hidden) {
  const Var<Scalar>& table = cfg.tied_output ? p[0] : p.back();
  return matmul(hidden, transpose(table));
}

template <typename Scalar>
std::vector<Var<Scalar>> bind_parameters(Graph<Scalar>& g, const GptParameters<Scalar>& params, bool trainable) {
  std::vector<Var<Scalar>> vars;
  vars.reserve(params.tensors.size());
  for (const auto& t : params.tensors) vars.push_back(g.leaf(t.value, trainable));
  return vars;
}

template <typename Scalar>
Var<Scalar> next_token_loss(const std::vector<Var<Scalar>>& vars, const ModelConfig& cfg,
                            const TokenMatrix& tokens) {
  const Index batch = tokens.rows();
  const Index length = tokens.cols();
  if (length < 2) {
    throw ContractError("loss_on_batch: need at least 2 tokens per row to form a prediction, got " +
                        std::to_string(length));
  }
  Var<Scalar> hidden = decoder_hidden(vars, cfg, tokens);
  std::vector<std::int32_t> rows;
  std::vector<std::int32_t> targets;
  rows.reserve(static_cast<std::size_t>(batch * (length - 1)));
  targets.reserve(rows.capacity());
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i + 1 < length; ++i) {
      rows.push_back(static_cast<std::int32_t>(b * length + i));
      targets.push_back(tokens(b, i + 1));
    }
  }
  Var<Scalar> selected = gather_rows(hidden, std::span<const std::int32_t>(rows));
  return cross_entropy(output_projection(vars, cfg, selected), std::span<const std::int32_t>(targets));
}

}  // namespace detail

/// Causal next-token logits. Position i depends only on tokens 0..i.
template <typename Scalar>
Logits<Scalar> forward(const GptParameters<Scalar>& params, const TokenMatrix& tokens) {
  detail::check_tokens(params.config, tokens);
  Graph<Scalar> g;
  auto vars = detail::bind_parameters(g, params, false);
  Var<Scalar> hidden = detail::decoder_hidden(vars, params.config, tokens);
  Var<Scalar> logits = detail::output_projection(vars, params.config, hidden);
  return Logits<Scalar>{tokens.rows(), tokens.cols(), logits.value()};
}

/// Mean next-token cross-entropy over all batch*(length-1) predictions.
template <typename Scalar>
Scalar loss_on_batch(const GptParameters<Scalar>& params, const TokenMatrix& tokens) {
  detail::check_tokens(params.config, tokens);
  Graph<Scalar> g;
  auto vars = detail::bind_parameters(g, params, false);
  return detail::next_token_loss(vars, params.config, tokens).value()(0, 0);
}

template <typename Scalar>
LossAndGradients<Scalar> loss_and_gradients(const GptParameters<Scalar>& params, const TokenMatrix& tokens) {
  detail::check_tokens(params.config, tokens);
  Graph<Scalar> g;
  auto vars = detail::bind_parameters(g, params, true);
  Var<Scalar> loss = detail::next_token_loss(vars, params.config, tokens);
  g.backward(loss);
  LossAndGradients<Scalar> out{loss.value()(0, 0), {}};
  out.gradients.reserve(vars.size());
  for (const auto& v : vars) out.gradients.push_back(v.grad());
  return out;
}

/// Greedy continuation of a single prompt. Smoke-test quality only.
std::vector<std::int32_t> greedy_generate(const GptParameters<double>& params, std::vector<std::int32_t> prompt,
                                          int new_tokens);

}  // namespace slw
