#pragma once

#include <cstdint>
#include <filesystem>

#include "slw/model.hpp"
#include "slw/optimizer.hpp"

namespace slw {

inline constexpr char kCheckpointMagic[4] = {'S', 'Q', 'W', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  GptParameters<double> params;
  AdamState adam;
  std::int64_t step = 0;
  std::int64_t tokens_consumed = 0;
};

/// Layout (all little-endian):
///   "SQWM", u32 version
///   ModelConfig: u32 n_layers, hidden, n_heads, vocab, max_seqlen; u8 tied; u64 init_seed; f64 init_std, ln_eps
///   u64 tensor count, then per tensor: u64 name length, name bytes, u64 rank, u64 dims[rank], f64 data
///   optimizer: f64 beta1, beta2, eps, weight_decay; u8 decoupled; u64 t;
///              u64 tensor count, tensors "m/<name>" then "v/<name>" in the same encoding
///   u64 step, u64 tokens_consumed
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace slw
