#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slw/tensor/dense.hpp"

namespace slw {

inline constexpr int kByteVocab = 256;

std::vector<std::int32_t> tokenize_bytes(std::string_view text);
std::string detokenize_bytes(std::span<const std::int32_t> tokens);

/// Reads each file as raw bytes and concatenates them.
std::string read_corpus(std::span<const std::filesystem::path> paths);

/// Token stream cut into non-overlapping full-length windows. The trailing
/// val windows are held out; training windows are shuffled per epoch.
struct CorpusIndex {
  std::vector<std::int32_t> tokens;
  std::int64_t window = 0;
  std::int64_t n_train = 0;
  std::int64_t n_val = 0;
  std::uint64_t shuffle_seed = 0;

  std::int64_t n_windows() const { return n_train + n_val; }
  std::int64_t train_start(std::int64_t i) const { return i * window; }
  std::int64_t val_start(std::int64_t i) const { return (n_train + i) * window; }
};

/// Throws DataError when there are fewer than 2 * seqlen_e tokens.
CorpusIndex build_index(std::vector<std::int32_t> tokens, std::int64_t seqlen_e, double val_fraction,
                        std::uint64_t seed);

struct Batch {
  TokenMatrix tokens;  // [batch x length]
  std::int64_t step = 0;
  std::int64_t length() const { return tokens.cols(); }
  std::int64_t batch_size() const { return tokens.rows(); }
};

/// Order in which training windows are visited during `epoch`. Depends only on
/// (seed, epoch), so any position of the stream can be addressed directly.
std::vector<std::int64_t> epoch_permutation(std::uint64_t seed, std::int64_t epoch, std::int64_t n_train);

/// The batch whose first window is number `cursor` of the epoch-concatenated
/// stream, truncated to its first `length` tokens; the dropped tail is not reused.
Batch batch_at(const CorpusIndex& index, std::int64_t cursor, std::int64_t batch_size, std::int64_t length,
               std::int64_t step = 0);

/// Sequential reader over the training stream that caches the current epoch's order.
class BatchSampler {
 public:
  explicit BatchSampler(const CorpusIndex& index, std::int64_t cursor = 0);

  Batch next_batch(std::int64_t batch_size, std::int64_t length, std::int64_t step);
  std::int64_t cursor() const { return cursor_; }

 private:
  const std::vector<std::int64_t>& order(std::int64_t epoch);

  const CorpusIndex* index_;
  std::int64_t cursor_;
  std::int64_t cached_epoch_ = -1;
  std::vector<std::int64_t> cached_order_;
};

/// Validation windows in index order, batch_size at a time, always full length.
std::vector<Batch> validation_batches(const CorpusIndex& index, std::int64_t batch_size);

/// Deterministic pseudo-English text: Zipf-distributed words, sentences with a
/// small grammar, and paragraph topics that recur so longer context helps.
std::string synthetic_corpus(std::size_t bytes, std::uint64_t seed);

}  // namespace slw
