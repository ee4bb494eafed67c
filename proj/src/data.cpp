#include "slw/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "slw/errors.hpp"

namespace slw {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::int32_t> tokenize_bytes(std::string_view text) {
  std::vector<std::int32_t> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<std::int32_t>(c));
  return out;
}

std::string detokenize_bytes(std::span<const std::int32_t> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (auto t : tokens) {
    if (t < 0 || t >= kByteVocab) throw IndexError("detokenize_bytes: id " + std::to_string(t) + " is not a byte");
    out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return out;
}

std::string read_corpus(std::span<const std::filesystem::path> paths) {
  std::string out;
  for (const auto& p : paths) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file " + p.string());
    out.append(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

CorpusIndex build_index(std::vector<std::int32_t> tokens, std::int64_t seqlen_e, double val_fraction,
                        std::uint64_t seed) {
  if (seqlen_e < 2) throw DataError("build_index: seqlen_e must be >= 2");
  const auto n = static_cast<std::int64_t>(tokens.size());
  if (n < 2 * seqlen_e) {
    throw DataError("build_index: corpus has " + std::to_string(n) + " tokens, need at least " +
                    std::to_string(2 * seqlen_e) + " (2 x seqlen_e)");
  }
  if (!(val_fraction >= 0 && val_fraction < 1)) throw DataError("build_index: val_fraction must lie in [0, 1)");
  const std::int64_t windows = n / seqlen_e;
  std::int64_t n_val = std::llround(static_cast<double>(windows) * val_fraction);
  if (val_fraction > 0) n_val = std::max<std::int64_t>(n_val, 1);
  n_val = std::min(n_val, windows - 1);
  CorpusIndex index;
  tokens.resize(static_cast<std::size_t>(windows * seqlen_e));
  index.tokens = std::move(tokens);
  index.window = seqlen_e;
  index.n_train = windows - n_val;
  index.n_val = n_val;
  index.shuffle_seed = seed;
  return index;
}

std::vector<std::int64_t> epoch_permutation(std::uint64_t seed, std::int64_t epoch, std::int64_t n_train) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
  for (std::int64_t i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(epoch))));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

void fill_row(const CorpusIndex& index, std::int64_t window, std::int64_t length, std::int32_t* dst) {
  const auto* src = index.tokens.data() + index.train_start(window);
  std::copy(src, src + length, dst);
}

void check_length(const CorpusIndex& index, std::int64_t length) {
  if (length < 2 || length > index.window) {
    throw ContractError("batch length " + std::to_string(length) + " outside [2, " + std::to_string(index.window) + "]");
  }
}

}  // namespace

Batch batch_at(const CorpusIndex& index, std::int64_t cursor, std::int64_t batch_size, std::int64_t length,
               std::int64_t step) {
  check_length(index, length);
  Batch batch{TokenMatrix(batch_size, length), step};
  std::int64_t epoch = -1;
  std::vector<std::int64_t> order;
  for (std::int64_t r = 0; r < batch_size; ++r) {
    const std::int64_t c = cursor + r;
    if (c / index.n_train != epoch) {
      epoch = c / index.n_train;
      order = epoch_permutation(index.shuffle_seed, epoch, index.n_train);
    }
    fill_row(index, order[static_cast<std::size_t>(c % index.n_train)], length, batch.tokens.data() + r * length);
  }
  return batch;
}

BatchSampler::BatchSampler(const CorpusIndex& index, std::int64_t cursor) : index_(&index), cursor_(cursor) {}

const std::vector<std::int64_t>& BatchSampler::order(std::int64_t epoch) {
  if (epoch != cached_epoch_) {
    cached_order_ = epoch_permutation(index_->shuffle_seed, epoch, index_->n_train);
    cached_epoch_ = epoch;
  }
  return cached_order_;
}

Batch BatchSampler::next_batch(std::int64_t batch_size, std::int64_t length, std::int64_t step) {
  check_length(*index_, length);
  Batch batch{TokenMatrix(batch_size, length), step};
  for (std::int64_t r = 0; r < batch_size; ++r, ++cursor_) {
    const auto& ord = order(cursor_ / index_->n_train);
    fill_row(*index_, ord[static_cast<std::size_t>(cursor_ % index_->n_train)], length,
             batch.tokens.data() + r * length);
  }
  return batch;
}

std::vector<Batch> validation_batches(const CorpusIndex& index, std::int64_t batch_size) {
  if (index.n_val < 1) throw DataError("validation_batches: index has no validation windows");
  if (batch_size < 1) throw ContractError("validation_batches: batch_size must be >= 1");
  std::vector<Batch> out;
  for (std::int64_t first = 0; first < index.n_val; first += batch_size) {
    const std::int64_t rows = std::min(batch_size, index.n_val - first);
    Batch b{TokenMatrix(rows, index.window), 0};
    for (std::int64_t r = 0; r < rows; ++r) {
      const auto* src = index.tokens.data() + index.val_start(first + r);
      std::copy(src, src + index.window, b.tokens.data() + r * index.window);
    }
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

class TextGenerator {
 public:
  explicit TextGenerator(std::uint64_t seed) : rng_(seed) {
    nouns_ = make_words(1200, 2, 3);
    verbs_ = make_words(400, 1, 3);
    adjectives_ = make_words(300, 2, 3);
    names_ = make_words(150, 2, 3);
    for (auto& n : names_) n[0] = static_cast<char>(n[0] - 'a' + 'A');
    noun_dist_ = zipf(nouns_.size());
    verb_dist_ = zipf(verbs_.size());
    adj_dist_ = zipf(adjectives_.size());
    name_dist_ = zipf(names_.size());
  }

  void paragraph(std::string& out) {
    const std::string hero = names_[name_dist_(rng_)];
    const std::string topic_a = nouns_[noun_dist_(rng_)];
    const std::string topic_b = nouns_[noun_dist_(rng_)];
    const int sentences = 3 + static_cast<int>(rng_() % 6);
    for (int s = 0; s < sentences; ++s) {
      if (s > 0) out += ' ';
      sentence(out, hero, topic_a, topic_b, s == 0);
    }
    out += "\n\n";
  }

 private:
  std::vector<std::string> make_words(std::size_t count, int min_syl, int max_syl) {
    static constexpr const char* onsets[] = {"b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r",
                                             "s", "t", "v", "w", "st", "tr", "pl", "gr", "sh", "ch", "br", "th"};
    static constexpr const char* vowels[] = {"a", "e", "i", "o", "u", "ea", "ou", "ai"};
    static constexpr const char* codas[] = {"", "", "", "n", "r", "s", "l", "t", "nd", "ck"};
    std::vector<std::string> words;
    while (words.size() < count) {
      const int syl = min_syl + static_cast<int>(rng_() % static_cast<std::uint64_t>(max_syl - min_syl + 1));
      std::string w;
      for (int i = 0; i < syl; ++i) {
        w += onsets[rng_() % std::size(onsets)];
        w += vowels[rng_() % std::size(vowels)];
      }
      w += codas[rng_() % std::size(codas)];
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(std::move(w));
    }
    return words;
  }

  static std::discrete_distribution<std::size_t> zipf(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), 1.1);
    return std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }

  const std::string& noun(const std::string& a, const std::string& b) {
    const auto r = rng_() % 10;
    if (r < 3) return a;
    if (r < 5) return b;
    return nouns_[noun_dist_(rng_)];
  }

  void noun_phrase(std::string& out, const std::string& a, const std::string& b) {
    out += (rng_() % 3 == 0) ? "a " : "the ";
    if (rng_() % 2 == 0) {
      out += adjectives_[adj_dist_(rng_)];
      out += ' ';
    }
    out += noun(a, b);
  }

  void sentence(std::string& out, const std::string& hero, const std::string& a, const std::string& b, bool first) {
    static constexpr const char* preps[] = {"with", "near", "under", "for", "from", "over", "beside"};
    static constexpr const char* links[] = {"and then", "because", "while", "but", "so"};
    std::string s;
    if (first || rng_() % 2 == 0) {
      s += hero;
    } else {
      s += (rng_() % 2 == 0) ? "She" : "He";
    }
    s += ' ';
    s += verbs_[verb_dist_(rng_)];
    s += "s ";
    noun_phrase(s, a, b);
    if (rng_() % 2 == 0) {
      s += ' ';
      s += preps[rng_() % std::size(preps)];
      s += ' ';
      noun_phrase(s, a, b);
    }
    if (rng_() % 3 == 0) {
      s += ", ";
      s += links[rng_() % std::size(links)];
      s += ' ';
      s += hero;
      s += ' ';
      s += verbs_[verb_dist_(rng_)];
      s += "s ";
      noun_phrase(s, a, b);
    }
    s += (rng_() % 8 == 0) ? '?' : '.';
    out += s;
  }

  std::mt19937_64 rng_;
  std::vector<std::string> nouns_, verbs_, adjectives_, names_;
  std::discrete_distribution<std::size_t> noun_dist_, verb_dist_, adj_dist_, name_dist_;
};

}  // namespace

std::string synthetic_corpus(std::size_t bytes, std::uint64_t seed) {
  TextGenerator gen(seed);
  std::string out;
  out.reserve(bytes + 4096);
  while (out.size() < bytes) gen.paragraph(out);
  out.resize(bytes);
  return out;
}

}  // namespace slw
