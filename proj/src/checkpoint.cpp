#include "slw/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "slw/errors.hpp"

namespace slw {

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
  }

  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

  void uint(std::uint64_t v, int width) {
    unsigned char buf[8];
    for (int i = 0; i < width; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, static_cast<std::size_t>(width));
  }
  void u8(std::uint8_t v) { uint(v, 1); }
  void u32(std::uint32_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void tensor(const std::string& name, const Matrix& m) {
    u64(name.size());
    bytes(name.data(), name.size());
    u64(2);
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }

  void finish() {
    out_.flush();
    if (!out_) throw Error("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw FormatError(path_ + ": cannot open checkpoint");
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(path_ + ": truncated checkpoint");
  }

  std::uint64_t uint(int width) {
    unsigned char buf[8] = {};
    bytes(buf, static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }

  NamedMatrix<double> tensor() {
    const auto len = u64();
    if (len > (1u << 20)) throw FormatError(path_ + ": implausible tensor name length");
    std::string name(len, '\0');
    bytes(name.data(), len);
    const auto rank = u64();
    if (rank != 2) throw FormatError(path_ + ": tensor " + name + " has rank " + std::to_string(rank) + ", expected 2");
    const auto rows = static_cast<Index>(u64());
    const auto cols = static_cast<Index>(u64());
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return {std::move(name), std::move(m)};
  }

  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  const ModelConfig& c = ckpt.params.config;
  w.u32(static_cast<std::uint32_t>(c.n_layers));
  w.u32(static_cast<std::uint32_t>(c.hidden));
  w.u32(static_cast<std::uint32_t>(c.n_heads));
  w.u32(static_cast<std::uint32_t>(c.vocab));
  w.u32(static_cast<std::uint32_t>(c.max_seqlen));
  w.u8(c.tied_output ? 1 : 0);
  w.u64(c.init_seed);
  w.f64(c.init_std);
  w.f64(c.ln_eps);
  w.u64(ckpt.params.tensors.size());
  for (const auto& t : ckpt.params.tensors) w.tensor(t.name, t.value);

  const AdamConfig& h = ckpt.adam.hyper;
  w.f64(h.beta1);
  w.f64(h.beta2);
  w.f64(h.eps);
  w.f64(h.weight_decay);
  w.u8(h.decoupled_weight_decay ? 1 : 0);
  w.u64(static_cast<std::uint64_t>(ckpt.adam.t));
  w.u64(ckpt.adam.m.size() + ckpt.adam.v.size());
  for (std::size_t i = 0; i < ckpt.adam.m.size(); ++i) w.tensor("m/" + ckpt.params.tensors.at(i).name, ckpt.adam.m[i]);
  for (std::size_t i = 0; i < ckpt.adam.v.size(); ++i) w.tensor("v/" + ckpt.params.tensors.at(i).name, ckpt.adam.v[i]);
  w.u64(static_cast<std::uint64_t>(ckpt.step));
  w.u64(static_cast<std::uint64_t>(ckpt.tokens_consumed));
  w.finish();
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError(r.path() + ": bad magic, not a checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(r.path() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ModelConfig& c = ck.params.config;
  c.n_layers = static_cast<int>(r.u32());
  c.hidden = static_cast<int>(r.u32());
  c.n_heads = static_cast<int>(r.u32());
  c.vocab = static_cast<int>(r.u32());
  c.max_seqlen = static_cast<int>(r.u32());
  c.tied_output = r.u8() != 0;
  c.init_seed = r.u64();
  c.init_std = r.f64();
  c.ln_eps = r.f64();
  const auto n = r.u64();
  const auto layout = parameter_layout(c);
  if (n != layout.size()) throw FormatError(r.path() + ": tensor count does not match the model config");
  for (std::uint64_t i = 0; i < n; ++i) {
    auto t = r.tensor();
    const auto& spec = layout[i];
    if (t.name != spec.name || t.value.rows() != spec.rows || t.value.cols() != spec.cols) {
      throw FormatError(r.path() + ": tensor " + t.name + " does not match expected " + spec.name);
    }
    ck.params.tensors.push_back(std::move(t));
  }
  AdamConfig& h = ck.adam.hyper;
  h.beta1 = r.f64();
  h.beta2 = r.f64();
  h.eps = r.f64();
  h.weight_decay = r.f64();
  h.decoupled_weight_decay = r.u8() != 0;
  ck.adam.t = static_cast<std::int64_t>(r.u64());
  const auto moments = r.u64();
  if (moments != 2 * n) throw FormatError(r.path() + ": optimizer state tensor count mismatch");
  for (std::uint64_t i = 0; i < moments; ++i) {
    auto t = r.tensor();
    (i < n ? ck.adam.m : ck.adam.v).push_back(std::move(t.value));
  }
  ck.step = static_cast<std::int64_t>(r.u64());
  ck.tokens_consumed = static_cast<std::int64_t>(r.u64());
  return ck;
}

}  // namespace slw
