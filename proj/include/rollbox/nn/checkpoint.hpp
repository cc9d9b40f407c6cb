#ifndef ROLLBOX_NN_CHECKPOINT_HPP_
#define ROLLBOX_NN_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rollbox/core/checksum.hpp"
#include "rollbox/nn/adam.hpp"

namespace rollbox::nn {

// Binary layout, all integers little-endian:
//   "RBXCKPT\0" | u32 version | str descriptor | u64 step | str source |
//   u32 count | count x (str name | u32 rank | rank x u32 dim | f64 values...) |
//   u8 has_optimizer [ f64 lr beta1 beta2 eps | u64 step | m blobs | v blobs ] |
//   u32 crc32 of everything before it
// where str = u32 length + bytes.
inline constexpr char kCheckpointMagic[8] = {'R', 'B', 'X', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParamBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
  friend bool operator==(const ParamBlob&, const ParamBlob&) = default;
};

struct Checkpoint {
  std::string descriptor;  // spec the parameters belong to
  std::uint64_t step = 0;
  std::string source;      // run that produced it
  std::vector<ParamBlob> params;
  std::optional<AdamState> optimizer;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw Error("checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  detail::Writer w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.str(c.descriptor);
  w.u64(c.step);
  w.str(c.source);
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  for (const auto& p : c.params) {
    if (numel(p.shape) != p.values.size()) throw Error("parameter '" + p.name + "' size does not match its shape");
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.values) w.f64(v);
  }
  w.u8(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    const AdamState& s = *c.optimizer;
    if (s.m.size() != c.params.size() || s.v.size() != c.params.size()) throw Error("optimizer state does not match parameters");
    w.f64(s.config.lr);
    w.f64(s.config.beta1);
    w.f64(s.config.beta2);
    w.f64(s.config.eps);
    w.u64(s.step);
    for (const auto* moments : {&s.m, &s.v}) {
      for (std::size_t k = 0; k < moments->size(); ++k) {
        if ((*moments)[k].size() != c.params[k].values.size()) throw Error("optimizer state does not match parameters");
        for (double v : (*moments)[k]) w.f64(v);
      }
    }
  }
  const std::uint32_t crc = crc32_of(std::span<const std::uint8_t>(w.buffer()));
  w.u32(crc);
  return std::move(w.buffer());
}

inline Checkpoint deserialize(std::span<const std::uint8_t> data) {
  if (data.size() < sizeof(kCheckpointMagic) + 4 || std::memcmp(data.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw Error("not a checkpoint file");
  }
  const std::size_t body = data.size() - 4;
  detail::Reader tail(data.subspan(body));
  if (tail.u32() != crc32_of(data.first(body))) throw Error("checkpoint checksum mismatch");

  detail::Reader r(data.first(body));
  for (std::size_t i = 0; i < sizeof(kCheckpointMagic); ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.descriptor = r.str();
  c.step = r.u64();
  c.source = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    ParamBlob p;
    p.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw Error("checkpoint parameter rank too large");
    for (std::uint32_t d = 0; d < rank; ++d) p.shape.push_back(static_cast<int>(r.u32()));
    const std::size_t n = numel(p.shape);
    r.need(n * 8);
    p.values.resize(n);
    for (double& v : p.values) v = r.f64();
    c.params.push_back(std::move(p));
  }
  if (r.u8()) {
    AdamState s;
    s.config.lr = r.f64();
    s.config.beta1 = r.f64();
    s.config.beta2 = r.f64();
    s.config.eps = r.f64();
    s.step = r.u64();
    for (auto* moments : {&s.m, &s.v}) {
      for (const auto& p : c.params) {
        r.need(p.values.size() * 8);
        std::vector<double> buf(p.values.size());
        for (double& v : buf) v = r.f64();
        moments->push_back(std::move(buf));
      }
    }
    c.optimizer = std::move(s);
  }
  if (r.pos() != body) throw Error("checkpoint has trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

// Snapshot of a parameter list.
inline std::vector<ParamBlob> capture(const ParamList& params) {
  std::vector<ParamBlob> out;
  for (const auto& p : params) out.push_back({p.name, p.tensor.shape(), p.tensor.values()});
  return out;
}

// Writes blobs whose names start with `prefix` into `params` (matched by
// name after stripping the prefix). Every parameter must be covered.
inline void restore(const std::vector<ParamBlob>& blobs, ParamList& params, const std::string& prefix = "") {
  for (auto& p : params) {
    const ParamBlob* found = nullptr;
    for (const auto& b : blobs) {
      if (b.name == prefix + p.name) found = &b;
    }
    if (!found) throw Error("checkpoint/spec mismatch: missing parameter '" + prefix + p.name + "'");
    if (found->shape != p.tensor.shape()) {
      throw Error("checkpoint/spec mismatch: parameter '" + found->name + "' has shape " + shape_str(found->shape) +
                  ", expected " + shape_str(p.tensor.shape()));
    }
    p.tensor.values() = found->values;
  }
}

}  // namespace rollbox::nn

#endif  // ROLLBOX_NN_CHECKPOINT_HPP_
