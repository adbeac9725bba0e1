#pragma once

#include <bit>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/events.hpp"
#include "hsnn/module.hpp"
#include "hsnn/pipeline/config.hpp"

namespace hsnn {

/// Raised on malformed checkpoint bytes; `position` is the byte offset.
class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(std::size_t position, const std::string& what) : std::runtime_error(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// CKP1: "CKP1" | digest u64 | step u64 | config_len u32 | config text |
/// count u32 | per tensor: name_len u32 | name | rank u32 | dims u64[rank] |
/// float32 values, row-major. Little-endian throughout.
struct Checkpoint {
  std::uint64_t digest = 0;
  std::uint64_t step = 0;
  std::string config_text;
  std::vector<NamedTensor> tensors;
};

namespace ckp1 {

inline std::vector<std::uint8_t> encode(const Checkpoint& c) {
  using evt1::detail::put;
  std::vector<std::uint8_t> out{'C', 'K', 'P', '1'};
  put<std::uint64_t>(out, c.digest);
  put<std::uint64_t>(out, c.step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.config_text.size()));
  out.insert(out.end(), c.config_text.begin(), c.config_text.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.values.size() != shape_numel(t.shape))
      throw std::invalid_argument("checkpoint: tensor " + t.name + " has inconsistent length");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    for (float v : t.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t pos() const { return pos_; }

  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n)
      throw CheckpointError(b_.size(), std::string("checkpoint truncated at byte ") + std::to_string(b_.size()) +
                                           " while reading " + what + " at offset " + std::to_string(pos_));
  }

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = evt1::detail::get<U>(b_.data() + pos_);
    pos_ += sizeof(U);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline Checkpoint decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'C' || bytes[1] != 'K' || bytes[2] != 'P' || bytes[3] != '1')
    throw CheckpointError(0, "checkpoint: bad magic (expected CKP1)");
  Reader r(bytes.subspan(0));
  r.str(4, "magic");
  Checkpoint c;
  c.digest = r.get<std::uint64_t>("config digest");
  c.step = r.get<std::uint64_t>("step counter");
  c.config_text = r.str(r.get<std::uint32_t>("config length"), "config text");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.get<std::uint32_t>("name length"), "tensor name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw CheckpointError(r.pos() - 4, "checkpoint: tensor " + t.name + " has rank " + std::to_string(rank));
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("dimension");
      if (d == 0 || d > (std::uint64_t{1} << 40) || n > (std::uint64_t{1} << 40) / d)
        throw CheckpointError(r.pos() - 8, "checkpoint: tensor " + t.name + " has an invalid dimension");
      n *= d;
      t.shape.push_back(static_cast<std::size_t>(d));
    }
    r.need(n * 4, "tensor values");
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<float>(r.get<std::uint32_t>("tensor values"));
    c.tensors.push_back(std::move(t));
  }
  return c;
}

}  // namespace ckp1

template <class T>
Checkpoint make_checkpoint(const ModelConfig& cfg, const ParameterSet<T>& params, std::uint64_t step) {
  Checkpoint c{config_digest(cfg), step, serialize_config(cfg), {}};
  for (const auto& p : params) {
    NamedTensor t{p.name, p.value.shape(), {}};
    t.values.reserve(p.value.numel());
    for (T v : p.value.data()) t.values.push_back(static_cast<float>(v));
    c.tensors.push_back(std::move(t));
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) { write_file_bytes(path, ckp1::encode(c)); }

inline Checkpoint load_checkpoint(const std::string& path) { return ckp1::decode(read_file_bytes(path)); }

/// Copies every tensor into the matching parameter. A digest mismatch only
/// warns; a missing, extra or differently shaped tensor throws naming it.
template <class T>
void apply_checkpoint(const Checkpoint& c, const ModelConfig& cfg, ParameterSet<T>& params, std::ostream* warn) {
  if (warn && c.digest != config_digest(cfg))
    *warn << "warning: checkpoint config digest " << c.digest << " differs from the current config "
          << config_digest(cfg) << "\n";
  if (c.tensors.size() != params.size())
    throw std::invalid_argument("checkpoint holds " + std::to_string(c.tensors.size()) + " tensors, model has " +
                                std::to_string(params.size()) + " parameters");
  for (const auto& t : c.tensors) {
    Parameter<T>* p = params.find(t.name);
    if (!p) throw std::invalid_argument("checkpoint tensor " + t.name + " has no matching parameter");
    if (p->value.shape() != t.shape)
      throw ShapeError("checkpoint tensor " + t.name + " has shape " + to_string(t.shape) + ", parameter " +
                       p->name + " expects " + to_string(p->value.shape()));
  }
  for (const auto& t : c.tensors) {
    auto dst = params.find(t.name)->value.data();
    for (std::size_t i = 0; i < t.values.size(); ++i) dst[i] = static_cast<T>(t.values[i]);
  }
}

}  // namespace hsnn
