#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/fusion.hpp"
#include "hsnn/mst.hpp"
#include "hsnn/scnn.hpp"

namespace hsnn {

enum class Arch { ScnnMst, SpikeformerMst, ScnnOnly, MstOnly };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::ScnnMst: return "scnn-mst";
    case Arch::SpikeformerMst: return "spikeformer-mst";
    case Arch::ScnnOnly: return "scnn-only";
    case Arch::MstOnly: return "mst-only";
  }
  return "?";
}

inline Arch parse_arch(const std::string& s) {
  for (Arch a : {Arch::ScnnMst, Arch::SpikeformerMst, Arch::ScnnOnly, Arch::MstOnly})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown arch '" + s + "' (expected scnn-mst, spikeformer-mst, scnn-only or mst-only)");
}

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch = 4;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: no cap
};

struct ModelConfig {
  std::string preset = "tiny";
  Arch arch = Arch::ScnnMst;
  bool use_mbf = true;
  std::size_t num_classes = 2;
  std::size_t head_hidden = 64;
  std::uint64_t seed = 1;
  double dvs_threshold = 0.2;
  ScnnConfig scnn = ScnnConfig::tiny();
  MstConfig mst = MstConfig::tiny();
  MbfConfig mbf = MbfConfig::tiny();
  SpikeTokenConfig tokens = SpikeTokenConfig::tiny();
  TrainConfig train;

  static ModelConfig tiny() { return ModelConfig{}; }

  static ModelConfig paper() {
    ModelConfig c;
    c.preset = "paper";
    c.head_hidden = 4096;
    c.scnn = ScnnConfig::paper();
    c.mst = MstConfig::paper();
    c.mbf = MbfConfig::paper();
    c.tokens = SpikeTokenConfig::paper();
    return c;
  }

  static ModelConfig from_preset(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "paper") return paper();
    throw std::invalid_argument("unknown preset '" + name + "' (expected tiny or paper)");
  }

  bool uses_events() const { return arch != Arch::MstOnly; }
  bool uses_frames() const { return arch != Arch::ScnnOnly; }
  bool uses_mbf() const { return arch == Arch::ScnnMst && use_mbf; }

  /// Length of the vector entering the classification head.
  std::size_t fused_length() const {
    // MBF event half, or the SCNN fused map pooled to the same grid.
    const std::size_t event_part = uses_mbf() ? mbf.half_numel() : scnn.out_channels * mbf.pool_to * mbf.pool_to;
    switch (arch) {
      case Arch::ScnnMst: return event_part + mst.output_dim;
      case Arch::SpikeformerMst: return tokens.dim + mst.output_dim;
      case Arch::ScnnOnly: return event_part;
      case Arch::MstOnly: return mst.output_dim;
    }
    return 0;
  }

  /// MBF input extent follows the SCNN fused map.
  void sync() {
    const auto ladder = scnn.extent_ladder();
    mbf.in_channels = scnn.out_channels;
    mbf.height = ladder[5].first;
    mbf.width = ladder[5].second;
  }

  void validate() const {
    scnn.validate();
    mst.validate();
    tokens.validate();
    if (uses_mbf()) mbf.validate();
    const auto fused = scnn.extent_ladder()[5];
    if (mbf.in_channels != scnn.out_channels || mbf.height != fused.first || mbf.width != fused.second)
      throw std::invalid_argument("mbf input extent does not match the SCNN fused map (call sync())");
    if (mbf.pool_to < 1 || mbf.pool_to > fused.first || mbf.pool_to > fused.second)
      throw std::invalid_argument("mbf.pool_to exceeds the SCNN fused map");
    if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
    if (head_hidden < 1) throw std::invalid_argument("head_hidden must be >= 1");
    if (!(train.lr > 0) || train.batch < 1) throw std::invalid_argument("train: lr must be > 0 and batch >= 1");
    if (!(dvs_threshold > 0)) throw std::invalid_argument("dvs_threshold must be > 0");
  }
};

namespace detail {

struct ConfigKey {
  std::string key;
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&)> set;
};

inline std::size_t parse_size(const std::string& k, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') throw std::invalid_argument(k + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

inline double parse_real(const std::string& k, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw std::invalid_argument(k + ": expected a number, got '" + v + "'");
  return d;
}

inline bool parse_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(k + ": expected true or false, got '" + v + "'");
}

inline std::string fmt_real(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

template <class Seq>
std::string join(const Seq& s) {
  std::string out;
  for (auto v : s) out += (out.empty() ? "" : ",") + std::to_string(v);
  return out;
}

inline std::vector<std::size_t> parse_list(const std::string& k, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(parse_size(k, item.substr(b, e - b + 1)));
  }
  return out;
}

#define HSNN_SIZE_KEY(name, field) \
  ConfigKey{name, [](const ModelConfig& c) { return std::to_string(c.field); }, \
            [](ModelConfig& c, const std::string& v) { c.field = parse_size(name, v); }}
#define HSNN_REAL_KEY(name, field) \
  ConfigKey{name, [](const ModelConfig& c) { return fmt_real(c.field); }, \
            [](ModelConfig& c, const std::string& v) { c.field = parse_real(name, v); }}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      ConfigKey{"model.preset", [](const ModelConfig& c) { return c.preset; },
                [](ModelConfig& c, const std::string& v) { c.preset = v; }},
      ConfigKey{"model.arch", [](const ModelConfig& c) { return to_string(c.arch); },
                [](ModelConfig& c, const std::string& v) { c.arch = parse_arch(v); }},
      ConfigKey{"model.mbf", [](const ModelConfig& c) { return std::string(c.use_mbf ? "true" : "false"); },
                [](ModelConfig& c, const std::string& v) { c.use_mbf = parse_bool("model.mbf", v); }},
      HSNN_SIZE_KEY("model.num_classes", num_classes),
      HSNN_SIZE_KEY("model.head_hidden", head_hidden),
      HSNN_SIZE_KEY("model.seed", seed),
      HSNN_REAL_KEY("data.dvs_threshold", dvs_threshold),
      HSNN_SIZE_KEY("scnn.input_channels", scnn.input_channels),
      HSNN_SIZE_KEY("scnn.height", scnn.height),
      HSNN_SIZE_KEY("scnn.width", scnn.width),
      ConfigKey{"scnn.channels", [](const ModelConfig& c) { return join(c.scnn.channels); },
                [](ModelConfig& c, const std::string& v) {
                  const auto l = parse_list("scnn.channels", v);
                  if (l.size() != ScnnConfig::kLayers) throw std::invalid_argument("scnn.channels: need 8 values");
                  std::copy(l.begin(), l.end(), c.scnn.channels.begin());
                }},
      ConfigKey{"scnn.pool_after", [](const ModelConfig& c) { return join(c.scnn.pool_after); },
                [](ModelConfig& c, const std::string& v) { c.scnn.pool_after = parse_list("scnn.pool_after", v); }},
      HSNN_SIZE_KEY("scnn.steps", scnn.steps),
      ConfigKey{"scnn.decoder_channels", [](const ModelConfig& c) { return join(c.scnn.decoder_channels); },
                [](ModelConfig& c, const std::string& v) {
                  const auto l = parse_list("scnn.decoder_channels", v);
                  if (l.size() != 2) throw std::invalid_argument("scnn.decoder_channels: need 2 values");
                  c.scnn.decoder_channels = {l[0], l[1]};
                }},
      HSNN_SIZE_KEY("scnn.out_channels", scnn.out_channels),
      HSNN_REAL_KEY("scnn.init_gain", scnn.init_gain),
      ConfigKey{"neuron.kind", [](const ModelConfig& c) { return to_string(c.scnn.neuron.kind); },
                [](ModelConfig& c, const std::string& v) {
                  c.scnn.neuron.kind = parse_neuron_kind(v);
                  if (c.scnn.neuron.kind == NeuronKind::IF) c.scnn.neuron.leak = 1.0;
                }},
      HSNN_REAL_KEY("neuron.threshold", scnn.neuron.threshold),
      HSNN_REAL_KEY("neuron.leak", scnn.neuron.leak),
      HSNN_REAL_KEY("neuron.surrogate_width", scnn.neuron.surrogate_width),
      HSNN_SIZE_KEY("mst.frames", mst.frames),
      HSNN_SIZE_KEY("mst.clips", mst.clips),
      HSNN_SIZE_KEY("mst.dim", mst.dim),
      HSNN_SIZE_KEY("mst.image_size", mst.image_size),
      ConfigKey{"mst.stem_channels", [](const ModelConfig& c) { return join(c.mst.stem_channels); },
                [](ModelConfig& c, const std::string& v) {
                  const auto l = parse_list("mst.stem_channels", v);
                  if (l.size() != 3) throw std::invalid_argument("mst.stem_channels: need 3 values");
                  c.mst.stem_channels = {l[0], l[1], l[2]};
                }},
      HSNN_SIZE_KEY("mst.output_dim", mst.output_dim),
      HSNN_SIZE_KEY("mbf.bottleneck_dim", mbf.bottleneck_dim),
      HSNN_SIZE_KEY("mbf.groups", mbf.groups),
      HSNN_SIZE_KEY("mbf.pool_to", mbf.pool_to),
      HSNN_SIZE_KEY("tokens.grid_h", tokens.grid_h),
      HSNN_SIZE_KEY("tokens.grid_w", tokens.grid_w),
      HSNN_SIZE_KEY("tokens.patch", tokens.patch),
      HSNN_SIZE_KEY("tokens.dim", tokens.dim),
      HSNN_SIZE_KEY("tokens.bottleneck_tokens", tokens.bottleneck_tokens),
      HSNN_SIZE_KEY("tokens.spiking_blocks", tokens.spiking_blocks),
      HSNN_SIZE_KEY("tokens.fusion_blocks", tokens.fusion_blocks),
      HSNN_SIZE_KEY("tokens.mlp_ratio", tokens.mlp_ratio),
      HSNN_REAL_KEY("train.lr", train.lr),
      HSNN_REAL_KEY("train.beta1", train.beta1),
      HSNN_REAL_KEY("train.beta2", train.beta2),
      HSNN_REAL_KEY("train.eps", train.eps),
      HSNN_SIZE_KEY("train.batch", train.batch),
      HSNN_SIZE_KEY("train.epochs", train.epochs),
      HSNN_SIZE_KEY("train.max_steps", train.max_steps),
  };
  return keys;
}

#undef HSNN_SIZE_KEY
#undef HSNN_REAL_KEY

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one `section.key`; throws on unknown keys or malformed values.
inline void set_config_value(ModelConfig& c, const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys())
    if (k.key == key) {
      k.set(c, value);
      return;
    }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

/// Applies `key = value` lines; `model.preset` (when present) is applied
/// first so the remaining keys override the preset.
inline void apply_config_text(ModelConfig& c, const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(no) + ": expected key = value");
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  for (const auto& [k, v] : kv)
    if (k == "model.preset") c = ModelConfig::from_preset(v);
  for (const auto& [k, v] : kv)
    if (k != "model.preset") set_config_value(c, k, v);
}

inline ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ModelConfig c;
  apply_config_text(c, ss.str());
  return c;
}

/// Canonical text: every key in registry order.
inline std::string serialize_config(const ModelConfig& c) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.key + " = " + k.get(c) + "\n";
  return out;
}

/// FNV-1a over the canonical text, excluding training hyper-parameters.
inline std::uint64_t config_digest(const ModelConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& k : detail::config_keys()) {
    if (k.key.rfind("train.", 0) == 0) continue;
    for (char ch : k.key + "=" + k.get(c) + ";") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace hsnn
