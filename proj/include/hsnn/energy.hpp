#pragma once

#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/scnn.hpp"

namespace hsnn::energy {

enum class LayerKind { Conv, Deconv };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  std::uint64_t k_w = 1, k_h = 1, c_in = 1, c_out = 1, h_out = 1, w_out = 1;
  bool spiking = false;

  void validate() const {
    if (!k_w || !k_h || !c_in || !c_out || !h_out || !w_out)
      throw std::invalid_argument("layer " + name + ": every extent must be positive");
  }
};

/// Multiply-accumulates of one dense layer: k_w k_h c_in h_out w_out c_out.
inline std::uint64_t op_count_ann(const LayerSpec& l) {
  l.validate();
  std::uint64_t n = 1;
  for (std::uint64_t f : {l.k_w, l.k_h, l.c_in, l.h_out, l.w_out, l.c_out}) {
    if (n > std::numeric_limits<std::uint64_t>::max() / f)
      throw std::overflow_error("layer " + l.name + ": operation count exceeds 64 bits");
    n *= f;
  }
  return n;
}

/// Accumulates triggered by spikes: rate times the dense count.
inline double op_count_snn(const LayerSpec& l, double spike_rate) {
  if (spike_rate < 0) throw std::invalid_argument("spike rate must be non-negative");
  return spike_rate * static_cast<double>(op_count_ann(l));
}

struct EnergyConstants {
  double e_mac = 4.6;  // pJ per multiply-accumulate
  double e_ac = 0.9;   // pJ per accumulate
};

struct LayerReport {
  LayerSpec spec;
  std::uint64_t op_ann = 0;  // per time step for spiking layers
  double op_snn = 0;         // summed over all time steps
};

struct EnergyReport {
  std::vector<LayerReport> layers;
  std::uint64_t steps = 1;
  double spike_rate = 0;
  std::uint64_t spiking_ops = 0;     // per step, spiking layers
  std::uint64_t nonspiking_ops = 0;  // non-spiking layers, run once
  double ecp_ann = 0;                // pJ
  double ecp_snn = 0;                // pJ
  double improvement_ratio = 0;
};

/// ECP_ANN = e_mac (steps * spiking ops + non-spiking ops)
/// ECP_SNN = e_ac (steps * rate * spiking ops + non-spiking ops)
inline EnergyReport estimate(const std::vector<LayerSpec>& layers, std::uint64_t steps, double spike_rate,
                             const EnergyConstants& k = {}) {
  if (steps == 0) throw std::invalid_argument("energy: steps must be >= 1");
  if (spike_rate < 0) throw std::invalid_argument("spike rate must be non-negative");
  if (!(k.e_mac > 0 && k.e_ac > 0)) throw std::invalid_argument("energy constants must be positive");
  EnergyReport r;
  r.steps = steps;
  r.spike_rate = spike_rate;
  for (const auto& l : layers) {
    LayerReport lr{l, op_count_ann(l), 0};
    if (l.spiking) {
      r.spiking_ops += lr.op_ann;
      lr.op_snn = op_count_snn(l, spike_rate) * static_cast<double>(steps);
    } else {
      r.nonspiking_ops += lr.op_ann;
      lr.op_snn = static_cast<double>(lr.op_ann);
    }
    r.layers.push_back(lr);
  }
  const double s = static_cast<double>(r.spiking_ops) * static_cast<double>(steps);
  const double ns = static_cast<double>(r.nonspiking_ops);
  r.ecp_ann = k.e_mac * (s + ns);
  r.ecp_snn = k.e_ac * (s * spike_rate + ns);
  r.improvement_ratio = r.ecp_ann / r.ecp_snn;
  return r;
}

/// Eight spiking 3x3 convs on the encoder's extent ladder plus the two
/// 4x4 decoder deconvolutions. `first_c_in` overrides the input channel count.
inline std::vector<LayerSpec> scnn_layers(const ScnnConfig& cfg, std::uint64_t first_c_in = 0) {
  cfg.validate();
  std::vector<LayerSpec> out;
  const auto ladder = cfg.extent_ladder();
  std::uint64_t cin = first_c_in ? first_c_in : cfg.input_channels;
  for (std::size_t l = 0; l < ScnnConfig::kLayers; ++l) {
    out.push_back({"conv" + std::to_string(l + 1), LayerKind::Conv, 3, 3, cin, cfg.channels[l], ladder[l].first,
                   ladder[l].second, true});
    cin = cfg.channels[l];
  }
  const auto [h3, w3] = ladder[7];
  out.push_back({"deconv1", LayerKind::Deconv, 4, 4, cfg.channels[7], cfg.decoder_channels[0], h3, w3, false});
  out.push_back({"deconv2", LayerKind::Deconv, 4, 4, cfg.decoder_channels[0], cfg.decoder_channels[1], 2 * h3,
                 2 * w3, false});
  return out;
}

/// Published reference figures for the full-size encoder.
struct ReferenceFigures {
  static constexpr std::uint64_t kFirstLayerChannels = 12;
  static constexpr std::uint64_t kSteps = 16;
  static constexpr std::uint64_t kTotalSpikes = 21'971'781;
  static constexpr double kSpikeRate = 0.0001137;
};

struct ReferenceReport {
  EnergyReport energy;
  double reproduced_spike_rate = 0;  // kTotalSpikes / (spiking ops * steps)
};

inline ReferenceReport paper_preset_report(double spike_rate = ReferenceFigures::kSpikeRate, const EnergyConstants& k = {}) {
  const auto layers = scnn_layers(ScnnConfig::paper(), ReferenceFigures::kFirstLayerChannels);
  ReferenceReport r{estimate(layers, ReferenceFigures::kSteps, spike_rate, k), 0};
  r.reproduced_spike_rate = static_cast<double>(ReferenceFigures::kTotalSpikes) /
                            (static_cast<double>(r.energy.spiking_ops) * ReferenceFigures::kSteps);
  return r;
}

struct SpikeRate {
  std::vector<double> per_layer;  // spikes / (neurons * steps)
  double plain = 0;               // all spikes / (all neurons * steps), in [0, 1]
  double per_op = 0;              // all spikes / (spiking ops per step * steps)
  double mean_spikes = 0;         // per sample
};

/// Averages per-layer spike counts over samples (one vector per sample).
inline SpikeRate measure_spike_rate(const ScnnConfig& cfg, const std::vector<std::vector<std::uint64_t>>& counts) {
  if (counts.empty()) throw std::invalid_argument("measure_spike_rate: need at least one sample");
  const auto ladder = cfg.extent_ladder();
  const double steps = static_cast<double>(cfg.steps), samples = static_cast<double>(counts.size());
  SpikeRate r;
  double spikes = 0, neurons = 0;
  for (std::size_t l = 0; l < ScnnConfig::kLayers; ++l) {
    const double n = static_cast<double>(cfg.channels[l] * ladder[l].first * ladder[l].second);
    double s = 0;
    for (const auto& c : counts) {
      if (c.size() != ScnnConfig::kLayers) throw std::invalid_argument("measure_spike_rate: expected 8 layer counts");
      s += static_cast<double>(c[l]);
    }
    s /= samples;
    r.per_layer.push_back(s / (n * steps));
    spikes += s;
    neurons += n;
  }
  if (neurons == 0) throw std::invalid_argument("measure_spike_rate: model has no neurons");
  std::uint64_t ops = 0;
  for (const auto& l : scnn_layers(cfg))
    if (l.spiking) ops += op_count_ann(l);
  r.mean_spikes = spikes;
  r.plain = spikes / (neurons * steps);
  r.per_op = spikes / (static_cast<double>(ops) * steps);
  return r;
}

/// One layer per line: `kind k c_in c_out h_out w_out spiking` with kind
/// conv|deconv and spiking 0|1. Blank lines and `#` comments are skipped.
inline std::vector<LayerSpec> parse_layer_specs(const std::string& text) {
  std::vector<LayerSpec> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    LayerSpec l;
    l.name = "line" + std::to_string(no);
    int spiking = 0;
    std::uint64_t k = 0;
    if (!(ls >> k >> l.c_in >> l.c_out >> l.h_out >> l.w_out >> spiking) || (spiking != 0 && spiking != 1))
      throw std::invalid_argument("layer spec line " + std::to_string(no) + ": expected 'kind k c_in c_out h_out w_out 0|1'");
    if (std::string rest; ls >> rest) throw std::invalid_argument("layer spec line " + std::to_string(no) + ": trailing text");
    if (kind == "conv")
      l.kind = LayerKind::Conv;
    else if (kind == "deconv")
      l.kind = LayerKind::Deconv;
    else
      throw std::invalid_argument("layer spec line " + std::to_string(no) + ": unknown kind '" + kind + "'");
    l.k_w = l.k_h = k;
    l.spiking = spiking == 1;
    l.validate();
    out.push_back(l);
  }
  return out;
}

}  // namespace hsnn::energy
