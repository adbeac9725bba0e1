#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/module.hpp"
#include "hsnn/neurons.hpp"
#include "hsnn/ops.hpp"

namespace hsnn {

struct ScnnConfig {
  static constexpr std::size_t kLayers = 8;
  // 1-based layers whose membrane potentials form the taps A1, A2, A3.
  static constexpr std::array<std::size_t, 3> kTapLayers{4, 6, 8};

  std::size_t input_channels = 2;
  std::size_t height = 32;
  std::size_t width = 32;
  std::array<std::size_t, kLayers> channels{4, 4, 8, 8, 16, 16, 32, 32};
  std::vector<std::size_t> pool_after{2, 4, 6};  // 1-based, 2x2 stride 2
  std::size_t steps = 4;
  NeuronConfig neuron = NeuronConfig::of(NeuronKind::LIF);
  std::array<std::size_t, 2> decoder_channels{32, 16};
  std::size_t out_channels = 16;
  double init_gain = 2.0;

  static ScnnConfig paper() {
    ScnnConfig c;
    c.height = c.width = 240;
    c.channels = {64, 64, 128, 128, 256, 256, 512, 512};
    c.steps = 16;
    c.decoder_channels = {256, 128};
    return c;
  }

  static ScnnConfig tiny() { return ScnnConfig{}; }

  bool pooled(std::size_t layer) const {
    return std::find(pool_after.begin(), pool_after.end(), layer) != pool_after.end();
  }

  /// Spatial extent (h, w) of each layer's conv output.
  std::vector<std::pair<std::size_t, std::size_t>> extent_ladder() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t h = height, w = width;
    for (std::size_t l = 1; l <= kLayers; ++l) {
      out.emplace_back(h, w);
      if (pooled(l)) {
        h /= 2;
        w /= 2;
      }
    }
    return out;
  }

  /// Neurons updated per time step, summed over layers.
  std::size_t neurons_per_step() const {
    std::size_t n = 0;
    const auto ladder = extent_ladder();
    for (std::size_t l = 0; l < kLayers; ++l) n += channels[l] * ladder[l].first * ladder[l].second;
    return n;
  }

  void validate() const {
    neuron.validate();
    if (steps < 1) throw std::invalid_argument("scnn: steps must be >= 1");
    if (input_channels < 1 || height < 1 || width < 1) throw std::invalid_argument("scnn: empty input");
    for (std::size_t i = 0; i < pool_after.size(); ++i) {
      if (pool_after[i] < 1 || pool_after[i] > kLayers) throw std::invalid_argument("scnn: pool layer out of range");
      if (i && pool_after[i] <= pool_after[i - 1])
        throw std::invalid_argument("scnn: pool placements must strictly increase");
    }
    for (auto c : channels)
      if (c < 1) throw std::invalid_argument("scnn: channel counts must be >= 1");
    for (const auto& [h, w] : extent_ladder())
      if (h < 1 || w < 1) throw std::invalid_argument("scnn: pooling reduces the input to nothing");
  }
};

template <class T>
struct ScnnStep {
  std::vector<Var<T>> potentials;  // per layer, before pooling
  std::vector<Var<T>> outputs;     // per layer, after pooling when pooled
  std::vector<Var<T>> spikes;      // per layer, before pooling
};

template <class T>
struct ScnnOutput {
  Var<T> a1, a2, a3;
  Var<T> fused;  // [1, out_channels, h(A2), w(A2)]
  std::vector<std::uint64_t> spike_counts;  // per layer, summed over steps
  std::vector<ScnnStep<T>> steps;

  std::uint64_t total_spikes() const {
    std::uint64_t n = 0;
    for (auto c : spike_counts) n += c;
    return n;
  }
};

/// Spiking convolutional encoder with a non-spiking deconvolution decoder.
/// No layer has a bias, so an empty event stream maps to an all-zero output.
template <class T>
class Scnn {
 public:
  Scnn(const ScnnConfig& cfg, ParameterSet<T>& params, Rng& rng, const std::string& prefix = "scnn.") : cfg_(cfg) {
    cfg_.validate();
    std::size_t cin = cfg_.input_channels;
    for (std::size_t l = 0; l < ScnnConfig::kLayers; ++l) {
      const std::size_t cout = cfg_.channels[l];
      conv_.push_back(&params.add(prefix + "conv" + std::to_string(l + 1),
                                  scaled_uniform<T>(rng, {cout, cin, 3, 3}, cin * 9, cfg_.init_gain)));
      cin = cout;
    }
    const std::size_t c1 = cfg_.channels[3], c2 = cfg_.channels[5], c3 = cfg_.channels[7];
    const auto [d1, d2] = cfg_.decoder_channels;
    // Transposed-conv weights are [Cin, Cout, k, k]; each input feeds k*k*Cout/stride^2 outputs.
    t1_ = &params.add(prefix + "deconv1", scaled_uniform<T>(rng, {c3, d1, 4, 4}, c3 * 16, 1.0));
    t2_ = &params.add(prefix + "deconv2", scaled_uniform<T>(rng, {d1, d2, 4, 4}, d1 * 4, 1.0));
    fuse_ = &params.add(prefix + "fuse", scaled_uniform<T>(rng, {cfg_.out_channels, d2 + c2 + c1, 1, 1},
                                                           d2 + c2 + c1, 1.0));
  }

  const ScnnConfig& config() const { return cfg_; }

  /// One time step through the eight spiking layers; `states` persists across steps.
  ScnnStep<T> encode_step(Graph<T>& g, const Var<T>& raster, std::vector<NeuronState<T>>& states) const {
    const auto& s = raster.shape();
    if (s.size() != 4 || s[1] != cfg_.input_channels || s[2] != cfg_.height || s[3] != cfg_.width)
      throw ShapeError("scnn: raster " + to_string(s) + " does not match [1, " +
                       std::to_string(cfg_.input_channels) + ", " + std::to_string(cfg_.height) + ", " +
                       std::to_string(cfg_.width) + "]");
    states.resize(ScnnConfig::kLayers);
    ScnnStep<T> out;
    Var<T> x = raster;
    for (std::size_t l = 0; l < ScnnConfig::kLayers; ++l) {
      auto r = neuron_step(states[l], conv2d(x, g.param(*conv_[l]), 1, Padding::uniform(1)), cfg_.neuron);
      x = cfg_.pooled(l + 1) ? max_pool2d(r.output, 2, 2) : r.output;
      out.potentials.push_back(r.potential);
      out.spikes.push_back(r.spikes);
      out.outputs.push_back(x);
    }
    return out;
  }

  /// T1 keeps the A3 extent (k4 s1, trims 1 before and 2 after), T2 doubles
  /// it (k4 s2 p1); A1 is max-pooled to the A2 extent before the 1x1 fusion.
  Var<T> decode(Graph<T>& g, const Var<T>& a1, const Var<T>& a2, const Var<T>& a3) const {
    auto t1 = relu(conv_transpose2d(a3, g.param(*t1_), 1, Padding::uniform(1), Padding{0, 1, 0, 1}));
    auto t2 = relu(conv_transpose2d(t1, g.param(*t2_), 2, Padding::uniform(1)));
    auto p1 = max_pool2d(a1, 2, 2);
    if (t2.dim(2) != a2.dim(2) || t2.dim(3) != a2.dim(3) || p1.dim(2) != a2.dim(2) || p1.dim(3) != a2.dim(3))
      throw ShapeError("scnn decode: T2 " + to_string(t2.shape()) + ", A2 " + to_string(a2.shape()) +
                       " and pooled A1 " + to_string(p1.shape()) + " disagree spatially");
    return relu(conv2d(concat<T>({t2, a2, p1}, 1), g.param(*fuse_)));
  }

  /// voxels: [T, C, H, W] event counts per time bin.
  ScnnOutput<T> forward(Graph<T>& g, const Tensor<T>& voxels) const {
    const auto& vs = voxels.shape();
    if (vs.size() != 4 || vs[0] != cfg_.steps)
      throw ShapeError("scnn: expected " + std::to_string(cfg_.steps) + " time bins, got voxels " + to_string(vs));
    const std::size_t plane = voxels.numel() / vs[0];
    std::vector<NeuronState<T>> states;
    ScnnOutput<T> out;
    out.spike_counts.assign(ScnnConfig::kLayers, 0);
    std::array<Var<T>, 3> acc;
    for (std::size_t t = 0; t < cfg_.steps; ++t) {
      Tensor<T> frame({1, vs[1], vs[2], vs[3]});
      std::copy_n(voxels.data().begin() + t * plane, plane, frame.data().begin());
      auto step = encode_step(g, g.constant(std::move(frame)), states);
      for (std::size_t l = 0; l < ScnnConfig::kLayers; ++l) out.spike_counts[l] += count_spikes(step.spikes[l].value());
      for (std::size_t k = 0; k < 3; ++k) {
        const auto& u = step.potentials[ScnnConfig::kTapLayers[k] - 1];
        acc[k] = t == 0 ? u : add(acc[k], u);
      }
      out.steps.push_back(std::move(step));
    }
    const T inv = T{1} / static_cast<T>(cfg_.steps);
    out.a1 = cfg_.steps == 1 ? acc[0] : scale(acc[0], inv);
    out.a2 = cfg_.steps == 1 ? acc[1] : scale(acc[1], inv);
    out.a3 = cfg_.steps == 1 ? acc[2] : scale(acc[2], inv);
    out.fused = decode(g, out.a1, out.a2, out.a3);
    return out;
  }

 private:
  ScnnConfig cfg_;
  std::vector<Parameter<T>*> conv_;
  Parameter<T>* t1_ = nullptr;
  Parameter<T>* t2_ = nullptr;
  Parameter<T>* fuse_ = nullptr;
};

}  // namespace hsnn
