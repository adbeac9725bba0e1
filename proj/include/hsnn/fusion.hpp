#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/module.hpp"
#include "hsnn/neurons.hpp"
#include "hsnn/ops.hpp"

namespace hsnn {

// ------------------------------------------------------------------ bottleneck fusion block

struct MbfConfig {
  std::size_t bottleneck_dim = 16;
  std::size_t in_channels = 16;  // channels of the event feature map
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t groups = 4;
  std::size_t pool_to = 2;

  static MbfConfig paper() {
    MbfConfig c;
    c.height = c.width = 60;
    c.pool_to = 14;
    return c;
  }

  static MbfConfig tiny() { return MbfConfig{}; }

  std::size_t out_channels() const { return 2 * bottleneck_dim; }
  /// Length of one flattened half.
  std::size_t half_numel() const { return bottleneck_dim * pool_to * pool_to; }

  void validate() const {
    if (bottleneck_dim == 0 || in_channels == 0) throw std::invalid_argument("mbf: empty channel count");
    if (groups == 0 || out_channels() % groups != 0)
      throw std::invalid_argument("mbf: " + std::to_string(out_channels()) + " channels not divisible into " +
                                  std::to_string(groups) + " groups");
    if (height / 4 < pool_to || width / 4 < pool_to)
      throw std::invalid_argument("mbf: input too small for two 2x2 pools and a " + std::to_string(pool_to) +
                                  "x" + std::to_string(pool_to) + " output");
  }
};

template <class T>
struct MbfOutput {
  Var<T> event_repr;  // [1, bd, P, P]
  Var<T> bottleneck;  // [1, bd, P, P]
};

/// concat[Z, events] -> conv -> pool -> four deformable convs -> adaptive
/// pool, with group norm + relu after every conv and the second pool after
/// the first deformable conv. Offsets come from zero-initialised 3x3 convs.
template <class T>
class Mbf {
 public:
  static constexpr std::size_t kDeformable = 4;

  Mbf(const MbfConfig& cfg, ParameterSet<T>& params, Rng& rng, const std::string& prefix = "mbf.") : cfg_(cfg) {
    cfg_.validate();
    const std::size_t bd = cfg_.bottleneck_dim, c = cfg_.out_channels(), cin = bd + cfg_.in_channels;
    z_ = &params.add(prefix + "z", rng.uniform_tensor<T>({1, bd, cfg_.height, cfg_.width}, -0.1, 0.1));
    for (std::size_t i = 0; i <= kDeformable; ++i) {
      const std::string n = prefix + "conv" + std::to_string(i);
      const std::size_t in = i == 0 ? cin : c;
      w_.push_back(&params.add(n + ".weight", scaled_uniform<T>(rng, {c, in, 3, 3}, in * 9, std::sqrt(2.0))));
      b_.push_back(&params.add(n + ".bias", Tensor<T>::zeros({c})));
      gn_g_.push_back(&params.add(n + ".gn_gain", Tensor<T>::ones({c})));
      gn_b_.push_back(&params.add(n + ".gn_bias", Tensor<T>::zeros({c})));
      if (i > 0) {
        off_w_.push_back(&params.add(n + ".offset_weight", Tensor<T>::zeros({18, c, 3, 3})));
        off_b_.push_back(&params.add(n + ".offset_bias", Tensor<T>::zeros({18})));
      }
    }
  }

  const MbfConfig& config() const { return cfg_; }
  Parameter<T>& z() { return *z_; }

  /// `deformable = false` swaps every deformable conv for a plain conv with
  /// the same weights.
  MbfOutput<T> forward(Graph<T>& g, const Var<T>& events, bool deformable = true) const {
    const Shape want{1, cfg_.in_channels, cfg_.height, cfg_.width};
    if (events.shape() != want)
      throw ShapeError("mbf: event map " + to_string(events.shape()) + " does not match " + to_string(want));
    const auto pad = Padding::uniform(1);
    auto norm_relu = [&](const Var<T>& x, std::size_t i) {
      return relu(group_norm(add_bias(x, g.param(*b_[i]), 1), cfg_.groups, g.param(*gn_g_[i]), g.param(*gn_b_[i])));
    };
    Var<T> x = concat<T>({g.param(*z_), events}, 1);
    x = max_pool2d(norm_relu(conv2d(x, g.param(*w_[0]), 1, pad), 0), 2, 2);
    for (std::size_t i = 1; i <= kDeformable; ++i) {
      Var<T> y;
      if (deformable) {
        auto off = add_bias(conv2d(x, g.param(*off_w_[i - 1]), 1, pad), g.param(*off_b_[i - 1]), 1);
        y = deformable_conv2d(x, g.param(*w_[i]), off, 1, pad);
      } else {
        y = conv2d(x, g.param(*w_[i]), 1, pad);
      }
      x = norm_relu(y, i);
      if (i == 1) x = max_pool2d(x, 2, 2);
    }
    x = adaptive_avg_pool2d(x, cfg_.pool_to, cfg_.pool_to);
    const std::size_t bd = cfg_.bottleneck_dim;
    return {slice(x, 1, 0, bd), slice(x, 1, bd, 2 * bd)};
  }

 private:
  MbfConfig cfg_;
  Parameter<T>* z_ = nullptr;
  std::vector<Parameter<T>*> w_, b_, gn_g_, gn_b_, off_w_, off_b_;
};

/// Flattened bottleneck half -> one [1, d] key/value token for the MST.
template <class T>
class BottleneckToken {
 public:
  BottleneckToken(std::size_t in, std::size_t d, ParameterSet<T>& params, Rng& rng,
                  const std::string& prefix = "bottleneck_token.") {
    w_ = &params.add(prefix + "weight", scaled_uniform<T>(rng, {d, in}, in));
    b_ = &params.add(prefix + "bias", Tensor<T>::zeros({d}));
  }

  Var<T> forward(Graph<T>& g, const Var<T>& bottleneck) const {
    return linear(flatten(bottleneck), g.param(*w_), g.param(*b_));
  }

 private:
  Parameter<T>* w_ = nullptr;
  Parameter<T>* b_ = nullptr;
};

// ------------------------------------------------------------------ spiking token transformer

struct SpikeTokenConfig {
  std::size_t grid_h = 4, grid_w = 4;  // tokens = grid_h * grid_w
  std::size_t patch = 2;
  std::size_t dim = 32;
  std::size_t bottleneck_tokens = 8;
  std::size_t spiking_blocks = 1;
  std::size_t fusion_blocks = 2;
  std::size_t mlp_ratio = 2;

  static SpikeTokenConfig paper() {
    SpikeTokenConfig c;
    c.grid_h = 16;
    c.grid_w = 21;
    c.dim = 256;
    c.bottleneck_tokens = 64;
    c.mlp_ratio = 4;
    return c;
  }

  static SpikeTokenConfig tiny() { return SpikeTokenConfig{}; }

  std::size_t tokens() const { return grid_h * grid_w; }

  void validate() const {
    if (tokens() == 0 || dim == 0 || bottleneck_tokens == 0 || patch == 0 || mlp_ratio == 0)
      throw std::invalid_argument("spike tokens: extents must be positive");
  }
};

/// (Q K^T) V * scale, without softmax.
template <class T>
Var<T> spike_dot_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  return scale(matmul(matmul(q, transpose(k)), v), T{1} / std::sqrt(static_cast<T>(q.dim(-1))));
}

template <class T>
struct SpikingBlockTrace {
  Var<T> q, k, v;
  Var<T> attention;  // before the output projection and residual
  std::vector<Var<T>> spikes;
};

/// Spiking self-attention plus spiking MLP, both residual, on [L, D] tokens.
template <class T>
class SpikingAttentionBlock {
 public:
  static constexpr std::size_t kNeurons = 7;  // input, q, k, v, attention, mlp input, mlp hidden

  SpikingAttentionBlock(std::size_t dim, std::size_t hidden, const NeuronConfig& neuron, ParameterSet<T>& params,
                        Rng& rng, const std::string& prefix)
      : neuron_(neuron) {
    auto proj = [&](const std::string& n, std::size_t out, std::size_t in) {
      projs_.push_back({&params.add(prefix + n + ".weight", scaled_uniform<T>(rng, {out, in}, in)),
                        &params.add(prefix + n + ".bn_gain", Tensor<T>::ones({out})),
                        &params.add(prefix + n + ".bn_bias", Tensor<T>::zeros({out}))});
    };
    proj("q", dim, dim);
    proj("k", dim, dim);
    proj("v", dim, dim);
    proj("o", dim, dim);
    proj("mlp1", hidden, dim);
    proj("mlp2", dim, hidden);
  }

  /// One time step. `states` holds kNeurons entries that persist across steps.
  Var<T> step(Graph<T>& g, const Var<T>& x, std::vector<NeuronState<T>>& states,
              SpikingBlockTrace<T>* trace = nullptr) const {
    states.resize(kNeurons);
    // Spike trains even for LIAF, so every attention operand is binary.
    auto fire = [&](std::size_t n, const Var<T>& in) { return neuron_step(states[n], in, neuron_).spikes; };
    auto pbn = [&](std::size_t p, const Var<T>& in) {
      return token_batch_norm(linear(in, g.param(*projs_[p].w)), g.param(*projs_[p].gain), g.param(*projs_[p].bias));
    };
    const Var<T> s = fire(0, x);
    const Var<T> q = fire(1, pbn(0, s)), k = fire(2, pbn(1, s)), v = fire(3, pbn(2, s));
    const Var<T> att = spike_dot_attention(q, k, v);
    const Var<T> x1 = add(x, pbn(3, fire(4, att)));
    const Var<T> s2 = fire(5, x1);
    const Var<T> h = fire(6, pbn(4, s2));
    if (trace) *trace = {q, k, v, att, {s, q, k, v, s2, h}};
    return add(x1, pbn(5, h));
  }

 private:
  struct Proj {
    Parameter<T>* w;
    Parameter<T>* gain;
    Parameter<T>* bias;
  };
  NeuronConfig neuron_;
  std::vector<Proj> projs_;
};

/// Pre-norm transformer block without biases: x + Attn(LN x), then x + MLP(LN x).
template <class T>
class TransformerBlock {
 public:
  TransformerBlock(std::size_t dim, std::size_t hidden, ParameterSet<T>& params, Rng& rng, const std::string& prefix) {
    auto add = [&](const std::string& n, Shape s, std::size_t fan_in) {
      return &params.add(prefix + n, scaled_uniform<T>(rng, std::move(s), fan_in));
    };
    wq_ = add("wq", {dim, dim}, dim);
    wk_ = add("wk", {dim, dim}, dim);
    wv_ = add("wv", {dim, dim}, dim);
    wo_ = add("wo", {dim, dim}, dim);
    w1_ = add("mlp1", {hidden, dim}, dim);
    w2_ = add("mlp2", {dim, hidden}, hidden);
    for (int i = 0; i < 2; ++i) {
      ln_g_[i] = &params.add(prefix + "ln" + std::to_string(i + 1) + ".gain", Tensor<T>::ones({dim}));
      ln_b_[i] = &params.add(prefix + "ln" + std::to_string(i + 1) + ".bias", Tensor<T>::zeros({dim}));
    }
  }

  Var<T> forward(Graph<T>& g, const Var<T>& x) const {
    const T inv = T{1} / std::sqrt(static_cast<T>(x.dim(1)));
    auto h = layer_norm(x, g.param(*ln_g_[0]), g.param(*ln_b_[0]));
    auto q = linear(h, g.param(*wq_)), k = linear(h, g.param(*wk_)), v = linear(h, g.param(*wv_));
    auto att = matmul(softmax(scale(matmul(q, transpose(k)), inv), -1), v);
    auto x1 = add(x, linear(att, g.param(*wo_)));
    auto h2 = layer_norm(x1, g.param(*ln_g_[1]), g.param(*ln_b_[1]));
    return add(x1, linear(relu(linear(h2, g.param(*w1_))), g.param(*w2_)));
  }

 private:
  Parameter<T>*wq_, *wk_, *wv_, *wo_, *w1_, *w2_;
  Parameter<T>* ln_g_[2];
  Parameter<T>* ln_b_[2];
};

template <class T>
struct TokenFusionOutput {
  Var<T> to_mst;        // [bottleneck_tokens, D]
  Var<T> event_tokens;  // [tokens, D]
};

/// concat[bottleneck tokens, event tokens] -> transformer blocks -> split.
template <class T>
TokenFusionOutput<T> token_bottleneck_fuse(Graph<T>& g, const Var<T>& event_tokens, const Var<T>& bottleneck_tokens,
                                           const std::vector<TransformerBlock<T>>& blocks) {
  if (event_tokens.value().rank() != 2 || bottleneck_tokens.value().rank() != 2 ||
      event_tokens.dim(1) != bottleneck_tokens.dim(1))
    throw ShapeError("token fusion: event tokens " + to_string(event_tokens.shape()) + " and bottleneck tokens " +
                     to_string(bottleneck_tokens.shape()) + " disagree");
  const std::size_t b = bottleneck_tokens.dim(0), total = b + event_tokens.dim(0);
  Var<T> x = concat<T>({bottleneck_tokens, event_tokens}, 0);
  for (const auto& blk : blocks) x = blk.forward(g, x);
  return {slice(x, 0, 0, b), slice(x, 0, b, total)};
}

template <class T>
struct SpikeformerOutput {
  Var<T> tokens;        // [L, D] mean over steps of the last spiking block
  Var<T> to_mst;        // [B, D]
  Var<T> event_tokens;  // [L, D]
  std::uint64_t spikes = 0;
  std::size_t neurons_per_step = 0;
  std::vector<SpikingBlockTrace<T>> traces;  // first block, per step
};

/// Event voxels -> spiking patch tokens -> spiking attention blocks over the
/// time bins -> token fusion with learnable bottleneck tokens.
template <class T>
class Spikeformer {
 public:
  Spikeformer(const SpikeTokenConfig& cfg, std::size_t input_channels, const NeuronConfig& neuron,
              ParameterSet<T>& params, Rng& rng, const std::string& prefix = "spikeformer.")
      : cfg_(cfg), neuron_(neuron) {
    cfg_.validate();
    const std::size_t d = cfg_.dim, p = cfg_.patch;
    embed_w_ = &params.add(prefix + "embed.weight",
                           scaled_uniform<T>(rng, {d, input_channels, p, p}, input_channels * p * p));
    embed_g_ = &params.add(prefix + "embed.bn_gain", Tensor<T>::ones({d}));
    embed_b_ = &params.add(prefix + "embed.bn_bias", Tensor<T>::zeros({d}));
    for (std::size_t i = 0; i < cfg_.spiking_blocks; ++i)
      spiking_.emplace_back(d, d * cfg_.mlp_ratio, neuron_, params, rng, prefix + "sblock" + std::to_string(i) + ".");
    for (std::size_t i = 0; i < cfg_.fusion_blocks; ++i)
      fusion_.emplace_back(d, d * cfg_.mlp_ratio, params, rng, prefix + "fblock" + std::to_string(i) + ".");
    bottleneck_ = &params.add(prefix + "bottleneck_tokens",
                              rng.uniform_tensor<T>({cfg_.bottleneck_tokens, d}, -0.1, 0.1));
  }

  const SpikeTokenConfig& config() const { return cfg_; }
  const std::vector<TransformerBlock<T>>& fusion_blocks() const { return fusion_; }

  /// voxels [T, C, H, W].
  SpikeformerOutput<T> forward(Graph<T>& g, const Tensor<T>& voxels) const {
    const auto& vs = voxels.shape();
    if (vs.size() != 4) throw ShapeError("spikeformer: voxels must be [T, C, H, W], got " + to_string(vs));
    const std::size_t steps = vs[0], plane = voxels.numel() / steps, d = cfg_.dim, L = cfg_.tokens();
    SpikeformerOutput<T> out;
    out.neurons_per_step = L * d * (1 + spiking_.size() * SpikingAttentionBlock<T>::kNeurons) +
                           spiking_.size() * L * d * (cfg_.mlp_ratio - 1);
    NeuronState<T> embed_state;
    std::vector<std::vector<NeuronState<T>>> states(spiking_.size());
    Var<T> acc;
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor<T> frame({1, vs[1], vs[2], vs[3]});
      std::copy_n(voxels.data().begin() + t * plane, plane, frame.data().begin());
      auto pooled = adaptive_avg_pool2d(g.constant(std::move(frame)), cfg_.grid_h * cfg_.patch, cfg_.grid_w * cfg_.patch);
      auto patches = conv2d(pooled, g.param(*embed_w_), cfg_.patch);
      auto tokens = transpose(reshape(patches, {d, L}));
      auto x = neuron_step(embed_state, token_batch_norm(tokens, g.param(*embed_g_), g.param(*embed_b_)), neuron_)
                   .spikes;
      out.spikes += count_spikes(x.value());
      for (std::size_t b = 0; b < spiking_.size(); ++b) {
        SpikingBlockTrace<T> tr;
        x = spiking_[b].step(g, x, states[b], &tr);
        for (const auto& s : tr.spikes) out.spikes += count_spikes(s.value());
        if (b == 0) out.traces.push_back(tr);
      }
      acc = t == 0 ? x : add(acc, x);
    }
    out.tokens = steps == 1 ? acc : scale(acc, T{1} / static_cast<T>(steps));
    auto fused = token_bottleneck_fuse(g, out.tokens, g.param(*bottleneck_), fusion_);
    out.to_mst = fused.to_mst;
    out.event_tokens = fused.event_tokens;
    return out;
  }

 private:
  SpikeTokenConfig cfg_;
  NeuronConfig neuron_;
  Parameter<T>* embed_w_ = nullptr;
  Parameter<T>* embed_g_ = nullptr;
  Parameter<T>* embed_b_ = nullptr;
  std::vector<SpikingAttentionBlock<T>> spiking_;
  std::vector<TransformerBlock<T>> fusion_;
  Parameter<T>* bottleneck_ = nullptr;
};

}  // namespace hsnn
