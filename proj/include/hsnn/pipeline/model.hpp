#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hsnn/fusion.hpp"
#include "hsnn/mst.hpp"
#include "hsnn/pipeline/config.hpp"
#include "hsnn/scnn.hpp"

namespace hsnn {

/// One paired sample: voxels [T, 2, H, W], frames [N, 3, S, S].
template <class T>
struct Sample {
  Tensor<T> voxels;
  Tensor<T> frames;
  std::size_t label = 0;
  std::string id;
};

template <class T>
struct ModelOutput {
  Var<T> scores;  // [1, num_classes], sigmoid probabilities
  Var<T> fused;   // [1, fused_length]
  std::uint64_t spikes = 0;
  std::size_t neurons_per_step = 0;
  std::vector<std::uint64_t> layer_spikes;              // SCNN layers only
  std::vector<std::pair<std::string, Var<T>>> features;  // intermediate maps by name
};

/// Two-layer classification head parameters.
template <class T>
struct Head {
  Parameter<T>* w1 = nullptr;
  Parameter<T>* b1 = nullptr;
  Parameter<T>* w2 = nullptr;
  Parameter<T>* b2 = nullptr;
};

/// sigmoid(W2 relu(W1 x + b1) + b2) for x [1, F].
template <class T>
Var<T> head_forward(Graph<T>& g, const Var<T>& fused, const Head<T>& h) {
  const std::size_t f = h.w1->value.shape()[1];
  if (fused.value().rank() != 2 || fused.dim(0) != 1 || fused.dim(1) != f)
    throw ShapeError("head: fused feature " + to_string(fused.shape()) + " does not match [1, " + std::to_string(f) +
                     "]");
  return sigmoid(linear(relu(linear(fused, g.param(*h.w1), g.param(*h.b1))), g.param(*h.w2), g.param(*h.b2)));
}

/// Assembles the configured branches and the head. Modules keep pointers into
/// the parameter set, so a Model is neither copyable nor movable.
template <class T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.sync();
    cfg_.validate();
    Rng rng(cfg_.seed);
    const ScnnConfig& sc = cfg_.scnn;
    if (cfg_.arch == Arch::SpikeformerMst) {
      spikeformer_ = std::make_unique<Spikeformer<T>>(cfg_.tokens, sc.input_channels, sc.neuron, params_, rng);
    } else if (cfg_.uses_events()) {
      scnn_ = std::make_unique<Scnn<T>>(sc, params_, rng);
    }
    if (cfg_.uses_mbf()) {
      mbf_ = std::make_unique<Mbf<T>>(cfg_.mbf, params_, rng);
      token_ = std::make_unique<BottleneckToken<T>>(cfg_.mbf.half_numel(), cfg_.mst.dim, params_, rng);
    }
    if (spikeformer_)
      token_ = std::make_unique<BottleneckToken<T>>(cfg_.tokens.dim, cfg_.mst.dim, params_, rng);
    if (cfg_.uses_frames()) mst_ = std::make_unique<Mst<T>>(cfg_.mst, params_, rng);
    const std::size_t f = cfg_.fused_length(), hid = cfg_.head_hidden, c = cfg_.num_classes;
    head_.w1 = &params_.add("head.fc1.weight", scaled_uniform<T>(rng, {hid, f}, f));
    head_.b1 = &params_.add("head.fc1.bias", Tensor<T>::zeros({hid}));
    head_.w2 = &params_.add("head.fc2.weight", scaled_uniform<T>(rng, {c, hid}, hid));
    head_.b2 = &params_.add("head.fc2.bias", Tensor<T>::zeros({c}));
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const Head<T>& head() const { return head_; }

  ModelOutput<T> forward(Graph<T>& g, const Sample<T>& s, bool keep_features = false) const {
    if (s.label >= cfg_.num_classes)
      throw std::invalid_argument("sample " + s.id + ": label " + std::to_string(s.label) + " outside " +
                                  std::to_string(cfg_.num_classes) + " classes");
    ModelOutput<T> out;
    auto keep = [&](const std::string& name, const Var<T>& v) {
      if (keep_features) out.features.emplace_back(name, v);
    };
    std::vector<Var<T>> parts;
    std::vector<Var<T>> tokens;
    if (scnn_) {
      auto e = scnn_->forward(g, s.voxels);
      out.spikes = e.total_spikes();
      out.layer_spikes = e.spike_counts;
      out.neurons_per_step = cfg_.scnn.neurons_per_step();
      keep("scnn.a1", e.a1);
      keep("scnn.a2", e.a2);
      keep("scnn.a3", e.a3);
      keep("scnn.fused", e.fused);
      if (mbf_) {
        auto m = mbf_->forward(g, e.fused);
        keep("mbf.event_repr", m.event_repr);
        keep("mbf.bottleneck", m.bottleneck);
        parts.push_back(flatten(m.event_repr));
        tokens.assign(cfg_.mst.clips, token_->forward(g, m.bottleneck));
      } else {
        auto pooled = adaptive_avg_pool2d(e.fused, cfg_.mbf.pool_to, cfg_.mbf.pool_to);
        keep("scnn.pooled", pooled);
        parts.push_back(flatten(pooled));
      }
    }
    if (spikeformer_) {
      auto e = spikeformer_->forward(g, s.voxels);
      out.spikes = e.spikes;
      out.neurons_per_step = e.neurons_per_step;
      keep("spikeformer.tokens", e.tokens);
      keep("spikeformer.event_tokens", e.event_tokens);
      keep("spikeformer.to_mst", e.to_mst);
      parts.push_back(row_mean(g, e.event_tokens));
      tokens.assign(cfg_.mst.clips, token_->forward(g, row_mean(g, e.to_mst)));
    }
    if (mst_) {
      auto emb = mst_->embed(g, s.frames);
      keep("mst.embeddings", emb);
      auto m = mst_->forward(g, emb, tokens);
      keep("mst.output", m.output);
      parts.push_back(m.output);
    }
    out.fused = parts.size() == 1 ? parts[0] : concat(parts, 1);
    keep("fused", out.fused);
    out.scores = head_forward(g, out.fused, head_);
    keep("scores", out.scores);
    return out;
  }

 private:
  /// [L, D] -> [1, D] mean over rows.
  static Var<T> row_mean(Graph<T>& g, const Var<T>& x) {
    const std::size_t l = x.dim(0);
    return matmul(g.constant(Tensor<T>(Shape{1, l}, T{1} / static_cast<T>(l))), x);
  }

  ModelConfig cfg_;
  ParameterSet<T> params_;
  std::unique_ptr<Scnn<T>> scnn_;
  std::unique_ptr<Spikeformer<T>> spikeformer_;
  std::unique_ptr<Mbf<T>> mbf_;
  std::unique_ptr<BottleneckToken<T>> token_;
  std::unique_ptr<Mst<T>> mst_;
  Head<T> head_;
};

}  // namespace hsnn
