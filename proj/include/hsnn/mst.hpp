#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/module.hpp"
#include "hsnn/ops.hpp"

namespace hsnn {

struct MstConfig {
  std::size_t frames = 16;
  std::size_t clips = 4;
  std::size_t dim = 64;
  std::size_t image_size = 32;  // frames are resized to image_size x image_size
  std::array<std::size_t, 3> stem_channels{8, 16, 32};
  std::size_t output_dim = 128;

  static MstConfig paper() {
    MstConfig c;
    c.dim = 512;
    c.image_size = 224;
    c.stem_channels = {64, 128, 256};
    c.output_dim = 4096;
    return c;
  }

  static MstConfig tiny() { return MstConfig{}; }

  std::size_t clip_size() const { return frames / clips; }

  void validate() const {
    if (clips == 0 || frames == 0 || frames % clips != 0)
      throw std::invalid_argument("mst: " + std::to_string(frames) + " frames do not divide into " +
                                  std::to_string(clips) + " clips");
    if (dim == 0 || output_dim == 0) throw std::invalid_argument("mst: dimensions must be >= 1");
    if (image_size < 8) throw std::invalid_argument("mst: image_size must be >= 8 for three 2x2 pools");
  }
};

/// Weights [d, d] stored [out, in]; gates follow r, z, n in that order.
template <class T>
struct GruWeights {
  Var<T> w_ir, w_hr, w_iz, w_hz, w_in, w_hn;
  Var<T> b_ir, b_hr, b_iz, b_hz, b_in, b_hn;
};

/// r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
/// z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
/// n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
template <class T>
Var<T> gru_cell(const Var<T>& x, const Var<T>& h, const GruWeights<T>& p) {
  if (x.shape() != h.shape())
    throw ShapeError("gru_cell: input " + to_string(x.shape()) + " and hidden " + to_string(h.shape()) + " differ");
  auto r = sigmoid(linear(x, p.w_ir, p.b_ir) + linear(h, p.w_hr, p.b_hr));
  auto z = sigmoid(linear(x, p.w_iz, p.b_iz) + linear(h, p.w_hz, p.b_hz));
  auto n = tanh(linear(x, p.w_in, p.b_in) + r * linear(h, p.w_hn, p.b_hn));
  return one_minus(z) * n + z * h;
}

/// Runs the sequence from a zero hidden state; returns every hidden state.
template <class T>
std::vector<Var<T>> gru_sequence(const std::vector<Var<T>>& seq, const GruWeights<T>& p) {
  if (seq.empty()) throw std::invalid_argument("gru_sequence: empty sequence");
  Var<T> h = seq[0].graph().constant(Tensor<T>::zeros(seq[0].shape()));
  std::vector<Var<T>> out;
  for (const auto& x : seq) out.push_back(h = gru_cell(x, h, p));
  return out;
}

template <class T>
struct AttentionResult {
  Var<T> output;   // [1, d]
  Var<T> weights;  // [1, L]
};

/// softmax(q K^T / sqrt(d)) V for q [1, d] and keys = values [L, d]. An
/// optional extra token [1, d] is appended to both.
template <class T>
AttentionResult<T> cross_attention(const Var<T>& query, const Var<T>& keys_values, const Var<T>& extra = Var<T>()) {
  if (keys_values.value().rank() != 2 || keys_values.dim(0) == 0)
    throw std::invalid_argument("cross_attention: need a non-empty [L, d] key set");
  if (query.value().rank() != 2 || query.dim(0) != 1 || query.dim(1) != keys_values.dim(1))
    throw ShapeError("cross_attention: query " + to_string(query.shape()) + " vs keys " +
                     to_string(keys_values.shape()));
  Var<T> kv = extra.valid() ? concat<T>({keys_values, extra}, 0) : keys_values;
  const T scale_by = T{1} / std::sqrt(static_cast<T>(query.dim(1)));
  auto w = softmax(scale(matmul(query, transpose(kv)), scale_by), -1);
  return {matmul(w, kv), w};
}

template <class T>
struct MstOutput {
  Var<T> output;                // [1, output_dim]
  std::vector<Var<T>> memories;  // m_1 .. m_K, each [1, d]
};

/// Memory support transformer over per-frame embeddings.
template <class T>
class Mst {
 public:
  Mst(const MstConfig& cfg, ParameterSet<T>& params, Rng& rng, const std::string& prefix = "mst.") : cfg_(cfg) {
    cfg_.validate();
    std::size_t cin = 3;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t c = cfg_.stem_channels[i];
      stem_w_[i] = &params.add(prefix + "stem.conv" + std::to_string(i + 1) + ".weight",
                               scaled_uniform<T>(rng, {c, cin, 3, 3}, cin * 9, std::sqrt(2.0)));
      stem_b_[i] = &params.add(prefix + "stem.conv" + std::to_string(i + 1) + ".bias", Tensor<T>::zeros({c}));
      cin = c;
    }
    const std::size_t d = cfg_.dim;
    stem_proj_w_ = &params.add(prefix + "stem.proj.weight", scaled_uniform<T>(rng, {d, cin}, cin));
    stem_proj_b_ = &params.add(prefix + "stem.proj.bias", Tensor<T>::zeros({d}));
    const char* gates[] = {"ir", "hr", "iz", "hz", "in", "hn"};
    for (std::size_t i = 0; i < 6; ++i) {
      gru_w_[i] = &params.add(prefix + "gru.w_" + gates[i], scaled_uniform<T>(rng, {d, d}, d));
      gru_b_[i] = &params.add(prefix + "gru.b_" + gates[i], Tensor<T>::zeros({d}));
    }
    const std::size_t in = cfg_.clips * d;
    out_w_ = &params.add(prefix + "out.weight", scaled_uniform<T>(rng, {cfg_.output_dim, in}, in));
    out_b_ = &params.add(prefix + "out.bias", Tensor<T>::zeros({cfg_.output_dim}));
  }

  const MstConfig& config() const { return cfg_; }

  /// frames [N, 3, S, S] -> embeddings [N, d].
  Var<T> embed(Graph<T>& g, const Tensor<T>& frames) const {
    const auto& s = frames.shape();
    if (s.size() != 4 || s[0] != cfg_.frames || s[1] != 3 || s[2] != cfg_.image_size || s[3] != cfg_.image_size)
      throw ShapeError("mst: frames " + to_string(s) + " do not match [" + std::to_string(cfg_.frames) + ", 3, " +
                       std::to_string(cfg_.image_size) + ", " + std::to_string(cfg_.image_size) + "]");
    Var<T> x = g.constant(frames);
    for (std::size_t i = 0; i < 3; ++i)
      x = max_pool2d(relu(add_bias(conv2d(x, g.param(*stem_w_[i]), 1, Padding::uniform(1)), g.param(*stem_b_[i]), 1)),
                     2, 2);
    x = reshape(adaptive_avg_pool2d(x, 1, 1), {cfg_.frames, cfg_.stem_channels[2]});
    return linear(x, g.param(*stem_proj_w_), g.param(*stem_proj_b_));
  }

  GruWeights<T> gru(Graph<T>& g) const {
    return {g.param(*gru_w_[0]), g.param(*gru_w_[1]), g.param(*gru_w_[2]), g.param(*gru_w_[3]),
            g.param(*gru_w_[4]), g.param(*gru_w_[5]), g.param(*gru_b_[0]), g.param(*gru_b_[1]),
            g.param(*gru_b_[2]), g.param(*gru_b_[3]), g.param(*gru_b_[4]), g.param(*gru_b_[5])};
  }

  /// embeddings [N, d]; `tokens` is empty or holds one [1, d] key/value token per clip.
  MstOutput<T> forward(Graph<T>& g, const Var<T>& embeddings, const std::vector<Var<T>>& tokens = {}) const {
    const std::size_t d = cfg_.dim, c = cfg_.clip_size();
    if (embeddings.shape() != Shape{cfg_.frames, d})
      throw ShapeError("mst: embeddings " + to_string(embeddings.shape()) + " do not match [" +
                       std::to_string(cfg_.frames) + ", " + std::to_string(d) + "]");
    if (!tokens.empty() && tokens.size() != cfg_.clips)
      throw std::invalid_argument("mst: expected one bottleneck token per clip");
    const auto w = gru(g);
    MstOutput<T> out;
    Var<T> m = g.constant(Tensor<T>::zeros({1, d}));
    for (std::size_t k = 0; k < cfg_.clips; ++k) {
      std::vector<Var<T>> seq{m};
      for (std::size_t i = k * c; i + 1 < (k + 1) * c; ++i) seq.push_back(slice(embeddings, 0, i, i + 1));
      const auto hidden = gru_sequence(seq, w);
      const Var<T> query = slice(embeddings, 0, (k + 1) * c - 1, (k + 1) * c);
      m = cross_attention(query, concat(hidden, 0), tokens.empty() ? Var<T>() : tokens[k]).output;
      out.memories.push_back(m);
    }
    out.output = linear(concat(out.memories, 1), g.param(*out_w_), g.param(*out_b_));
    return out;
  }

 private:
  MstConfig cfg_;
  std::array<Parameter<T>*, 3> stem_w_{}, stem_b_{};
  Parameter<T>* stem_proj_w_ = nullptr;
  Parameter<T>* stem_proj_b_ = nullptr;
  std::array<Parameter<T>*, 6> gru_w_{}, gru_b_{};
  Parameter<T>* out_w_ = nullptr;
  Parameter<T>* out_b_ = nullptr;
};

/// Clip k covers embeddings [k*c, (k+1)*c); its last index is the query.
inline std::vector<std::size_t> clip_query_indices(std::size_t frames, std::size_t clip_size) {
  if (clip_size == 0 || frames % clip_size != 0)
    throw std::invalid_argument("clip size " + std::to_string(clip_size) + " does not divide " +
                                std::to_string(frames) + " frames");
  std::vector<std::size_t> q;
  for (std::size_t k = 0; k < frames / clip_size; ++k) q.push_back((k + 1) * clip_size - 1);
  return q;
}

}  // namespace hsnn
