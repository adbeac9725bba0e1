#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "hsnn/gradcheck.hpp"
#include "hsnn/mst.hpp"
#include "hsnn/ops.hpp"
#include "hsnn/pipeline/dataset.hpp"
#include "hsnn/pipeline/model.hpp"
#include "hsnn/pipeline/train.hpp"

namespace hsnn {

/// Finite-difference checks of every differentiable operation plus the whole
/// tiny model (smooth neurons, BCE loss), all in 64-bit.
inline std::vector<GradCheckReport> run_gradcheck_suite(std::ostream* progress = nullptr, std::uint64_t seed = 7) {
  using V = Var<double>;
  using Ins = std::vector<V>;
  Rng rng(seed);
  auto rt = [&](Shape s, double lo = -1, double hi = 1) { return rng.uniform_tensor<double>(std::move(s), lo, hi); };
  std::vector<GradCheckReport> out;
  auto record = [&](GradCheckReport r) {
    if (progress)
      *progress << (r.passed() ? "PASS " : "FAIL ") << r.name << " max_rel_error=" << r.max_rel_error << "\n"
                << std::flush;
    out.push_back(std::move(r));
  };

  record(grad_check("conv2d", {rt({1, 2, 6, 5}), rt({3, 2, 3, 3})},
                    [](Graph<double>&, const Ins& in) { return conv2d(in[0], in[1], 1, Padding::uniform(1)); }));
  record(grad_check("conv_transpose2d", {rt({1, 3, 4, 4}), rt({3, 2, 4, 4})}, [](Graph<double>&, const Ins& in) {
    return conv_transpose2d(in[0], in[1], 2, Padding::uniform(1));
  }));
  record(grad_check("deformable_conv2d", {rt({1, 2, 5, 5}), rt({2, 2, 3, 3}), rt({1, 18, 5, 5}, -1.4, 1.4)},
                    [](Graph<double>&, const Ins& in) {
                      return deformable_conv2d(in[0], in[1], in[2], 1, Padding::uniform(1));
                    }));
  record(grad_check("max_pool2d", {rt({1, 2, 6, 6})},
                    [](Graph<double>&, const Ins& in) { return max_pool2d(in[0], 2, 2); }));
  record(grad_check("group_norm", {rt({1, 4, 3, 3}), rt({4}), rt({4})},
                    [](Graph<double>&, const Ins& in) { return group_norm(in[0], 2, in[1], in[2]); }));
  record(grad_check("matmul", {rt({3, 4}), rt({4, 5})},
                    [](Graph<double>&, const Ins& in) { return matmul(in[0], in[1]); }));
  record(grad_check("softmax", {rt({3, 6}, -3, 3)},
                    [](Graph<double>&, const Ins& in) { return softmax(in[0], -1); }));
  {
    std::vector<Tensor<double>> ins{rt({1, 5}), rt({1, 5})};
    for (int i = 0; i < 12; ++i) ins.push_back(i < 6 ? rt({5, 5}) : rt({5}));
    record(grad_check("gru_cell", std::move(ins), [](Graph<double>&, const Ins& in) {
      GruWeights<double> w{in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9], in[10], in[11], in[12], in[13]};
      return gru_cell(in[0], in[1], w);
    }));
  }
  record(grad_check("cross_attention", {rt({1, 4}), rt({5, 4}), rt({1, 4})}, [](Graph<double>&, const Ins& in) {
    return cross_attention(in[0], in[1], in[2]).output;
  }));
  {
    Tensor<double> y({1, 5});
    y[2] = 1;
    record(grad_check("bce_loss", {rt({1, 5}, 0.05, 0.95)},
                      [y](Graph<double>&, const Ins& in) { return bce_loss(in[0], y); }));
  }
  {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.scnn.neuron.smooth_forward = true;
    cfg.seed = seed;
    Model<double> model(cfg);
    // Zero offsets sample exactly on grid points, where bilinear weights have a kink.
    for (auto& p : model.params())
      if (p.name.find("offset_") != std::string::npos)
        for (auto& v : p.value.data()) v = rng.uniform(-0.05, 0.05);
    SynthOptions so;
    so.seed = seed;
    Rng data_rng(seed);
    const auto raw = synth_sample(so, 1, data_rng);
    const auto sample = make_sample<double>(raw.events, raw.frames, model.config(), 1, "synthetic");
    GradCheckOptions opt;
    opt.max_probes_per_leaf = 4;
    record(grad_check_parameters(
        "tiny_model", model.params().all(),
        [&](Graph<double>& g) {
          return bce_loss(model.forward(g, sample).scores, one_hot<double>(sample.label, cfg.num_classes));
        },
        opt));
  }
  return out;
}

}  // namespace hsnn
