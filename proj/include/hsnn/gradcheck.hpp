#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hsnn/graph.hpp"
#include "hsnn/ops/elementwise.hpp"
#include "hsnn/rng.hpp"

namespace hsnn {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Coordinates probed per leaf; 0 probes every coordinate.
  std::size_t max_probes_per_leaf = 0;
  std::uint64_t seed = 1234;
};

struct LeafCheck {
  std::string leaf;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::string name;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::vector<LeafCheck> leaves;

  bool passed() const { return std::isfinite(max_rel_error) && max_rel_error < tolerance; }
};

/// Builds a graph from the given parameters and returns its output. The
/// checker reduces non-scalar outputs with a fixed random projection.
using GradCheckBuilder = std::function<Var<double>(Graph<double>&)>;

/// Central finite differences against reverse-mode gradients, in 64-bit.
/// Relative error per coordinate is |analytic - numeric| / max(1, |numeric|).
inline GradCheckReport grad_check_parameters(const std::string& name, const std::vector<Parameter<double>*>& params,
                                             const GradCheckBuilder& build, const GradCheckOptions& opt = {}) {
  Tensor<double> projection;
  auto evaluate = [&](bool with_backward) {
    Graph<double> g;
    Var<double> out = build(g);
    if (projection.empty()) {
      Rng r(opt.seed ^ 0x9e3779b97f4a7c15ULL);
      projection = r.uniform_tensor<double>(out.shape(), 0.5, 1.5);
    }
    Var<double> loss = sum(hadamard(out, g.constant(projection)));
    if (with_backward) g.backward(loss);
    return loss.value()[0];
  };

  for (auto* p : params) p->grad = Tensor<double>();
  evaluate(true);

  GradCheckReport report{name, opt.tolerance, 0.0, {}};
  Rng pick(opt.seed);
  for (auto* p : params) {
    const Tensor<double> analytic = p->grad.empty() ? Tensor<double>::zeros(p->value.shape()) : p->grad;
    std::vector<std::size_t> coords(p->value.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opt.max_probes_per_leaf && coords.size() > opt.max_probes_per_leaf) {
      for (std::size_t i = 0; i < opt.max_probes_per_leaf; ++i)
        std::swap(coords[i], coords[i + pick.below(coords.size() - i)]);
      coords.resize(opt.max_probes_per_leaf);
    }
    LeafCheck leaf{p->name, coords.size(), 0.0};
    for (std::size_t idx : coords) {
      const double saved = p->value[idx];
      p->value[idx] = saved + opt.step;
      const double up = evaluate(false);
      p->value[idx] = saved - opt.step;
      const double down = evaluate(false);
      p->value[idx] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double err = std::abs(analytic[idx] - numeric) / std::max(1.0, std::abs(numeric));
      leaf.max_rel_error = std::max(leaf.max_rel_error, std::isfinite(err) ? err : INFINITY);
    }
    report.max_rel_error = std::max(report.max_rel_error, leaf.max_rel_error);
    report.leaves.push_back(leaf);
  }
  return report;
}

/// Convenience form: checks an operation with respect to each input tensor.
inline GradCheckReport grad_check(const std::string& name, std::vector<Tensor<double>> inputs,
                                  const std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>& op,
                                  const GradCheckOptions& opt = {}) {
  std::vector<Parameter<double>> params;
  params.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    params.push_back(Parameter<double>{"input" + std::to_string(i), std::move(inputs[i]), {}});
  std::vector<Parameter<double>*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  return grad_check_parameters(
      name, ptrs,
      [&](Graph<double>& g) {
        std::vector<Var<double>> vars;
        for (auto& p : params) vars.push_back(g.param(p));
        return op(g, vars);
      },
      opt);
}

}  // namespace hsnn
