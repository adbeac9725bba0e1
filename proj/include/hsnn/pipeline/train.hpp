#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/ops.hpp"
#include "hsnn/pipeline/metrics.hpp"
#include "hsnn/pipeline/model.hpp"
#include "hsnn/pipeline/optim.hpp"

namespace hsnn {

/// Raised when the loss or a parameter turns non-finite; `parameter` is empty
/// when no parameter value or gradient is to blame.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string parameter, const std::string& what)
      : std::runtime_error(what), parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

template <class T>
Tensor<T> one_hot(std::size_t label, std::size_t classes) {
  Tensor<T> y({1, classes});
  y[label] = T{1};
  return y;
}

inline std::vector<double> to_doubles(const auto& t) { return std::vector<double>(t.data().begin(), t.data().end()); }

struct SampleResult {
  double loss = 0;
  std::vector<double> scores;
  std::uint64_t spikes = 0;
  std::size_t neurons_per_step = 0;
  std::vector<std::uint64_t> layer_spikes;
};

/// Forward + BCE on one sample; with `backward` the parameter gradients are accumulated.
template <class T>
SampleResult run_sample(const Model<T>& model, const Sample<T>& s, bool backward) {
  Graph<T> g;
  g.set_grad_enabled(backward);
  auto out = model.forward(g, s);
  auto loss = bce_loss(out.scores, one_hot<T>(s.label, model.config().num_classes));
  if (backward) g.backward(loss);
  return {static_cast<double>(loss.value()[0]), to_doubles(out.scores.value()), out.spikes, out.neurons_per_step,
          out.layer_spikes};
}

/// Names the first parameter with a non-finite value, else the first with a
/// non-finite gradient; a bad value poisons every upstream gradient.
template <class T>
std::string first_non_finite(const ParameterSet<T>& params, std::string& what) {
  auto bad = [](const Tensor<T>& t) {
    for (T v : t.data())
      if (!std::isfinite(static_cast<double>(v))) return true;
    return false;
  };
  for (const auto& p : params)
    if (bad(p.value)) {
      what = "value";
      return p.name;
    }
  for (const auto& p : params)
    if (bad(p.grad)) {
      what = "gradient";
      return p.name;
    }
  return {};
}

struct EvalResult {
  Metrics metrics;
  double loss = 0;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<std::uint64_t>> layer_spikes;
  double spikes_per_sample = 0;
  std::size_t neurons_per_step = 0;
};

template <class T>
EvalResult evaluate(const Model<T>& model, const std::vector<Sample<T>>& data) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  MetricsAccumulator acc(model.config().num_classes);
  EvalResult r;
  for (const auto& s : data) {
    auto sr = run_sample(model, s, false);
    acc.add(sr.scores, s.label);
    r.loss += sr.loss;
    r.spikes_per_sample += static_cast<double>(sr.spikes);
    r.neurons_per_step = sr.neurons_per_step;
    r.scores.push_back(std::move(sr.scores));
    if (!sr.layer_spikes.empty()) r.layer_spikes.push_back(std::move(sr.layer_spikes));
  }
  r.loss /= static_cast<double>(data.size());
  r.spikes_per_sample /= static_cast<double>(data.size());
  r.metrics = acc.result();
  return r;
}

inline std::string format_metrics(const Metrics& m) {
  std::ostringstream os;
  os.precision(6);
  os << "top1=" << m.top1 << " top5=" << m.top5 << (m.top5_trivial ? " top5_trivial=1" : "")
     << " mean_class_acc=" << m.mean_class_accuracy << " samples=" << m.samples;
  return os.str();
}

struct TrainResult {
  std::uint64_t steps = 0;
  std::vector<double> step_losses;  // mean batch loss per optimizer step
  EvalResult final_eval;
};

/// Mini-batch Adam over a per-epoch seeded shuffle. Batch gradients are the
/// mean of per-sample gradients, reduced in batch order. One `key=value`
/// line per epoch (and a final metrics line) goes to `log`.
template <class T>
TrainResult train(Model<T>& model, const std::vector<Sample<T>>& data, std::ostream* log = nullptr) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const ModelConfig& cfg = model.config();
  const TrainConfig& tc = cfg.train;
  Adam<T> adam(model.params(), {tc.lr, tc.beta1, tc.beta2, tc.eps});
  Rng order(cfg.seed ^ 0x5eed0fda7aULL);
  std::vector<std::size_t> perm(data.size());
  TrainResult r;
  const bool capped = tc.max_steps > 0;
  const std::size_t epochs = capped && tc.epochs == 0 ? std::size_t(-1) : tc.epochs;
  for (std::size_t epoch = 1; epoch <= epochs && !(capped && r.steps >= tc.max_steps); ++epoch) {
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[order.below(i)]);
    MetricsAccumulator acc(cfg.num_classes);
    double epoch_loss = 0;
    for (std::size_t b = 0; b < perm.size() && !(capped && r.steps >= tc.max_steps); b += tc.batch) {
      const std::size_t e = std::min(perm.size(), b + tc.batch);
      model.params().zero_grad();
      double batch_loss = 0;
      for (std::size_t i = b; i < e; ++i) {
        const auto& s = data[perm[i]];
        auto sr = run_sample(model, s, true);
        if (!std::isfinite(sr.loss)) {
          std::string what;
          const auto name = first_non_finite(model.params(), what);
          throw NonFiniteError(name, "non-finite loss at step " + std::to_string(r.steps + 1) + " on sample " + s.id +
                                         (name.empty() ? std::string() : ": parameter " + name + " has a non-finite " + what));
        }
        acc.add(sr.scores, s.label);
        batch_loss += sr.loss;
      }
      const T inv = T{1} / static_cast<T>(e - b);
      for (auto& p : model.params())
        for (auto& v : p.grad.data()) v *= inv;
      std::string what;
      if (auto name = first_non_finite(model.params(), what); !name.empty())
        throw NonFiniteError(name, "parameter " + name + " has a non-finite " + what + " at step " +
                                       std::to_string(r.steps + 1));
      adam.step();
      ++r.steps;
      r.step_losses.push_back(batch_loss / static_cast<double>(e - b));
      epoch_loss += batch_loss;
    }
    if (log) {
      const auto m = acc.result();
      *log << "epoch=" << epoch << " step=" << r.steps << " loss=" << epoch_loss / static_cast<double>(m.samples)
           << " train_top1=" << m.top1 << "\n";
    }
  }
  r.final_eval = evaluate(model, data);
  if (log) *log << "final step=" << r.steps << " loss=" << r.final_eval.loss << " " << format_metrics(r.final_eval.metrics) << "\n";
  return r;
}

// ------------------------------------------------------------------ feature dumps

/// Writes a float32 little-endian .npy (format 1.0).
template <class T>
void write_npy(const std::filesystem::path& path, const Tensor<T>& t) {
  std::string shape = "(";
  for (auto d : t.shape()) shape += std::to_string(d) + ",";
  shape += ")";
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape + ", }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const char magic[] = {'\x93', 'N', 'U', 'M', 'P', 'Y', 1, 0};
  out.write(magic, sizeof magic);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.put(static_cast<char>(len & 0xff)).put(static_cast<char>(len >> 8));
  out << header;
  for (T v : t.data()) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>(u >> (8 * i)));
  }
}

/// Dumps every named intermediate map of one forward pass as `<dir>/<prefix><name>.npy`.
template <class T>
std::vector<std::string> dump_features(const Model<T>& model, const Sample<T>& s, const std::filesystem::path& dir,
                                       const std::string& prefix = "") {
  std::filesystem::create_directories(dir);
  Graph<T> g;
  g.set_grad_enabled(false);
  auto out = model.forward(g, s, true);
  std::vector<std::string> files;
  for (const auto& [name, v] : out.features) {
    const auto f = dir / (prefix + name + ".npy");
    write_npy(f, v.value());
    files.push_back(f.string());
  }
  return files;
}

}  // namespace hsnn
