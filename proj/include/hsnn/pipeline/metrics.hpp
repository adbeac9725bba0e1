#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsnn {

struct Metrics {
  double top1 = 0;
  double top5 = 0;
  bool top5_trivial = false;  // fewer than 5 classes: top-5 is 1 by definition
  double mean_class_accuracy = 0;
  std::size_t samples = 0;
  std::vector<std::size_t> per_class_total;
  std::vector<std::size_t> per_class_correct;  // top-1 hits
};

/// Position of the true class when classes are ordered by descending score,
/// ties going to the lower class index.
inline std::size_t rank_of(std::span<const double> scores, std::size_t label) {
  if (label >= scores.size())
    throw std::out_of_range("class index " + std::to_string(label) + " outside " + std::to_string(scores.size()) +
                            " classes");
  std::size_t r = 0;
  for (std::size_t c = 0; c < scores.size(); ++c)
    if (scores[c] > scores[label] || (scores[c] == scores[label] && c < label)) ++r;
  return r;
}

/// Accumulates per-sample scores into top-k and per-class accuracies.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::size_t classes) : total_(classes, 0), correct_(classes, 0) {
    if (classes == 0) throw std::invalid_argument("metrics: need at least one class");
  }

  void add(std::span<const double> scores, std::size_t label) {
    if (scores.size() != total_.size())
      throw std::invalid_argument("metrics: expected " + std::to_string(total_.size()) + " scores, got " +
                                  std::to_string(scores.size()));
    const std::size_t r = rank_of(scores, label);
    ++total_[label];
    if (r == 0) ++correct_[label];
    if (r < 5) ++top5_;
    ++n_;
  }

  Metrics result() const {
    Metrics m;
    m.samples = n_;
    m.per_class_total = total_;
    m.per_class_correct = correct_;
    m.top5_trivial = total_.size() < 5;
    if (n_ == 0) return m;
    std::size_t hits = 0, seen = 0;
    for (std::size_t c = 0; c < total_.size(); ++c) {
      hits += correct_[c];
      if (total_[c] == 0) continue;
      m.mean_class_accuracy += static_cast<double>(correct_[c]) / static_cast<double>(total_[c]);
      ++seen;
    }
    m.top1 = static_cast<double>(hits) / static_cast<double>(n_);
    m.top5 = m.top5_trivial ? 1.0 : static_cast<double>(top5_) / static_cast<double>(n_);
    m.mean_class_accuracy /= static_cast<double>(seen);
    return m;
  }

 private:
  std::vector<std::size_t> total_, correct_;
  std::size_t top5_ = 0, n_ = 0;
};

}  // namespace hsnn
