#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/events.hpp"
#include "hsnn/frames.hpp"
#include "hsnn/pipeline/model.hpp"
#include "hsnn/rng.hpp"

namespace hsnn {

// ------------------------------------------------------------------ synthetic generator

struct SynthOptions {
  std::size_t classes = 2;
  std::size_t samples_per_class = 10;
  std::size_t size = 32;       // square sensor and frame extent
  std::size_t frames = 16;
  std::uint64_t frame_interval_us = 10'000;
  double dvs_threshold = 0.2;
  std::uint64_t seed = 1;
};

enum class Glyph { Square, Disk, Cross, Ring };

/// Whether the offset (dx, dy) from the glyph centre lies inside a glyph of radius r.
inline bool glyph_contains(Glyph g, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy), d = std::hypot(dx, dy);
  switch (g) {
    case Glyph::Square: return ax <= r && ay <= r;
    case Glyph::Disk: return d <= r;
    case Glyph::Cross: return (ax <= r && ay <= 0.35 * r) || (ay <= r && ax <= 0.35 * r);
    case Glyph::Ring: return d <= r && d >= 0.55 * r;
  }
  return false;
}

/// Folds an unbounded coordinate into [lo, hi] by mirror reflection.
inline double bounce(double x, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return lo;
  double m = std::fmod(x - lo, 2 * span);
  if (m < 0) m += 2 * span;
  return lo + (m <= span ? m : 2 * span - m);
}

struct SynthSample {
  FrameSequence frames;
  EventStream events;
};

/// Class c draws glyph c mod 4 with a class tint, moving along direction
/// 2 pi c / classes at 0.5 + 1.5 c / (classes - 1) pixels per frame,
/// reflected at the borders. Samples jitter start, heading, speed and contrast.
inline SynthSample synth_sample(const SynthOptions& o, std::size_t cls, Rng& rng) {
  const double S = static_cast<double>(o.size);
  const Glyph glyph = static_cast<Glyph>(cls % 4);
  const double r = std::max(2.0, S * (0.16 + 0.03 * static_cast<double>((cls / 4) % 3)));
  const double heading = 2 * std::numbers::pi * static_cast<double>(cls) / static_cast<double>(o.classes) +
                         rng.uniform(-0.2, 0.2);
  const double speed = (0.5 + 1.5 * static_cast<double>(cls) / static_cast<double>(o.classes - 1)) *
                       rng.uniform(0.9, 1.1) * S / 32.0;
  const double lo = r + 1, hi = S - r - 1;
  const double x0 = rng.uniform(lo, hi), y0 = rng.uniform(lo, hi);
  const double bg = rng.uniform(0.15, 0.25), fg = rng.uniform(0.8, 0.95);
  const double tint[3] = {0.6 + 0.4 * static_cast<double>(cls % 2), 0.6 + 0.4 * static_cast<double>((cls / 2) % 2),
                          0.6 + 0.4 * static_cast<double>((cls + 1) % 2)};
  SynthSample s;
  constexpr int kSuper = 4;
  for (std::size_t f = 0; f < o.frames; ++f) {
    const double t = static_cast<double>(f);
    const double cx = bounce(x0 + speed * t * std::cos(heading), lo, hi);
    const double cy = bounce(y0 + speed * t * std::sin(heading), lo, hi);
    Tensor<double> img({o.size, o.size, 3});
    for (std::size_t y = 0; y < o.size; ++y)
      for (std::size_t x = 0; x < o.size; ++x) {
        int hit = 0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx)
            hit += glyph_contains(glyph, static_cast<double>(x) + (sx + 0.5) / kSuper - cx,
                                  static_cast<double>(y) + (sy + 0.5) / kSuper - cy, r);
        const double cov = static_cast<double>(hit) / (kSuper * kSuper);
        for (std::size_t c = 0; c < 3; ++c) img[(y * o.size + x) * 3 + c] = bg + cov * (fg * tint[c] - bg);
      }
    s.frames.frames.push_back(std::move(img));
    s.frames.timestamps.push_back(f * o.frame_interval_us);
  }
  s.events = simulate_dvs(s.frames, o.dvs_threshold);
  return s;
}

inline std::string class_dir_name(std::size_t c) {
  char b[32];
  std::snprintf(b, sizeof b, "class_%03zu", c);
  return b;
}

inline std::string sample_dir_name(std::size_t i) {
  char b[32];
  std::snprintf(b, sizeof b, "sample_%03zu", i);
  return b;
}

/// Writes `<root>/<class>/<sample>/{events.evt1, frames/NNNN.ppm, timestamps.txt}`
/// plus `<root>/labels.txt` (one class name per line, line order = label).
/// Returns the event count of every sample, class-major.
inline std::vector<std::size_t> generate_dataset(const std::filesystem::path& root, const SynthOptions& o) {
  if (o.classes < 2) throw std::invalid_argument("gen-data: need at least 2 classes");
  if (o.samples_per_class < 1) throw std::invalid_argument("gen-data: need at least 1 sample per class");
  if (o.frames < 2 || o.size < 8) throw std::invalid_argument("gen-data: need >= 2 frames of at least 8x8");
  std::filesystem::create_directories(root);
  Rng rng(o.seed);
  std::vector<std::size_t> counts;
  std::ofstream labels(root / "labels.txt");
  for (std::size_t c = 0; c < o.classes; ++c) {
    labels << class_dir_name(c) << '\n';
    for (std::size_t i = 0; i < o.samples_per_class; ++i) {
      const auto dir = root / class_dir_name(c) / sample_dir_name(i);
      std::filesystem::create_directories(dir);
      const auto s = synth_sample(o, c, rng);
      save_frame_sequence(s.frames, dir / "frames", dir / "timestamps.txt");
      save_evt1((dir / "events.evt1").string(), s.events);
      counts.push_back(s.events.size());
    }
  }
  if (!labels) throw std::runtime_error("cannot write " + (root / "labels.txt").string());
  return counts;
}

// ------------------------------------------------------------------ loading

/// Voxelizes the events over the frame time span into the SCNN grid
/// (bilinear resampling scaled to conserve counts when the sensor differs)
/// and resamples the frames to the MST input.
template <class T>
Sample<T> make_sample(const EventStream& events, const FrameSequence& seq, const ModelConfig& cfg, std::size_t label,
                      std::string id) {
  seq.validate();
  if (seq.size() == 0) throw std::invalid_argument("sample " + id + ": no frames");
  const std::uint64_t t0 = seq.timestamps.front(), t1 = seq.timestamps.back() + 1;
  const std::size_t bins = cfg.scnn.steps, H = cfg.scnn.height, W = cfg.scnn.width;
  Sample<T> s;
  s.label = label;
  s.id = std::move(id);
  Tensor<T> vox = voxelize<T>(events, t0, t1, bins);
  if (events.height != H || events.width != W) {
    const double gain = static_cast<double>(events.height) * events.width / static_cast<double>(H * W);
    Tensor<T> out({bins, 2, H, W});
    const std::size_t in_plane = 2 * std::size_t{events.height} * events.width, out_plane = 2 * H * W;
    for (std::size_t b = 0; b < bins; ++b) {
      Tensor<T> bin({2, events.height, events.width});
      std::copy_n(vox.data().begin() + b * in_plane, in_plane, bin.data().begin());
      const auto r = resize_bilinear(bin, H, W);
      for (std::size_t i = 0; i < out_plane; ++i) out[b * out_plane + i] = static_cast<T>(r[i] * gain);
    }
    vox = std::move(out);
  }
  s.voxels = std::move(vox);
  const std::size_t N = cfg.mst.frames, S = cfg.mst.image_size;
  s.frames = Tensor<T>({N, 3, S, S});
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t src = i * seq.size() / N;
    const auto img = resize_bilinear(to_channels_first<T>(seq.frames[src]), S, S);
    std::copy(img.data().begin(), img.data().end(), s.frames.data().begin() + i * 3 * S * S);
  }
  return s;
}

template <class T>
Sample<T> load_sample(const std::filesystem::path& dir, const ModelConfig& cfg, std::size_t label = 0) {
  const auto events = load_evt1((dir / "events.evt1").string());
  const auto seq = load_frame_sequence(dir / "frames", dir / "timestamps.txt");
  return make_sample<T>(events, seq, cfg, label, dir.string());
}

inline std::vector<std::string> read_labels(const std::filesystem::path& root) {
  std::ifstream in(root / "labels.txt");
  if (!in) throw std::runtime_error("cannot open " + (root / "labels.txt").string());
  std::vector<std::string> names;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) names.push_back(line);
  return names;
}

/// Samples ordered by label, then by sample directory name.
template <class T>
std::vector<Sample<T>> load_dataset(const std::filesystem::path& root, const ModelConfig& cfg) {
  const auto names = read_labels(root);
  if (names.size() > cfg.num_classes)
    throw std::invalid_argument("dataset has " + std::to_string(names.size()) + " classes, model has " +
                                std::to_string(cfg.num_classes));
  std::vector<Sample<T>> out;
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root / names[c]))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) out.push_back(load_sample<T>(d, cfg, c));
  }
  if (out.empty()) throw std::invalid_argument("dataset at " + root.string() + " is empty");
  return out;
}

}  // namespace hsnn
