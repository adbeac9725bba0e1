#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/events.hpp"
#include "hsnn/tensor.hpp"

namespace hsnn {

/// Frames are [H, W, 3] tensors with values in [0, 1]; timestamps share the
/// event clock (microseconds) and strictly increase.
struct FrameSequence {
  std::vector<Tensor<double>> frames;
  std::vector<std::uint64_t> timestamps;

  std::size_t size() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames[0].dim(0); }
  std::size_t width() const { return frames.empty() ? 0 : frames[0].dim(1); }

  void validate() const {
    if (frames.size() != timestamps.size())
      throw std::invalid_argument("frame sequence: " + std::to_string(frames.size()) + " frames but " +
                                  std::to_string(timestamps.size()) + " timestamps");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].rank() != 3 || frames[i].dim(2) != 3 || frames[i].shape() != frames[0].shape())
        throw ShapeError("frame sequence: frame " + std::to_string(i) + " has shape " +
                         to_string(frames[i].shape()));
      if (i && timestamps[i] <= timestamps[i - 1])
        throw std::invalid_argument("frame sequence: timestamps must strictly increase (frame " +
                                    std::to_string(i) + ")");
    }
  }
};

/// Bilinear resize of a channel-first map [C, H, W] with half-pixel centres
/// (corners not aligned); source coordinates are clamped to the border.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& in, std::size_t out_h, std::size_t out_w) {
  if (in.rank() != 3) throw ShapeError("resize_bilinear: expects [C, H, W], got " + to_string(in.shape()));
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: target extents must be >= 1");
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  auto axis = [](std::size_t n_in, std::size_t n_out) {
    struct Tap {
      std::size_t i0, i1;
      double f;
    };
    std::vector<Tap> taps(n_out);
    const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, n_in - 1);
      taps[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
  };
  const auto ty = axis(H, out_h), tx = axis(W, out_w);
  Tensor<T> out({C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        auto v = [&](std::size_t y, std::size_t x) { return static_cast<double>(in[(c * H + y) * W + x]); };
        const auto& a = ty[i];
        const auto& b = tx[j];
        const double top = (1 - b.f) * v(a.i0, b.i0) + b.f * v(a.i0, b.i1);
        const double bot = (1 - b.f) * v(a.i1, b.i0) + b.f * v(a.i1, b.i1);
        out[(c * out_h + i) * out_w + j] = static_cast<T>((1 - a.f) * top + a.f * bot);
      }
  return out;
}

/// [H, W, 3] -> [3, H, W].
template <class T>
Tensor<T> to_channels_first(const Tensor<double>& hwc) {
  const std::size_t H = hwc.dim(0), W = hwc.dim(1), C = hwc.dim(2);
  Tensor<T> out({C, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) out[(c * H + y) * W + x] = static_cast<T>(hwc[(y * W + x) * C + c]);
  return out;
}

// ------------------------------------------------------------------ PPM (P6)

inline void write_ppm(const std::string& path, const Tensor<double>& hwc) {
  const std::size_t H = hwc.dim(0), W = hwc.dim(1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << W << ' ' << H << "\n255\n";
  std::vector<unsigned char> px(H * W * 3);
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<unsigned char>(std::lround(std::clamp(hwc[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

inline Tensor<double> read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto token = [&]() {
    std::string t;
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    return t;
  };
  if (token() != "P6") throw std::runtime_error(path + ": not a binary PPM (P6)");
  std::size_t W = 0, H = 0, maxval = 0;
  try {
    W = std::stoul(token());
    H = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": malformed PPM header");
  }
  if (W == 0 || H == 0 || maxval == 0 || maxval > 255) throw std::runtime_error(path + ": unsupported PPM header");
  std::vector<unsigned char> px(W * H * 3);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (in.gcount() != static_cast<std::streamsize>(px.size()))
    throw std::runtime_error(path + ": truncated PPM pixel data");
  Tensor<double> img({H, W, 3});
  for (std::size_t i = 0; i < px.size(); ++i) img[i] = px[i] / static_cast<double>(maxval);
  return img;
}

/// Reads `dir/NNNN.ppm` frames (sorted by name) and one timestamp per line.
inline FrameSequence load_frame_sequence(const std::filesystem::path& frames_dir,
                                         const std::filesystem::path& timestamps_file) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(frames_dir))
    if (e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  FrameSequence seq;
  for (const auto& f : files) seq.frames.push_back(read_ppm(f.string()));
  std::ifstream ts(timestamps_file);
  if (!ts) throw std::runtime_error("cannot open " + timestamps_file.string());
  std::uint64_t t;
  while (ts >> t) seq.timestamps.push_back(t);
  seq.validate();
  return seq;
}

inline void save_frame_sequence(const FrameSequence& seq, const std::filesystem::path& frames_dir,
                                const std::filesystem::path& timestamps_file) {
  std::filesystem::create_directories(frames_dir);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.ppm", i);
    write_ppm((frames_dir / name).string(), seq.frames[i]);
  }
  std::ofstream ts(timestamps_file);
  for (auto t : seq.timestamps) ts << t << '\n';
}

// ------------------------------------------------------------------ DVS simulation

inline constexpr double kLuminanceFloor = 1e-3;

inline double log_luminance(const Tensor<double>& hwc, std::size_t pixel) {
  const double l = (hwc[pixel * 3] + hwc[pixel * 3 + 1] + hwc[pixel * 3 + 2]) / 3.0;
  return std::log(std::max(l, kLuminanceFloor));
}

/// Log-intensity threshold model. Each pixel keeps a reference log
/// luminance; per frame pair it emits floor(|log L - ref| / C) events of the
/// change's sign, evenly spaced inside the interval, and moves the reference
/// by that many steps of C.
inline EventStream simulate_dvs(const FrameSequence& seq, double threshold) {
  if (!(threshold > 0)) throw std::invalid_argument("simulate_dvs: threshold must be positive");
  if (seq.size() < 2) throw std::invalid_argument("simulate_dvs: need at least two frames");
  seq.validate();
  const std::size_t H = seq.height(), W = seq.width();
  if (H > 65535 || W > 65535) throw std::invalid_argument("simulate_dvs: sensor too large");
  EventStream out{static_cast<std::uint16_t>(W), static_cast<std::uint16_t>(H), {}};
  std::vector<double> ref(H * W);
  for (std::size_t p = 0; p < H * W; ++p) ref[p] = log_luminance(seq.frames[0], p);
  for (std::size_t k = 1; k < seq.size(); ++k) {
    const std::uint64_t ta = seq.timestamps[k - 1], tb = seq.timestamps[k];
    std::vector<Event> batch;
    for (std::size_t p = 0; p < H * W; ++p) {
      const double diff = log_luminance(seq.frames[k], p) - ref[p];
      const auto n = static_cast<std::uint64_t>(std::floor(std::abs(diff) / threshold));
      if (n == 0) continue;
      const std::int8_t pol = diff > 0 ? 1 : -1;
      for (std::uint64_t i = 0; i < n; ++i)
        batch.push_back(Event{ta + (i + 1) * (tb - ta) / (n + 1), static_cast<std::uint16_t>(p % W),
                              static_cast<std::uint16_t>(p / W), pol});
      ref[p] += pol * static_cast<double>(n) * threshold;
    }
    std::stable_sort(batch.begin(), batch.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    out.events.insert(out.events.end(), batch.begin(), batch.end());
  }
  return out;
}

}  // namespace hsnn
