#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hsnn/tensor.hpp"

namespace hsnn {

/// One DVS event. Polarity is +1 (ON, brightness increase) or -1 (OFF).
struct Event {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Raised by the event codecs. `position` is a byte offset, record index or
/// 1-based line number depending on `kind`.
class EventFormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, Truncated, OutOfBounds, BadPolarity, Unordered, Malformed };

  EventFormatError(Kind kind, std::size_t position, const std::string& what)
      : std::runtime_error(what), kind_(kind), position_(position) {}

  Kind kind() const { return kind_; }
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::size_t position_;
};

/// Time-ordered events on a width x height sensor.
struct EventStream {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<Event> events;

  std::size_t size() const { return events.size(); }
  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// EVT1 container: "EVT1" | width u16 | height u16 | count u64, then
/// count 16-byte records t u64 | x u16 | y u16 | p u8 (1 = ON, 0 = OFF) | 3 zero pad bytes.
/// All integers little-endian.
namespace evt1 {

inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::size_t kRecordBytes = 16;

namespace detail {

template <class U>
void put(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class U>
U get(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const EventStream& s) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + kRecordBytes * s.events.size());
  out.insert(out.end(), {'E', 'V', 'T', '1'});
  detail::put<std::uint16_t>(out, s.width);
  detail::put<std::uint16_t>(out, s.height);
  detail::put<std::uint64_t>(out, s.events.size());
  for (const auto& e : s.events) {
    detail::put<std::uint64_t>(out, e.t);
    detail::put<std::uint16_t>(out, e.x);
    detail::put<std::uint16_t>(out, e.y);
    out.push_back(e.p > 0 ? 1 : 0);
    out.insert(out.end(), {0, 0, 0});
  }
  return out;
}

inline EventStream decode(std::span<const std::uint8_t> bytes) {
  using K = EventFormatError::Kind;
  if (bytes.size() < 4 || bytes[0] != 'E' || bytes[1] != 'V' || bytes[2] != 'T' || bytes[3] != '1')
    throw EventFormatError(K::BadMagic, 0, "EVT1: bad magic");
  if (bytes.size() < kHeaderBytes)
    throw EventFormatError(K::Truncated, bytes.size(),
                           "EVT1: header truncated at byte " + std::to_string(bytes.size()));
  EventStream s;
  s.width = detail::get<std::uint16_t>(bytes.data() + 4);
  s.height = detail::get<std::uint16_t>(bytes.data() + 6);
  const auto count = detail::get<std::uint64_t>(bytes.data() + 8);
  const std::size_t available = (bytes.size() - kHeaderBytes) / kRecordBytes;
  if (count > available) {
    const std::size_t off = kHeaderBytes + available * kRecordBytes;
    throw EventFormatError(K::Truncated, off,
                           "EVT1: truncated in record " + std::to_string(available) + " of " + std::to_string(count) +
                               " (byte offset " + std::to_string(off) + ")");
  }
  s.events.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* r = bytes.data() + kHeaderBytes + i * kRecordBytes;
    Event e;
    e.t = detail::get<std::uint64_t>(r);
    e.x = detail::get<std::uint16_t>(r + 8);
    e.y = detail::get<std::uint16_t>(r + 10);
    const std::uint8_t pol = r[12];
    if (pol > 1)
      throw EventFormatError(K::BadPolarity, i, "EVT1: record " + std::to_string(i) + " has polarity byte " +
                                                    std::to_string(pol));
    e.p = pol ? 1 : -1;
    if (e.x >= s.width || e.y >= s.height)
      throw EventFormatError(K::OutOfBounds, i, "EVT1: record " + std::to_string(i) + " at (" +
                                                    std::to_string(e.x) + "," + std::to_string(e.y) +
                                                    ") outside " + std::to_string(s.width) + "x" +
                                                    std::to_string(s.height));
    if (!s.events.empty() && e.t < s.events.back().t)
      throw EventFormatError(K::Unordered, i, "EVT1: record " + std::to_string(i) + " timestamp decreases");
    s.events.push_back(e);
  }
  return s;
}

}  // namespace evt1

/// CSV codec, one "t,x,y,p" line per event with p in {1, -1}. The sensor
/// extent is not part of the text and must be supplied.
namespace evt_csv {

inline std::string encode(const EventStream& s) {
  std::ostringstream os;
  os << "t,x,y,p\n";
  for (const auto& e : s.events) os << e.t << ',' << e.x << ',' << e.y << ',' << int(e.p) << '\n';
  return os.str();
}

namespace detail {

inline bool parse_int(std::string_view field, long long& out) {
  if (field.empty()) return false;
  std::size_t i = 0;
  bool neg = false;
  if (field[0] == '-' || field[0] == '+') {
    neg = field[0] == '-';
    i = 1;
    if (field.size() == 1) return false;
  }
  long long v = 0;
  for (; i < field.size(); ++i) {
    if (field[i] < '0' || field[i] > '9') return false;
    v = v * 10 + (field[i] - '0');
    if (v > (1LL << 62)) return false;
  }
  out = neg ? -v : v;
  return true;
}

}  // namespace detail

inline EventStream decode(std::string_view text, std::uint16_t width, std::uint16_t height) {
  using K = EventFormatError::Kind;
  EventStream s{width, height, {}};
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1 && !(line[0] >= '0' && line[0] <= '9')) continue;  // header
    std::vector<std::string_view> fields;
    for (std::size_t a = 0;;) {
      const std::size_t comma = line.find(',', a);
      fields.push_back(line.substr(a, comma == std::string_view::npos ? std::string_view::npos : comma - a));
      if (comma == std::string_view::npos) break;
      a = comma + 1;
    }
    long long f[4];
    bool ok = fields.size() == 4;
    for (std::size_t i = 0; ok && i < 4; ++i) ok = detail::parse_int(fields[i], f[i]);
    if (!ok)
      throw EventFormatError(K::Malformed, line_no, "CSV line " + std::to_string(line_no) + ": malformed '" +
                                                        std::string(line) + "'");
    if (f[3] != 1 && f[3] != -1)
      throw EventFormatError(K::BadPolarity, line_no,
                             "CSV line " + std::to_string(line_no) + ": polarity must be 1 or -1");
    if (f[0] < 0 || f[1] < 0 || f[2] < 0)
      throw EventFormatError(K::Malformed, line_no, "CSV line " + std::to_string(line_no) + ": negative field");
    if (f[1] >= width || f[2] >= height)
      throw EventFormatError(K::OutOfBounds, line_no,
                             "CSV line " + std::to_string(line_no) + ": coordinate outside sensor");
    Event e{static_cast<std::uint64_t>(f[0]), static_cast<std::uint16_t>(f[1]), static_cast<std::uint16_t>(f[2]),
            static_cast<std::int8_t>(f[3])};
    if (!s.events.empty() && e.t < s.events.back().t)
      throw EventFormatError(K::Unordered, line_no, "CSV line " + std::to_string(line_no) + ": timestamp decreases");
    s.events.push_back(e);
  }
  return s;
}

}  // namespace evt_csv

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline EventStream load_evt1(const std::string& path) { return evt1::decode(read_file_bytes(path)); }

inline void save_evt1(const std::string& path, const EventStream& s) { write_file_bytes(path, evt1::encode(s)); }

/// Splits [t0, t1) into `bins` equal spans. An event at t goes to bin
/// min(floor((t - t0) * bins / (t1 - t0)), bins - 1); events outside are dropped.
inline std::vector<std::vector<Event>> segment_events(const EventStream& s, std::uint64_t t0, std::uint64_t t1,
                                                      std::size_t bins) {
  if (t0 >= t1) throw std::invalid_argument("segment_events: need t0 < t1");
  if (bins == 0) throw std::invalid_argument("segment_events: need at least one bin");
  std::vector<std::vector<Event>> out(bins);
  const unsigned __int128 span = t1 - t0;
  for (const auto& e : s.events) {
    if (e.t < t0 || e.t >= t1) continue;
    const auto idx = static_cast<std::size_t>((static_cast<unsigned __int128>(e.t - t0) * bins) / span);
    out[std::min(idx, bins - 1)].push_back(e);
  }
  return out;
}

/// Per-pixel counts [2, H, W]: channel 0 counts ON events, channel 1 OFF.
template <class T>
Tensor<T> rasterize_segment(std::span<const Event> events, std::size_t width, std::size_t height) {
  Tensor<T> out({2, height, width});
  for (const auto& e : events) out[((e.p > 0 ? 0 : 1) * height + e.y) * width + e.x] += T{1};
  return out;
}

/// Counts [bins, 2, H, W] over [t0, t1).
template <class T>
Tensor<T> voxelize(const EventStream& s, std::uint64_t t0, std::uint64_t t1, std::size_t bins) {
  const auto segs = segment_events(s, t0, t1, bins);
  const std::size_t plane = 2 * std::size_t{s.height} * s.width;
  Tensor<T> out({bins, 2, s.height, s.width});
  for (std::size_t b = 0; b < bins; ++b) {
    const auto r = rasterize_segment<T>(segs[b], s.width, s.height);
    std::copy(r.data().begin(), r.data().end(), out.data().begin() + b * plane);
  }
  return out;
}

}  // namespace hsnn
