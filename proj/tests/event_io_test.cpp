#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hsnn/events.hpp"
#include "hsnn/frames.hpp"
#include "hsnn/rng.hpp"

namespace hsnn {
namespace {

EventStream random_stream(Rng& rng, std::size_t n, std::uint16_t w, std::uint16_t h) {
  EventStream s{w, h, {}};
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    t += rng.below(50);
    s.events.push_back(Event{t, static_cast<std::uint16_t>(rng.below(w)), static_cast<std::uint16_t>(rng.below(h)),
                             static_cast<std::int8_t>(rng.below(2) ? 1 : -1)});
  }
  return s;
}

FrameSequence constant_frames(const std::vector<double>& grey, std::size_t h, std::size_t w) {
  FrameSequence seq;
  for (std::size_t i = 0; i < grey.size(); ++i) {
    seq.frames.push_back(Tensor<double>({h, w, 3}, grey[i]));
    seq.timestamps.push_back(1000 * i);
  }
  return seq;
}

template <class F>
EventFormatError::Kind error_kind(F&& f, std::size_t* position = nullptr) {
  try {
    f();
  } catch (const EventFormatError& e) {
    if (position) *position = e.position();
    return e.kind();
  }
  ADD_FAILURE() << "no EventFormatError thrown";
  return EventFormatError::Kind::Malformed;
}

TEST(Evt1, HeaderLayoutIsLittleEndian) {
  EventStream s{640, 480, {Event{0x0102030405060708ULL, 3, 4, -1}}};
  const auto b = evt1::encode(s);
  ASSERT_EQ(b.size(), 32u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "EVT1");
  EXPECT_EQ(b[4] | (b[5] << 8), 640);
  EXPECT_EQ(b[6] | (b[7] << 8), 480);
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[16], 0x08);
  EXPECT_EQ(b[23], 0x01);
  EXPECT_EQ(b[24], 3);
  EXPECT_EQ(b[26], 4);
  EXPECT_EQ(b[28], 0);
}

TEST(Evt1, RoundTripThousandEvents) {
  Rng rng(5);
  const auto s = random_stream(rng, 1000, 64, 48);
  EXPECT_EQ(evt1::decode(evt1::encode(s)), s);
}

TEST(Evt1, RoundTripHundredThousandEvents) {
  Rng rng(6);
  const auto s = random_stream(rng, 100000, 346, 260);
  EXPECT_EQ(evt1::decode(evt1::encode(s)), s);
}

TEST(Evt1, EmptyStreamRoundTrips) {
  EventStream s{8, 8, {}};
  EXPECT_EQ(evt1::decode(evt1::encode(s)), s);
}

TEST(Evt1, BadMagic) {
  auto b = evt1::encode(EventStream{4, 4, {}});
  b[3] = '2';
  EXPECT_EQ(error_kind([&] { evt1::decode(b); }), EventFormatError::Kind::BadMagic);
}

TEST(Evt1, TruncationReportsByteOffsetOfIncompleteRecord) {
  Rng rng(1);
  auto b = evt1::encode(random_stream(rng, 10, 16, 16));
  b.resize(b.size() - 5);
  std::size_t pos = 0;
  EXPECT_EQ(error_kind([&] { evt1::decode(b); }, &pos), EventFormatError::Kind::Truncated);
  EXPECT_EQ(pos, evt1::kHeaderBytes + 9 * evt1::kRecordBytes);
}

TEST(Evt1, TruncatedHeader) {
  auto b = evt1::encode(EventStream{4, 4, {}});
  b.resize(10);
  EXPECT_EQ(error_kind([&] { evt1::decode(b); }), EventFormatError::Kind::Truncated);
}

TEST(Evt1, OutOfBoundsCoordinateReportsRecord) {
  EventStream s{4, 4, {Event{1, 0, 0, 1}, Event{2, 4, 0, 1}}};
  std::size_t pos = 99;
  EXPECT_EQ(error_kind([&] { evt1::decode(evt1::encode(s)); }, &pos), EventFormatError::Kind::OutOfBounds);
  EXPECT_EQ(pos, 1u);
}

TEST(Evt1, BadPolarityByte) {
  auto b = evt1::encode(EventStream{4, 4, {Event{1, 0, 0, 1}}});
  b[evt1::kHeaderBytes + 12] = 7;
  EXPECT_EQ(error_kind([&] { evt1::decode(b); }), EventFormatError::Kind::BadPolarity);
}

TEST(Evt1, DecreasingTimestampRejected) {
  EventStream s{4, 4, {Event{5, 0, 0, 1}, Event{4, 1, 1, -1}}};
  std::size_t pos = 0;
  EXPECT_EQ(error_kind([&] { evt1::decode(evt1::encode(s)); }, &pos), EventFormatError::Kind::Unordered);
  EXPECT_EQ(pos, 1u);
}

TEST(Evt1, FileRoundTrip) {
  Rng rng(3);
  const auto s = random_stream(rng, 200, 32, 32);
  const auto path = (std::filesystem::temp_directory_path() / "hsnn_evt1_roundtrip.evt1").string();
  save_evt1(path, s);
  EXPECT_EQ(load_evt1(path), s);
  std::filesystem::remove(path);
}

TEST(EvtCsv, RoundTrip) {
  Rng rng(8);
  const auto s = random_stream(rng, 1000, 40, 30);
  EXPECT_EQ(evt_csv::decode(evt_csv::encode(s), 40, 30), s);
}

TEST(EvtCsv, HeaderIsOptionalAndCrlfAccepted) {
  const auto s = evt_csv::decode("10,1,2,1\r\n20,3,0,-1\r\n", 4, 4);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.events[1], (Event{20, 3, 0, -1}));
}

TEST(EvtCsv, ErrorsCarryLineNumbers) {
  std::size_t line = 0;
  EXPECT_EQ(error_kind([&] { evt_csv::decode("t,x,y,p\n1,0,0,1\n2,0,x,1\n", 4, 4); }, &line),
            EventFormatError::Kind::Malformed);
  EXPECT_EQ(line, 3u);
  EXPECT_EQ(error_kind([&] { evt_csv::decode("1,0,0,1,9\n", 4, 4); }), EventFormatError::Kind::Malformed);
  EXPECT_EQ(error_kind([&] { evt_csv::decode("1,0,0,0\n", 4, 4); }), EventFormatError::Kind::BadPolarity);
  EXPECT_EQ(error_kind([&] { evt_csv::decode("1,4,0,1\n", 4, 4); }), EventFormatError::Kind::OutOfBounds);
  EXPECT_EQ(error_kind([&] { evt_csv::decode("5,0,0,1\n4,0,0,1\n", 4, 4); }, &line),
            EventFormatError::Kind::Unordered);
  EXPECT_EQ(line, 2u);
}

TEST(Segmentation, ConservesEventsAndOrders) {
  Rng rng(11);
  const auto s = random_stream(rng, 5000, 20, 20);
  const std::uint64_t t1 = s.events.back().t + 1;
  for (std::size_t bins : {1u, 3u, 16u, 7u}) {
    const auto segs = segment_events(s, 0, t1, bins);
    std::size_t total = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      total += segs[b].size();
      for (const auto& e : segs[b]) {
        EXPECT_GE(e.t * bins, b * t1);
        EXPECT_LT(e.t * bins, (b + 1) * t1);
      }
    }
    EXPECT_EQ(total, s.size());
  }
}

TEST(Segmentation, DropsEventsOutsideWindow) {
  EventStream s{2, 2, {Event{0, 0, 0, 1}, Event{10, 0, 0, 1}, Event{20, 0, 0, 1}}};
  const auto segs = segment_events(s, 5, 20, 2);
  EXPECT_EQ(segs[0].size() + segs[1].size(), 1u);
  EXPECT_THROW(segment_events(s, 5, 5, 2), std::invalid_argument);
  EXPECT_THROW(segment_events(s, 0, 5, 0), std::invalid_argument);
}

TEST(Rasterize, CountsSplitByPolarity) {
  Rng rng(12);
  const auto s = random_stream(rng, 3000, 9, 7);
  const auto r = rasterize_segment<double>(s.events, 9, 7);
  ASSERT_EQ(r.shape(), (Shape{2, 7, 9}));
  std::size_t on = 0;
  for (const auto& e : s.events) on += e.p > 0;
  double on_sum = 0, off_sum = 0;
  for (std::size_t i = 0; i < 63; ++i) {
    on_sum += r[i];
    off_sum += r[63 + i];
  }
  EXPECT_EQ(on_sum, static_cast<double>(on));
  EXPECT_EQ(off_sum, static_cast<double>(s.size() - on));
  const auto v = voxelize<float>(s, 0, s.events.back().t + 1, 4);
  EXPECT_EQ(v.shape(), (Shape{4, 2, 7, 9}));
  EXPECT_EQ(v.sum(), static_cast<float>(s.size()));
}

TEST(Frames, PpmRoundTripIsExactAtByteLevels) {
  Rng rng(2);
  Tensor<double> img({5, 7, 3});
  for (auto& v : img.storage()) v = static_cast<double>(rng.below(256)) / 255.0;
  const auto path = (std::filesystem::temp_directory_path() / "hsnn_frame.ppm").string();
  write_ppm(path, img);
  const auto back = read_ppm(path);
  EXPECT_LT(max_abs_diff(img, back), 1e-12);
  std::filesystem::remove(path);
}

TEST(Frames, SequenceDirectoryRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "hsnn_seq_test";
  std::filesystem::remove_all(dir);
  const auto seq = constant_frames({0.2, 0.4, 0.6}, 4, 6);
  save_frame_sequence(seq, dir / "frames", dir / "timestamps.txt");
  const auto back = load_frame_sequence(dir / "frames", dir / "timestamps.txt");
  EXPECT_EQ(back.timestamps, seq.timestamps);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_LT(max_abs_diff(back.frames[2], seq.frames[2]), 1.0 / 255);
  std::filesystem::remove_all(dir);
}

TEST(Frames, ValidateRejectsNonIncreasingTimestamps) {
  auto seq = constant_frames({0.1, 0.2}, 2, 2);
  seq.timestamps[1] = seq.timestamps[0];
  EXPECT_THROW(seq.validate(), std::invalid_argument);
}

TEST(Resize, IdentityAndConstantPreserved) {
  Rng rng(4);
  auto x = rng.uniform_tensor<double>({2, 5, 6}, 0, 1);
  EXPECT_LT(max_abs_diff(resize_bilinear(x, 5, 6), x), 1e-15);
  const auto c = resize_bilinear(Tensor<double>({1, 3, 3}, 0.7), 8, 5);
  for (double v : c.data()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Resize, DownsampleByTwoAveragesPairs) {
  Tensor<double> x({1, 1, 4}, std::vector<double>{0, 2, 4, 6});
  const auto y = resize_bilinear(x, 1, 2);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 5.0);
}

TEST(Dvs, BrightnessStepEmitsTwoOnEvents) {
  const auto seq = constant_frames({100.0 / 255, 150.0 / 255}, 1, 1);
  const auto s = simulate_dvs(seq, 0.2);
  ASSERT_EQ(s.size(), 2u);
  for (const auto& e : s.events) EXPECT_EQ(e.p, 1);
  EXPECT_EQ(s.events[0].t, 333u);
  EXPECT_EQ(s.events[1].t, 666u);
}

TEST(Dvs, DarkeningEmitsOffEventsAndReferenceCarries) {
  // ln(0.5) = -0.693: three OFF events at C = 0.2, residual -0.093 carried.
  const auto seq = constant_frames({0.8, 0.4, 0.4 * std::exp(-0.12)}, 2, 2);
  const auto s = simulate_dvs(seq, 0.2);
  std::size_t first = 0, second = 0;
  for (const auto& e : s.events) {
    EXPECT_EQ(e.p, -1);
    (e.t < 1000 ? first : second)++;
  }
  EXPECT_EQ(first, 3u * 4);
  EXPECT_EQ(second, 1u * 4);
}

TEST(Dvs, NoChangeNoEvents) {
  EXPECT_EQ(simulate_dvs(constant_frames({0.3, 0.3, 0.3}, 3, 3), 0.1).size(), 0u);
}

TEST(Dvs, EventCountNonIncreasingInThreshold) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    FrameSequence seq;
    const std::size_t n = 2 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      seq.frames.push_back(rng.uniform_tensor<double>({3, 4, 3}, 0.0, 1.0));
      seq.timestamps.push_back(1000 * i + rng.below(500));
    }
    std::size_t prev = SIZE_MAX;
    for (double c : {0.05, 0.1, 0.15, 0.2, 0.3, 0.5}) {
      const auto s = simulate_dvs(seq, c);
      EXPECT_LE(s.size(), prev) << "trial " << trial << " C=" << c;
      prev = s.size();
      for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LE(s.events[i - 1].t, s.events[i].t);
    }
  }
}

TEST(Dvs, RejectsBadArguments) {
  EXPECT_THROW(simulate_dvs(constant_frames({0.1, 0.2}, 1, 1), 0.0), std::invalid_argument);
  EXPECT_THROW(simulate_dvs(constant_frames({0.1}, 1, 1), 0.2), std::invalid_argument);
}

}  // namespace
}  // namespace hsnn
