#include "wagonline/track_count.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

FrameDetections frame(std::int64_t index, std::vector<Box> regions = {}) {
  FrameDetections f;
  f.frame = index;
  f.ts_ms = index * 33;
  f.camera = "cam";
  f.width = 1920;
  f.height = 1080;
  for (const auto& b : regions) f.detections.push_back({"code_region", b, 0.9});
  return f;
}

// Vehicles whose region centers cross x = 960 exactly at the given frames,
// moving 10 px/frame left to right and visible for 30 frames either side.
std::vector<FrameDetections> crossing_stream(const std::vector<std::int64_t>& crossings) {
  std::map<std::int64_t, std::vector<Box>> boxes;
  for (auto t : crossings) {
    for (std::int64_t f = t - 30; f <= t + 30; ++f) {
      const double cx = 960 + 10.0 * static_cast<double>(f - t);
      boxes[f].push_back({cx - 50, 500, 100, 40});
    }
  }
  std::vector<FrameDetections> out;
  const std::int64_t last = boxes.rbegin()->first;
  for (std::int64_t f = 0; f <= last + 15; ++f) {
    auto it = boxes.find(f);
    out.push_back(frame(f, it == boxes.end() ? std::vector<Box>{} : it->second));
  }
  return out;
}

struct Run {
  std::vector<TrackEvent> events;
  std::vector<CountedVehicle> vehicles;
  std::vector<PlaceholderWagon> placeholders;
};

Run run(const std::vector<FrameDetections>& frames, TrackerConfig config = {}) {
  WagonCounter counter(config);
  Run r;
  for (const auto& f : frames) {
    auto ev = counter.update(f);
    r.events.insert(r.events.end(), ev.begin(), ev.end());
  }
  r.placeholders = counter.infer_missed();
  r.vehicles = counter.finalize();
  return r;
}

int count_of(const std::vector<TrackEvent>& events, TrackEvent::Kind kind) {
  return static_cast<int>(std::count_if(events.begin(), events.end(),
                                        [kind](const TrackEvent& e) { return e.kind == kind; }));
}

ScenarioConfig noisy(std::uint64_t seed, int wagons) {
  ScenarioConfig c;
  c.seed = seed;
  c.wagons = wagons;
  c.miss_rate = 0.2;
  c.unlabeled_fraction = 0.1;
  c.char_confusion_rate = 0.02;
  c.confidence_noise = 0.05;
  return c;
}

std::vector<FrameDetections> frames_of(const ScenarioConfig& c) { return generate(c).frames; }

TEST(WagonCounter, AssociatesOverlappingDetection) {
  WagonCounter counter;
  auto ev = counter.update(frame(0, {{100, 500, 100, 40}}));
  ASSERT_EQ(count_of(ev, TrackEvent::Kind::kTrackStarted), 1);
  // Shifted by 25 px: IoU = 75 / 125 = 0.6.
  ev = counter.update(frame(1, {{125, 500, 100, 40}}));
  EXPECT_EQ(count_of(ev, TrackEvent::Kind::kTrackStarted), 0);
  ASSERT_EQ(counter.open_tracks().size(), 1u);
  EXPECT_EQ(counter.open_tracks()[0].history.size(), 2u);
  EXPECT_DOUBLE_EQ(counter.open_tracks()[0].velocity, 25.0);
}

TEST(WagonCounter, LowIouStartsNewTrack) {
  WagonCounter counter;
  counter.update(frame(0, {{100, 500, 100, 40}}));
  const auto ev = counter.update(frame(1, {{400, 500, 100, 40}}));
  EXPECT_EQ(count_of(ev, TrackEvent::Kind::kTrackStarted), 1);
  EXPECT_EQ(counter.open_tracks().size(), 2u);
}

TEST(WagonCounter, LowConfidenceDetectionDoesNotStartTrack) {
  WagonCounter counter;
  auto f = frame(0);
  f.detections.push_back({"code_region", {100, 500, 100, 40}, 0.2});
  EXPECT_TRUE(counter.update(f).empty());
  EXPECT_TRUE(counter.open_tracks().empty());
}

TEST(WagonCounter, ConfirmsAfterThreeConsecutiveFrames) {
  WagonCounter counter;
  counter.update(frame(0, {{100, 500, 100, 40}}));
  counter.update(frame(1, {{105, 500, 100, 40}}));
  EXPECT_EQ(counter.open_tracks()[0].state, TrackState::kTentative);
  counter.update(frame(2, {{110, 500, 100, 40}}));
  EXPECT_EQ(counter.open_tracks()[0].state, TrackState::kConfirmed);
}

TEST(WagonCounter, ClosesAfterTenUnmatchedFrames) {
  WagonCounter counter;
  for (int f = 0; f < 5; ++f) counter.update(frame(f, {{900, 500, 100, 40}}));
  for (int f = 5; f < 14; ++f) {
    EXPECT_EQ(count_of(counter.update(frame(f)), TrackEvent::Kind::kTrackClosed), 0) << f;
  }
  const auto ev = counter.update(frame(14));
  EXPECT_EQ(count_of(ev, TrackEvent::Kind::kTrackClosed), 1);
  EXPECT_TRUE(counter.open_tracks().empty());
}

TEST(WagonCounter, ClosesWhenPredictionLeavesFrame) {
  WagonCounter counter;
  for (int f = 0; f < 5; ++f) counter.update(frame(f, {{1700.0 + 40 * f, 500, 100, 40}}));
  // Center at 1910 at frame 4; 40 px/frame puts it outside on frame 5.
  const auto ev = counter.update(frame(5));
  EXPECT_EQ(count_of(ev, TrackEvent::Kind::kTrackClosed), 1);
}

TEST(WagonCounter, OutOfOrderFrame) {
  WagonCounter counter;
  counter.update(frame(5));
  try {
    counter.update(frame(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfOrderFrame);
  }
  EXPECT_THROW(counter.update(frame(5)), Error);
}

TEST(WagonCounter, SingleWagonCountedOnce) {
  ScenarioConfig c;
  c.wagons = 1;
  const auto r = run(frames_of(c));
  EXPECT_EQ(count_of(r.events, TrackEvent::Kind::kWagonCounted), 1);
  ASSERT_EQ(r.vehicles.size(), 1u);
  EXPECT_FALSE(r.vehicles[0].is_placeholder());
}

TEST(WagonCounter, CountsAtLineCrossing) {
  const auto r = run(crossing_stream({100, 190}));
  std::vector<std::int64_t> at;
  for (const auto& e : r.events) {
    if (e.kind == TrackEvent::Kind::kWagonCounted) at.push_back(e.frame);
  }
  EXPECT_EQ(at, (std::vector<std::int64_t>{100, 190}));
}

TEST(InferMissed, OneGapHidesOneWagon) {
  // Gaps 90, 90, 92, 200, 88: median 90, 200 / 90 = 2.2 -> one placeholder.
  const auto r = run(crossing_stream({100, 190, 280, 372, 572, 660}));
  ASSERT_EQ(r.placeholders.size(), 1u);
  EXPECT_GT(r.placeholders[0].frame, 372);
  EXPECT_LT(r.placeholders[0].frame, 572);
  EXPECT_EQ(r.placeholders[0].frame, 472);
  EXPECT_NEAR(r.placeholders[0].probable_box.center_x(), 960, 1e-9);
  ASSERT_EQ(r.vehicles.size(), 7u);
  EXPECT_TRUE(r.vehicles[4].is_placeholder());
}

TEST(InferMissed, TripleGapHidesTwoWagons) {
  const auto r = run(crossing_stream({100, 190, 280, 370, 640, 730}));
  ASSERT_EQ(r.placeholders.size(), 2u);
  EXPECT_EQ(r.placeholders[0].frame, 460);
  EXPECT_EQ(r.placeholders[1].frame, 550);
  EXPECT_EQ(r.vehicles.size(), 8u);
}

TEST(InferMissed, UniformGapsAddNothing) {
  EXPECT_TRUE(run(crossing_stream({100, 190, 280, 370, 460, 550})).placeholders.empty());
}

TEST(InferMissed, ShortHistoryIsNoOp) {
  EXPECT_TRUE(run(crossing_stream({100, 190, 500})).placeholders.empty());
}

TEST(Finalize, EmptyStream) {
  WagonCounter counter;
  EXPECT_TRUE(counter.finalize().empty());
}

TEST(Finalize, ThirtyFourWagonsZeroNoise) {
  ScenarioConfig c;
  c.wagons = 34;
  const auto r = run(frames_of(c));
  ASSERT_EQ(r.vehicles.size(), 34u);
  for (std::size_t i = 0; i < r.vehicles.size(); ++i) {
    EXPECT_EQ(r.vehicles[i].position, static_cast<int>(i) + 1);
    EXPECT_FALSE(r.vehicles[i].is_placeholder());
  }
}

TEST(Finalize, HundredThirtyFiveWagonsWithMisses) {
  ScenarioConfig c;
  c.wagons = 135;
  c.seed = 21;
  c.miss_rate = 0.2;
  EXPECT_EQ(run(frames_of(c)).vehicles.size(), 135u);
}

TEST(CountingProperties, ExactlyOnceMonotoneAndConserved) {
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    auto c = noisy(seed, 34 + static_cast<int>((seed * 37) % 100));
    c.direction = seed % 2 ? Direction::kLeftToRight : Direction::kRightToLeft;
    const auto s = generate(c);
    const auto r = run(s.frames);

    std::set<std::int64_t> counted;
    for (const auto& e : r.events) {
      if (e.kind != TrackEvent::Kind::kWagonCounted) continue;
      EXPECT_TRUE(counted.insert(e.track_id).second) << "track " << e.track_id << " counted twice";
    }
    for (std::size_t i = 1; i < r.vehicles.size(); ++i) {
      EXPECT_LT(r.vehicles[i - 1].frame, r.vehicles[i].frame);
      EXPECT_EQ(r.vehicles[i].position, r.vehicles[i - 1].position + 1);
    }
    EXPECT_EQ(static_cast<int>(r.vehicles.size()), s.truth.expected_count) << "seed " << seed;
  }
}

TEST(CountingProperties, MirroringXKeepsCountAndOrder) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto c = noisy(seed, 50);
    const auto frames = frames_of(c);
    auto mirrored = frames;
    for (auto& f : mirrored) {
      for (auto& d : f.detections) d.box.x = f.width - d.box.x - d.box.w;
    }
    const auto a = run(frames);
    const auto b = run(mirrored);
    ASSERT_EQ(a.vehicles.size(), b.vehicles.size());
    for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
      EXPECT_EQ(a.vehicles[i].is_placeholder(), b.vehicles[i].is_placeholder());
      EXPECT_NEAR(static_cast<double>(a.vehicles[i].frame), static_cast<double>(b.vehicles[i].frame), 2.0);
    }
  }
}

TEST(CountingProperties, DirectionIsEstimated) {
  auto c = noisy(5, 40);
  c.direction = Direction::kRightToLeft;
  WagonCounter counter;
  for (const auto& f : frames_of(c)) counter.update(f);
  EXPECT_EQ(counter.direction(), Direction::kRightToLeft);
}

TEST(TrackerConfig, Validation) {
  TrackerConfig c;
  c.iou_threshold = 0;
  EXPECT_THROW(WagonCounter{c}, Error);
  c = {};
  c.gap_factor = 0.5;
  EXPECT_THROW(WagonCounter{c}, Error);
}

}  // namespace
}  // namespace wagonline
