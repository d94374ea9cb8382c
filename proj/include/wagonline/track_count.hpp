#pragma once

// Counting wagons from code-region detections.
//
// Regions are associated frame to frame into tracks (greedy IoU against a
// constant-velocity prediction). A confirmed track is counted once, when its
// center crosses the counting line in the direction of travel. Vehicles
// whose code was never located are inferred at the end from unusually long
// gaps between consecutive counts.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wagonline/detection_io.hpp"
#include "wagonline/scenario_sim.hpp"

namespace wagonline {

struct TrackerConfig {
  double iou_threshold = 0.3;
  int confirm_frames = 3;
  int close_after = 10;
  double gap_factor = 1.75;
  double min_region_conf = 0.25;
  std::optional<double> count_line_x;  // frame center when unset
  int direction_samples = 30;
  std::size_t min_counts_for_inference = 4;

  void check() const;
};

enum class TrackState { kTentative, kConfirmed, kClosed };

struct TrackObservation {
  std::int64_t frame = 0;
  Box box;
  double conf = 0;
  std::vector<Detection> chars;  // character boxes inside the region
  std::optional<std::string> crop_ref;
};

struct Track {
  std::int64_t id = 0;
  TrackState state = TrackState::kTentative;
  std::vector<TrackObservation> history;  // strictly increasing frames
  double velocity = 0;                     // px/frame along x
  bool counted = false;
  bool was_confirmed = false;
  std::optional<std::int64_t> count_frame;
  int hit_streak = 0;

  const TrackObservation& last() const { return history.back(); }
  Box predicted(std::int64_t frame) const;
};

struct TrackEvent {
  enum class Kind { kTrackStarted, kWagonCounted, kTrackClosed };
  Kind kind;
  std::int64_t track_id = 0;
  std::int64_t frame = 0;

  bool operator==(const TrackEvent&) const = default;
};

// A vehicle inferred from the gap statistics, with the box where its code
// region would probably have been.
struct PlaceholderWagon {
  std::int64_t frame = 0;
  Box probable_box;
  std::optional<std::string> crop_ref;
};

struct CountedVehicle {
  int position = 0;  // 1-based
  std::int64_t frame = 0;
  std::variant<Track, PlaceholderWagon> source;

  bool is_placeholder() const { return std::holds_alternative<PlaceholderWagon>(source); }
};

double median(std::vector<double> values);

class WagonCounter {
 public:
  explicit WagonCounter(TrackerConfig config = {});

  // Throws Error(kOutOfOrderFrame) unless frames strictly increase.
  std::vector<TrackEvent> update(const FrameDetections& frame);

  // Gaps longer than gap_factor x median hide round(gap / median) - 1
  // vehicles each. No-op with fewer than min_counts_for_inference counts.
  std::vector<PlaceholderWagon> infer_missed() const;

  // Closes every track and returns the counted vehicles and placeholders in
  // counting order, positions 1..N.
  std::vector<CountedVehicle> finalize();

  int wagons_counted() const { return static_cast<int>(count_frames_.size()); }
  Direction direction() const { return direction_; }
  const std::vector<std::int64_t>& gap_history() const { return gap_history_; }
  const std::vector<Track>& open_tracks() const { return open_; }
  double count_line_x() const { return count_line_.value_or(0.0); }
  std::optional<std::int64_t> first_frame() const { return first_frame_; }
  std::optional<std::int64_t> last_frame() const { return last_frame_; }
  std::optional<std::int64_t> first_ts_ms() const { return first_ts_; }
  std::optional<std::int64_t> last_ts_ms() const { return last_ts_; }
  const std::string& camera() const { return camera_; }

 private:
  int travel_sign(const Track& track) const;
  void observe(Track& track, const Detection& region, std::vector<Detection> chars,
               const FrameDetections& frame);
  void maybe_count(Track& track, std::int64_t frame, std::vector<TrackEvent>& events);
  void close(Track& track, std::int64_t frame, std::vector<TrackEvent>& events);

  TrackerConfig config_;
  std::optional<double> count_line_;
  int frame_width_ = 0;
  std::vector<Track> open_;
  std::vector<Track> counted_;  // closed tracks that were counted
  std::int64_t next_track_id_ = 1;
  std::vector<std::int64_t> count_frames_;
  std::vector<std::int64_t> gap_history_;
  std::vector<double> velocity_samples_;
  Direction direction_ = Direction::kUnknown;
  std::map<std::int64_t, std::string> crop_refs_;
  std::optional<std::int64_t> first_frame_;
  std::optional<std::int64_t> last_frame_;
  std::optional<std::int64_t> first_ts_;
  std::optional<std::int64_t> last_ts_;
  std::string camera_;
  bool finalized_ = false;
};

}  // namespace wagonline
