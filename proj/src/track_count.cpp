#include "wagonline/track_count.hpp"

#include <algorithm>
#include <cmath>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

constexpr std::size_t kVelocityWindow = 10;

int sign(double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

}  // namespace

void TrackerConfig::check() const {
  if (!(iou_threshold > 0 && iou_threshold <= 1)) {
    throw Error(ErrorCode::kInvalidConfig, "iou_threshold must lie in (0,1]");
  }
  if (confirm_frames < 1 || close_after < 1) {
    throw Error(ErrorCode::kInvalidConfig, "confirm_frames and close_after must be >= 1");
  }
  if (!(gap_factor > 1)) throw Error(ErrorCode::kInvalidConfig, "gap_factor must be > 1");
  if (!(min_region_conf >= 0 && min_region_conf <= 1)) {
    throw Error(ErrorCode::kInvalidConfig, "min_region_conf must lie in [0,1]");
  }
  if (min_counts_for_inference < 2) {
    throw Error(ErrorCode::kInvalidConfig, "min_counts_for_inference must be >= 2");
  }
}

Box Track::predicted(std::int64_t frame) const {
  return last().box.shifted(velocity * static_cast<double>(frame - last().frame));
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower =
      *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2;
}

WagonCounter::WagonCounter(TrackerConfig config)
    : config_(config), count_line_(config.count_line_x) {
  config_.check();
}

int WagonCounter::travel_sign(const Track& track) const {
  if (direction_ == Direction::kLeftToRight) return 1;
  if (direction_ == Direction::kRightToLeft) return -1;
  if (!velocity_samples_.empty()) return sign(median(velocity_samples_));
  return sign(track.velocity);
}

void WagonCounter::observe(Track& track, const Detection& region, std::vector<Detection> chars,
                           const FrameDetections& frame) {
  if (!track.history.empty()) {
    const TrackObservation& prev = track.last();
    const double dt = static_cast<double>(frame.frame - prev.frame);
    if (direction_ == Direction::kUnknown &&
        velocity_samples_.size() < static_cast<std::size_t>(config_.direction_samples)) {
      velocity_samples_.push_back((region.box.center_x() - prev.box.center_x()) / dt);
      if (velocity_samples_.size() == static_cast<std::size_t>(config_.direction_samples)) {
        const int s = sign(median(velocity_samples_));
        if (s != 0) direction_ = s > 0 ? Direction::kLeftToRight : Direction::kRightToLeft;
      }
    }
    track.hit_streak = prev.frame + 1 == frame.frame ? track.hit_streak + 1 : 1;
  } else {
    track.hit_streak = 1;
  }
  track.history.push_back({frame.frame, region.box, region.conf, std::move(chars), frame.crop_ref});

  const std::size_t n = track.history.size();
  if (n >= 2) {
    const TrackObservation& from = track.history[n > kVelocityWindow ? n - kVelocityWindow : 0];
    const TrackObservation& to = track.history.back();
    track.velocity = (to.box.center_x() - from.box.center_x()) /
                     static_cast<double>(to.frame - from.frame);
  }
  if (track.state == TrackState::kTentative && track.hit_streak >= config_.confirm_frames) {
    track.state = TrackState::kConfirmed;
    track.was_confirmed = true;
  }
}

void WagonCounter::maybe_count(Track& track, std::int64_t frame, std::vector<TrackEvent>& events) {
  if (track.counted || track.state != TrackState::kConfirmed) return;
  const int s = travel_sign(track);
  if (s == 0) return;
  const double line = *count_line_;
  const double start = (track.history.front().box.center_x() - line) * s;
  const double now = (track.last().box.center_x() - line) * s;
  if (start < 0 && now >= 0) {
    track.counted = true;
    track.count_frame = frame;
    if (!count_frames_.empty() && frame > count_frames_.back()) {
      gap_history_.push_back(frame - count_frames_.back());
    }
    count_frames_.push_back(frame);
    events.push_back({TrackEvent::Kind::kWagonCounted, track.id, frame});
  }
}

void WagonCounter::close(Track& track, std::int64_t frame, std::vector<TrackEvent>& events) {
  track.state = TrackState::kClosed;
  events.push_back({TrackEvent::Kind::kTrackClosed, track.id, frame});
  if (track.counted) counted_.push_back(std::move(track));
}

std::vector<TrackEvent> WagonCounter::update(const FrameDetections& frame) {
  if (finalized_) throw Error(ErrorCode::kOutOfOrderFrame, "counter already finalized");
  if (last_frame_ && frame.frame <= *last_frame_) {
    throw Error(ErrorCode::kOutOfOrderFrame, "frame " + std::to_string(frame.frame) +
                                                  " after " + std::to_string(*last_frame_));
  }
  if (!first_frame_) {
    first_frame_ = frame.frame;
    first_ts_ = frame.ts_ms;
    camera_ = frame.camera;
    frame_width_ = frame.width;
    if (!count_line_) count_line_ = frame.width / 2.0;
  }
  last_frame_ = frame.frame;
  last_ts_ = frame.ts_ms;
  if (frame.crop_ref) crop_refs_.emplace(frame.frame, *frame.crop_ref);

  std::vector<const Detection*> regions;
  std::vector<const Detection*> glyphs;
  for (const auto& d : frame.detections) (d.is_region() ? regions : glyphs).push_back(&d);

  // Characters belong to the region whose center is nearest among those
  // containing them.
  std::vector<std::vector<Detection>> chars_of(regions.size());
  for (const Detection* g : glyphs) {
    const double cx = g->box.center_x();
    const double cy = g->box.center_y();
    std::optional<std::size_t> best;
    double best_dist = 0;
    for (std::size_t r = 0; r < regions.size(); ++r) {
      if (!regions[r]->box.contains(cx, cy)) continue;
      const double dist = std::hypot(cx - regions[r]->box.center_x(), cy - regions[r]->box.center_y());
      if (!best || dist < best_dist) {
        best = r;
        best_dist = dist;
      }
    }
    if (best) chars_of[*best].push_back(*g);
  }

  // Greedy association: highest IoU first, older track on ties.
  struct Candidate {
    double iou;
    std::size_t track;
    std::size_t region;
  };
  std::vector<Candidate> candidates;
  for (std::size_t t = 0; t < open_.size(); ++t) {
    const Box predicted = open_[t].predicted(frame.frame);
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const double v = iou(predicted, regions[r]->box);
      if (v >= config_.iou_threshold) candidates.push_back({v, t, r});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [this](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (open_[a.track].id != open_[b.track].id) return open_[a.track].id < open_[b.track].id;
    return a.region < b.region;
  });
  std::vector<bool> track_used(open_.size(), false);
  std::vector<bool> region_used(regions.size(), false);
  std::vector<TrackEvent> events;
  for (const Candidate& c : candidates) {
    if (track_used[c.track] || region_used[c.region]) continue;
    track_used[c.track] = region_used[c.region] = true;
    observe(open_[c.track], *regions[c.region], std::move(chars_of[c.region]), frame);
    maybe_count(open_[c.track], frame.frame, events);
  }

  for (std::size_t t = 0; t < open_.size(); ++t) {
    if (track_used[t]) continue;
    Track& track = open_[t];
    track.hit_streak = 0;
    const double cx = track.predicted(frame.frame).center_x();
    const bool exited = cx < 0 || cx > frame.width;
    if (exited || frame.frame - track.last().frame >= config_.close_after) {
      close(track, frame.frame, events);
    }
  }
  std::erase_if(open_, [](const Track& t) { return t.state == TrackState::kClosed; });

  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (region_used[r] || regions[r]->conf < config_.min_region_conf) continue;
    Track track;
    track.id = next_track_id_++;
    observe(track, *regions[r], std::move(chars_of[r]), frame);
    events.push_back({TrackEvent::Kind::kTrackStarted, track.id, frame.frame});
    open_.push_back(std::move(track));
  }
  return events;
}

std::vector<PlaceholderWagon> WagonCounter::infer_missed() const {
  std::vector<PlaceholderWagon> out;
  if (count_frames_.size() < config_.min_counts_for_inference) return out;
  std::vector<double> gaps(gap_history_.begin(), gap_history_.end());
  const double typical = median(gaps);
  if (!(typical > 0)) return out;

  // Probable box: typical region size and height, centered on the line.
  std::vector<double> widths, heights, ys;
  auto collect = [&](const Track& t) {
    if (!t.counted) return;
    widths.push_back(t.last().box.w);
    heights.push_back(t.last().box.h);
    ys.push_back(t.last().box.y);
  };
  for (const auto& t : counted_) collect(t);
  for (const auto& t : open_) collect(t);
  const double w = median(widths);
  const Box probable{*count_line_ - w / 2, median(ys), w, median(heights)};

  std::vector<std::int64_t> frames = count_frames_;
  std::sort(frames.begin(), frames.end());
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const auto gap = static_cast<double>(frames[i] - frames[i - 1]);
    if (gap <= config_.gap_factor * typical) continue;
    const auto missing = static_cast<int>(std::lround(gap / typical)) - 1;
    for (int k = 1; k <= missing; ++k) {
      PlaceholderWagon p;
      p.frame = frames[i - 1] + std::llround(gap * k / (missing + 1));
      p.probable_box = probable;
      if (!crop_refs_.empty()) {
        auto it = crop_refs_.lower_bound(p.frame);
        if (it == crop_refs_.end()) --it;
        p.crop_ref = it->second;
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<CountedVehicle> WagonCounter::finalize() {
  std::vector<TrackEvent> ignored;
  for (auto& t : open_) close(t, last_frame_.value_or(0), ignored);
  open_.clear();
  finalized_ = true;
  auto placeholders = infer_missed();

  std::vector<CountedVehicle> out;
  for (auto& t : counted_) {
    CountedVehicle v;
    v.frame = *t.count_frame;
    v.source = std::move(t);
    out.push_back(std::move(v));
  }
  counted_.clear();
  for (auto& p : placeholders) {
    CountedVehicle v;
    v.frame = p.frame;
    v.source = std::move(p);
    out.push_back(std::move(v));
  }
  std::stable_sort(out.begin(), out.end(), [](const CountedVehicle& a, const CountedVehicle& b) {
    return a.frame < b.frame;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].position = static_cast<int>(i) + 1;
  return out;
}

}  // namespace wagonline
