#include "wagonline/recognize.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::vector<Detection>> frames_with_chars(const Track& track) {
  std::vector<std::vector<Detection>> frames;
  for (const auto& obs : track.history) {
    if (!obs.chars.empty()) frames.push_back(order_glyphs(obs.chars, obs.box));
  }
  return frames;
}

std::size_t mode_count(const std::vector<std::vector<Detection>>& frames) {
  std::map<std::size_t, int> freq;
  for (const auto& f : frames) ++freq[f.size()];
  std::size_t best = 0;
  int best_freq = 0;
  for (const auto& [count, n] : freq) {
    if (n >= best_freq) {  // ascending keys: ties go to the longer count
      best = count;
      best_freq = n;
    }
  }
  return best;
}

}  // namespace

std::string to_string(WagonStatus s) {
  switch (s) {
    case WagonStatus::kAccepted: return "accepted";
    case WagonStatus::kAcceptedDamaged: return "accepted_damaged";
    case WagonStatus::kRejected: return "rejected";
    case WagonStatus::kNotLocated: return "not_located";
  }
  return "not_located";
}

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kLowConfidence: return "low_confidence";
    case RejectReason::kCheckDigitMismatch: return "check_digit_mismatch";
    case RejectReason::kPatternViolation: return "pattern_violation";
    case RejectReason::kNoReading: return "no_reading";
  }
  return "no_reading";
}

WagonStatus parse_status(std::string_view s) {
  if (s == "accepted") return WagonStatus::kAccepted;
  if (s == "accepted_damaged") return WagonStatus::kAcceptedDamaged;
  if (s == "rejected") return WagonStatus::kRejected;
  if (s == "not_located") return WagonStatus::kNotLocated;
  throw Error(ErrorCode::kSchemaError, "unknown status '" + std::string(s) + "'");
}

RejectReason parse_reject_reason(std::string_view s) {
  if (s == "low_confidence") return RejectReason::kLowConfidence;
  if (s == "check_digit_mismatch") return RejectReason::kCheckDigitMismatch;
  if (s == "pattern_violation") return RejectReason::kPatternViolation;
  if (s == "no_reading") return RejectReason::kNoReading;
  throw Error(ErrorCode::kSchemaError, "unknown reject reason '" + std::string(s) + "'");
}

double WagonRecord::mean_confidence() const {
  if (char_confidences.empty()) return 0.0;
  return std::accumulate(char_confidences.begin(), char_confidences.end(), 0.0) /
         static_cast<double>(char_confidences.size());
}

ordered_json record_to_json(const WagonRecord& r) {
  ordered_json j;
  j["position"] = r.position;
  j["status"] = to_string(r.status);
  j["code"] = r.code ? ordered_json(r.code->text()) : ordered_json();
  j["reject_reason"] = r.reject_reason ? ordered_json(to_string(*r.reject_reason)) : ordered_json();
  j["reading"] = r.reading;
  j["char_confidences"] = r.char_confidences;
  j["crop_ref"] = r.crop_ref;
  j["camera"] = r.camera;
  j["frame"] = r.frame ? ordered_json(*r.frame) : ordered_json();
  j["review_flag"] = r.review_flag;
  j["maintenance_flag"] = r.maintenance_flag;
  j["corrected_by"] = r.corrected_by ? ordered_json(*r.corrected_by) : ordered_json();
  return j;
}

WagonRecord record_from_json(const nlohmann::json& j) {
  try {
    WagonRecord r;
    r.position = j.at("position").get<int>();
    r.status = parse_status(j.at("status").get<std::string>());
    if (auto it = j.find("code"); it != j.end() && !it->is_null()) {
      r.code = parse_code(it->get<std::string>());
    }
    if (auto it = j.find("reject_reason"); it != j.end() && !it->is_null()) {
      r.reject_reason = parse_reject_reason(it->get<std::string>());
    }
    r.reading = j.value("reading", "");
    if (auto it = j.find("char_confidences"); it != j.end()) {
      r.char_confidences = it->get<std::vector<double>>();
    }
    r.crop_ref = j.value("crop_ref", "");
    r.camera = j.value("camera", "");
    if (auto it = j.find("frame"); it != j.end() && !it->is_null()) {
      r.frame = it->get<std::int64_t>();
    }
    r.review_flag = j.value("review_flag", false);
    r.maintenance_flag = j.value("maintenance_flag", false);
    if (auto it = j.find("corrected_by"); it != j.end() && !it->is_null()) {
      r.corrected_by = it->get<std::string>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("wagon record: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchemaError, std::string("wagon record: ") + e.what());
  }
}

std::vector<Detection> order_glyphs(std::vector<Detection> chars, const Box& region) {
  if (chars.empty()) return chars;
  std::sort(chars.begin(), chars.end(), [](const Detection& a, const Detection& b) {
    return a.box.center_y() < b.box.center_y();
  });
  std::vector<double> heights;
  heights.reserve(chars.size());
  for (const auto& c : chars) heights.push_back(c.box.h);
  const double row_break = 0.5 * median(heights);

  std::vector<std::vector<Detection>> rows(1);
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (i > 0 && chars[i].box.center_y() - chars[i - 1].box.center_y() > row_break) {
      rows.emplace_back();
    }
    rows.back().push_back(chars[i]);
  }
  const double w = region.w > 0 ? region.w : 1.0;
  std::vector<Detection> out;
  out.reserve(chars.size());
  for (auto& row : rows) {
    std::stable_sort(row.begin(), row.end(), [&](const Detection& a, const Detection& b) {
      return (a.box.center_x() - region.x) / w < (b.box.center_x() - region.x) / w;
    });
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

RawReading aggregate_track(const Track& track) {
  const auto frames = frames_with_chars(track);
  if (frames.empty()) {
    throw Error(ErrorCode::kNoReading, "track " + std::to_string(track.id) + " has no characters");
  }
  const std::size_t slots = mode_count(frames);
  std::vector<std::map<char, double>> votes(slots);
  for (const auto& f : frames) {
    if (f.size() != slots) continue;
    for (std::size_t k = 0; k < slots; ++k) votes[k][f[k].glyph()] += f[k].conf;
  }

  RawReading reading;
  reading.source_track = track.id;
  for (const auto& slot : votes) {
    std::vector<std::pair<char, double>> ranked(slot.begin(), slot.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    double total = 0;
    for (const auto& [glyph, weight] : ranked) total += weight;
    ReadingChar c;
    c.glyph = ranked.front().first;
    c.confidence = total > 0 ? ranked.front().second / total : 0.0;
    for (std::size_t i = 1; i < ranked.size(); ++i) c.alternatives.push_back(ranked[i].first);
    reading.chars.push_back(std::move(c));
  }
  return reading;
}

bool is_degraded(const Track& track, const RecognizerConfig& config) {
  const auto frames = frames_with_chars(track);
  if (frames.empty()) return false;
  const std::size_t slots = mode_count(frames);
  const auto off = std::count_if(frames.begin(), frames.end(),
                                 [slots](const auto& f) { return f.size() != slots; });
  return static_cast<double>(off) > config.degraded_frame_fraction * static_cast<double>(frames.size());
}

WagonRecord decide(const RawReading& reading, const RecognizerConfig& config, bool degraded) {
  WagonRecord record;
  const RawReading corrected = pattern_correct(reading);
  record.reading = corrected.text();
  for (const auto& c : corrected.chars) record.char_confidences.push_back(c.confidence);

  auto reject = [&](RejectReason reason) {
    record.status = WagonStatus::kRejected;
    record.reject_reason = reason;
    return record;
  };
  if (corrected.chars.empty()) return reject(RejectReason::kNoReading);
  if (classify_length(corrected.chars.size()).empty()) return reject(RejectReason::kPatternViolation);
  if (std::any_of(corrected.chars.begin(), corrected.chars.end(),
                  [](const ReadingChar& c) { return !c.admissible; })) {
    return reject(RejectReason::kPatternViolation);
  }
  const auto low = std::count_if(corrected.chars.begin(), corrected.chars.end(),
                                 [&](const ReadingChar& c) { return c.confidence < config.tau_conf; });
  if (low > config.max_low) return reject(RejectReason::kLowConfidence);

  RollingStockId id;
  try {
    id = parse_code(corrected.text());
  } catch (const Error&) {
    return reject(RejectReason::kPatternViolation);
  }
  if (!validate(id, config.scheme).valid) return reject(RejectReason::kCheckDigitMismatch);

  record.code = id;
  record.status = degraded || low > 0 ? WagonStatus::kAcceptedDamaged : WagonStatus::kAccepted;
  return record;
}

const TrackObservation& representative(const Track& track) {
  return *std::max_element(track.history.begin(), track.history.end(),
                           [](const TrackObservation& a, const TrackObservation& b) {
                             return a.box.area() < b.box.area();
                           });
}

std::vector<WagonRecord> recognize_all(const std::vector<CountedVehicle>& vehicles,
                                       const std::string& camera,
                                       const RecognizerConfig& config) {
  std::vector<WagonRecord> records;
  records.reserve(vehicles.size());
  for (const auto& v : vehicles) {
    WagonRecord r;
    if (const auto* p = std::get_if<PlaceholderWagon>(&v.source)) {
      r.status = WagonStatus::kNotLocated;
      r.crop_ref = p->crop_ref.value_or("");
      r.frame = p->frame;
    } else {
      const Track& track = std::get<Track>(v.source);
      try {
        r = decide(aggregate_track(track), config, is_degraded(track, config));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNoReading) throw;
        r.status = WagonStatus::kRejected;
        r.reject_reason = RejectReason::kNoReading;
      }
      const TrackObservation& best = representative(track);
      r.crop_ref = best.crop_ref.value_or("");
      r.frame = best.frame;
    }
    r.position = v.position;
    r.camera = camera;
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace wagonline
