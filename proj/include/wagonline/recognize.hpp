#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wagonline/code_grammar.hpp"
#include "wagonline/track_count.hpp"

namespace wagonline {

enum class WagonStatus { kAccepted, kAcceptedDamaged, kRejected, kNotLocated };
enum class RejectReason { kLowConfidence, kCheckDigitMismatch, kPatternViolation, kNoReading };

std::string to_string(WagonStatus s);
std::string to_string(RejectReason r);
WagonStatus parse_status(std::string_view s);
RejectReason parse_reject_reason(std::string_view s);

inline bool is_accepted(WagonStatus s) {
  return s == WagonStatus::kAccepted || s == WagonStatus::kAcceptedDamaged;
}

struct WagonRecord {
  int position = 0;
  WagonStatus status = WagonStatus::kNotLocated;
  std::optional<RollingStockId> code;
  std::optional<RejectReason> reject_reason;
  std::string reading;  // glyphs after pattern correction, for the operator
  std::vector<double> char_confidences;
  std::string crop_ref;
  std::string camera;
  std::optional<std::int64_t> frame;
  bool review_flag = false;       // fusion conflict awaiting an operator
  bool maintenance_flag = false;  // painting needs attention
  std::optional<std::string> corrected_by;

  double mean_confidence() const;
  bool operator==(const WagonRecord&) const = default;
};

nlohmann::ordered_json record_to_json(const WagonRecord& r);
WagonRecord record_from_json(const nlohmann::json& j);

struct RecognizerConfig {
  double tau_conf = 0.5;
  int max_low = 1;
  // A track whose frames disagree on the glyph count this often is treated
  // as degraded even when it validates.
  double degraded_frame_fraction = 0.25;
  CheckDigitScheme scheme = default_scheme();
};

// Character boxes of one region in reading order: clustered into rows by
// vertical center, rows top first, each row left to right.
std::vector<Detection> order_glyphs(std::vector<Detection> chars, const Box& region);

// Confidence-weighted vote per slot over every frame whose glyph count
// equals the most common count (ties go to the longer count). Slot
// confidence is the winner's share of the slot's total weight. Throws
// Error(kNoReading) when no frame holds characters.
RawReading aggregate_track(const Track& track);

bool is_degraded(const Track& track, const RecognizerConfig& config = {});

// pattern_correct -> classify_length -> parse -> validate. Returns a record
// with status, code, reason, reading and confidences filled in.
WagonRecord decide(const RawReading& reading, const RecognizerConfig& config = {},
                   bool degraded = false);

// Frame whose region box is largest: the closest, most legible view.
const TrackObservation& representative(const Track& track);

// Records for a finalized counter output, one per counted vehicle.
std::vector<WagonRecord> recognize_all(const std::vector<CountedVehicle>& vehicles,
                                       const std::string& camera,
                                       const RecognizerConfig& config = {});

}  // namespace wagonline
