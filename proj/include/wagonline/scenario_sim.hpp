#pragma once

// Synthetic train passages with ground truth.
//
// Code regions slide horizontally across the frame at a constant speed, one
// per vehicle, with character boxes laid out inside. Noise knobs drop region
// detections, add spurious regions, swap glyphs for confusable ones and
// jitter confidences. Damaged vehicles carry a persistently illegible code;
// unlabeled vehicles never produce a code region at all.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "wagonline/code_grammar.hpp"
#include "wagonline/detection_io.hpp"

namespace wagonline {

enum class Direction { kLeftToRight, kRightToLeft, kUnknown };
enum class DamageMode { kTruncateTail, kOccludeHead, kGarble };

std::string to_string(Direction d);
std::string to_string(DamageMode m);

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int wagons = 34;
  int locomotives = 0;  // leading vehicles carrying locomotive numbers
  double px_per_frame = 24.0;
  int frame_width = 1920;
  int frame_height = 1080;
  double region_width = 260.0;
  double region_height = 56.0;
  double vehicle_length_px = 760.0;
  double coupling_gap_px = 140.0;  // jittered by +-20% per coupling
  double fps = 30.0;
  std::int64_t start_ts_ms = 0;
  Direction direction = Direction::kLeftToRight;
  std::string camera = "cam0";

  double miss_rate = 0.0;
  double false_positive_rate = 0.0;  // expected spurious regions per frame
  double char_confusion_rate = 0.0;
  double confidence_noise = 0.0;
  double damaged_fraction = 0.0;
  double unlabeled_fraction = 0.0;
  double two_line_fraction = 0.0;  // codes painted on two rows

  // Throws Error(kInvalidConfig).
  void check() const;
};

struct TruthWagon {
  int position = 0;
  std::optional<RollingStockId> code;  // none when the vehicle is unlabeled
  bool damaged = false;
  std::optional<DamageMode> damage;
  bool unlabeled = false;
};

struct GroundTruth {
  std::vector<TruthWagon> wagons;
  int expected_count = 0;

  int damaged_count() const;
};

nlohmann::ordered_json truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& j);

// Glyphs as painted after damage. TruncateTail leaves 9 glyphs of a wagon
// code (2 of a locomotive number), OccludeHead drops the first two glyphs,
// Garble substitutes a serial digit so the check digit no longer matches
// (an uncorrectable letter for locomotives).
RawReading apply_damage(const RollingStockId& code, DamageMode mode);

// The vehicles of one passage: codes and spacing shared by both sides.
struct Consist {
  std::vector<RollingStockId> codes;
  std::vector<double> offsets;   // distance of each region behind the first
  std::vector<double> region_y;  // top edge of each region
};

Consist make_consist(const ScenarioConfig& config);

// Produces frames one at a time.
class ScenarioGenerator {
 public:
  explicit ScenarioGenerator(const ScenarioConfig& config);
  // Generates one camera view of a shared consist; `side_seed` drives the
  // per-side damage and noise draws.
  ScenarioGenerator(const ScenarioConfig& config, Consist consist,
                    std::uint64_t side_seed);

  const GroundTruth& truth() const { return truth_; }
  std::optional<FrameDetections> next();
  std::int64_t total_frames() const { return total_frames_; }

 private:
  struct Painted {
    RawReading glyphs;
    bool two_line = false;
    bool unlabeled = false;
  };

  void emit_region(FrameDetections& f, std::size_t i, double x);
  double region_x(std::size_t i, std::int64_t frame) const;

  ScenarioConfig config_;
  Consist consist_;
  std::vector<Painted> painted_;
  GroundTruth truth_;
  std::mt19937_64 rng_;
  std::int64_t frame_ = 0;
  std::int64_t total_frames_ = 0;
};

struct Scenario {
  std::vector<FrameDetections> frames;
  GroundTruth truth;
};

Scenario generate(const ScenarioConfig& config);

struct ScenarioPair {
  Scenario left;
  Scenario right;  // opposite side: travel direction mirrored
};

// Both sides of one passage. Damage, unlabeled vehicles and noise are
// drawn independently per side.
ScenarioPair generate_pair(const ScenarioConfig& config);

}  // namespace wagonline
