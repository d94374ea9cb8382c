#pragma once

// Per-train summary and its mosaic: one cell per vehicle, bordered by
// status (red rejected, blue damaged but recognized, green accepted, gray
// not located).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wagonline/recognize.hpp"

namespace wagonline {

struct TrainStats {
  int accepted = 0;
  int accepted_damaged = 0;
  int rejected = 0;
  int not_located = 0;
  double rejection_rate = 0;

  bool operator==(const TrainStats&) const = default;
};

// Set on summaries produced by fusing two sides.
struct FusionNote {
  int position = 0;
  std::string provenance;
  bool conflict = false;

  bool operator==(const FusionNote&) const = default;
};

struct TrainSummary {
  std::string train_id;
  std::string camera;
  std::int64_t started_ms = 0;
  std::int64_t ended_ms = 0;
  int wagon_count = 0;
  std::vector<WagonRecord> wagons;
  TrainStats stats;
  std::vector<FusionNote> fusion;

  bool operator==(const TrainSummary&) const = default;
};

struct CameraMeta {
  std::string camera;
  std::int64_t started_ms = 0;
  std::int64_t ended_ms = 0;
};

TrainStats compute_stats(const std::vector<WagonRecord>& wagons);

std::string make_train_id(const std::string& camera, std::int64_t started_ms);

// Orders by position and fills in count and stats.
TrainSummary build_summary(std::vector<WagonRecord> wagons, const CameraMeta& meta);

nlohmann::ordered_json summary_to_json(const TrainSummary& s);
// Throws Error(kSchemaError) on malformed input or broken invariants.
TrainSummary summary_from_json(const nlohmann::json& j);

std::string border_color(WagonStatus status);

nlohmann::ordered_json mosaic_manifest(const TrainSummary& s);
std::string mosaic_html(const TrainSummary& s, const std::filesystem::path& crop_dir,
                        const std::filesystem::path& out_dir,
                        std::vector<std::string>* missing = nullptr);

struct MosaicOutput {
  std::filesystem::path manifest;
  std::filesystem::path page;
  std::vector<std::string> missing_crops;  // MissingCrop warnings
};

// Writes mosaic.json and mosaic.html into out_dir. Crops that cannot be
// found under crop_dir are reported and drawn as placeholders.
MosaicOutput render_manifest(const TrainSummary& s, const std::filesystem::path& crop_dir,
                             const std::filesystem::path& out_dir);

}  // namespace wagonline
