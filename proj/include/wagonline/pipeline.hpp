#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "wagonline/mosaic_report.hpp"
#include "wagonline/recognize.hpp"
#include "wagonline/track_count.hpp"

namespace wagonline {

struct PipelineConfig {
  TrackerConfig tracker;
  RecognizerConfig recognizer;
};

// Flat "key = value" settings; '#' starts a comment.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  // Throws Error(kConfigError) if the file cannot be read.
  static KeyValueConfig load(const std::filesystem::path& path);
  // The file named by WAGONLINE_CONFIG, or an empty config.
  static KeyValueConfig from_environment();

  std::optional<std::string> get(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<int> get_int(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// Applies iou_threshold, confirm_frames, close_after, gap_factor,
// min_region_conf, count_line, tau_conf and max_low.
PipelineConfig pipeline_config(const KeyValueConfig& kv);

using FrameSource = std::function<std::optional<FrameDetections>()>;

struct PipelineResult {
  TrainSummary summary;
  std::size_t frames = 0;
};

// Track, count, recognize and summarize one camera stream.
PipelineResult run_pipeline(const FrameSource& source, const PipelineConfig& config = {});

}  // namespace wagonline
