#include "wagonline/pipeline.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfigError, "line " + std::to_string(number) + ": expected key = value");
    }
    kv.entries_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

KeyValueConfig KeyValueConfig::from_environment() {
  const char* path = std::getenv("WAGONLINE_CONFIG");
  if (path == nullptr || *path == '\0') return {};
  return load(path);
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  char* end = nullptr;
  const double d = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0') {
    throw Error(ErrorCode::kConfigError, key + " is not a number: '" + *v + "'");
  }
  return d;
}

std::optional<int> KeyValueConfig::get_int(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  int out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw Error(ErrorCode::kConfigError, key + " is not an integer: '" + *v + "'");
  }
  return out;
}

PipelineConfig pipeline_config(const KeyValueConfig& kv) {
  PipelineConfig c;
  if (auto v = kv.get_double("iou_threshold")) c.tracker.iou_threshold = *v;
  if (auto v = kv.get_int("confirm_frames")) c.tracker.confirm_frames = *v;
  if (auto v = kv.get_int("close_after")) c.tracker.close_after = *v;
  if (auto v = kv.get_double("gap_factor")) c.tracker.gap_factor = *v;
  if (auto v = kv.get_double("min_region_conf")) c.tracker.min_region_conf = *v;
  if (auto v = kv.get_double("count_line")) c.tracker.count_line_x = *v;
  if (auto v = kv.get_double("tau_conf")) c.recognizer.tau_conf = *v;
  if (auto v = kv.get_int("max_low")) c.recognizer.max_low = *v;
  try {
    c.tracker.check();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  return c;
}

PipelineResult run_pipeline(const FrameSource& source, const PipelineConfig& config) {
  WagonCounter counter(config.tracker);
  PipelineResult result;
  while (auto frame = source()) {
    counter.update(*frame);
    ++result.frames;
  }
  const std::string camera = counter.camera();
  CameraMeta meta{camera, counter.first_ts_ms().value_or(0), counter.last_ts_ms().value_or(0)};
  auto vehicles = counter.finalize();
  result.summary = build_summary(recognize_all(vehicles, camera, config.recognizer), meta);
  return result;
}

}  // namespace wagonline
