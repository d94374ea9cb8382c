#pragma once

// Detection records: one JSON object per line, one line per video frame.
//
//   {"v":1,"frame":12,"ts_ms":400,"camera":"left","width":1920,"height":1080,
//    "crop_ref":"left/000012.jpg",
//    "detections":[{"cls":"code_region","x":..,"y":..,"w":..,"h":..,"conf":..},
//                  {"cls":"H","x":..,"y":..,"w":..,"h":..,"conf":..}, ...]}

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wagonline/endpoint.hpp"

namespace wagonline {

inline constexpr std::string_view kCodeRegion = "code_region";
inline constexpr int kSchemaVersion = 1;

struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double center_x() const { return x + w / 2; }
  double center_y() const { return y + h / 2; }
  double area() const { return w * h; }
  Box shifted(double dx, double dy = 0) const { return {x + dx, y + dy, w, h}; }
  bool contains(double px, double py) const {
    return px >= x && px <= x + w && py >= y && py <= y + h;
  }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct Detection {
  std::string cls;  // "code_region" or a single glyph 0-9 / A-Z
  Box box;
  double conf = 0;

  bool is_region() const { return cls == kCodeRegion; }
  char glyph() const { return cls.size() == 1 ? cls[0] : '?'; }
  bool operator==(const Detection&) const = default;
};

struct FrameDetections {
  std::int64_t frame = 0;
  std::int64_t ts_ms = 0;
  std::string camera;
  int width = 0;
  int height = 0;
  std::optional<std::string> crop_ref;
  std::vector<Detection> detections;

  bool operator==(const FrameDetections&) const = default;
};

// Validates one decoded record; boxes are clamped to the frame. Throws
// Error(kSchemaError) naming the line (0 when unknown) and the field.
FrameDetections frame_from_json(const nlohmann::json& j, std::size_t line = 0);
nlohmann::ordered_json frame_to_json(const FrameDetections& frame);

// One line of JSONL, without the trailing newline.
std::string to_jsonl(const FrameDetections& frame);
void write_frame(std::ostream& out, const FrameDetections& frame);

// Streaming reader. Holds one line at a time; rejects schema violations,
// frame indices that do not strictly increase and frame size changes.
class DetectionReader {
 public:
  explicit DetectionReader(std::istream& in) : in_(&in) {}

  std::optional<FrameDetections> next();
  std::size_t line() const { return line_; }

 private:
  std::istream* in_;
  std::string buffer_;
  std::size_t line_ = 0;
  std::optional<std::int64_t> last_frame_;
  int width_ = 0;
  int height_ = 0;
};

// Owns the file; throws Error(kInvalidArgument) if it cannot be opened.
class DetectionFile {
 public:
  explicit DetectionFile(const std::string& path);

  std::optional<FrameDetections> next() { return reader_.next(); }

 private:
  std::ifstream file_;
  DetectionReader reader_;
};

struct DetectorClientOptions {
  std::chrono::milliseconds timeout{2000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{50};
  std::chrono::milliseconds max_backoff{1000};
};

// Client for an external detector: POST /infer {"crop_ref":...} answered by
// one frame record. Retries transport failures and 5xx with exponential
// backoff; throws Error(kTimeout), Error(kUnavailable) or
// Error(kBadResponse).
class DetectorClient {
 public:
  explicit DetectorClient(std::string_view url, DetectorClientOptions options = {});

  FrameDetections poll(std::string_view crop_ref);
  int last_attempts() const { return last_attempts_; }

 private:
  Endpoint endpoint_;
  DetectorClientOptions options_;
  int last_attempts_ = 0;
};

}  // namespace wagonline
