#include "wagonline/detection_io.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "wagonline/code_grammar.hpp"
#include "wagonline/error.hpp"

namespace wagonline {
namespace {

using nlohmann::json;

[[noreturn]] void schema_error(std::size_t line, const std::string& field,
                               const std::string& what) {
  std::string msg = line > 0 ? "line " + std::to_string(line) + ": " : "";
  msg += "field '" + field + "' " + what;
  throw Error(ErrorCode::kSchemaError, msg);
}

const json& require(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) schema_error(line, key, "is missing");
  return *it;
}

std::int64_t require_int(const json& j, const char* key, std::size_t line) {
  const json& v = require(j, key, line);
  if (!v.is_number_integer()) schema_error(line, key, "must be an integer");
  return v.get<std::int64_t>();
}

double require_number(const json& j, const std::string& key, std::size_t line,
                      const std::string& label) {
  auto it = j.find(key);
  if (it == j.end()) schema_error(line, label, "is missing");
  if (!it->is_number()) schema_error(line, label, "must be a number");
  return it->get<double>();
}

bool valid_class(const std::string& cls) {
  return cls == kCodeRegion || (cls.size() == 1 && is_glyph(cls[0]));
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

FrameDetections frame_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) schema_error(line, "<record>", "must be an object");
  if (require_int(j, "v", line) != kSchemaVersion) {
    schema_error(line, "v", "must be 1");
  }
  FrameDetections f;
  f.frame = require_int(j, "frame", line);
  f.ts_ms = require_int(j, "ts_ms", line);
  const json& camera = require(j, "camera", line);
  if (!camera.is_string()) schema_error(line, "camera", "must be a string");
  f.camera = camera.get<std::string>();
  const auto width = require_int(j, "width", line);
  const auto height = require_int(j, "height", line);
  if (width <= 0 || height <= 0 || width > 1 << 16 || height > 1 << 16) {
    schema_error(line, "width/height", "must be positive");
  }
  f.width = static_cast<int>(width);
  f.height = static_cast<int>(height);
  if (auto it = j.find("crop_ref"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) schema_error(line, "crop_ref", "must be a string");
    f.crop_ref = it->get<std::string>();
  }
  const json& dets = require(j, "detections", line);
  if (!dets.is_array()) schema_error(line, "detections", "must be an array");
  f.detections.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const json& d = dets[i];
    const std::string prefix = "detections[" + std::to_string(i) + "]";
    if (!d.is_object()) schema_error(line, prefix, "must be an object");
    auto cls = d.find("cls");
    if (cls == d.end() || !cls->is_string()) {
      schema_error(line, prefix + ".cls", "must be a string");
    }
    Detection det;
    det.cls = cls->get<std::string>();
    if (!valid_class(det.cls)) {
      schema_error(line, prefix + ".cls", "has unknown class '" + det.cls + "'");
    }
    det.box.x = require_number(d, "x", line, prefix + ".x");
    det.box.y = require_number(d, "y", line, prefix + ".y");
    det.box.w = require_number(d, "w", line, prefix + ".w");
    det.box.h = require_number(d, "h", line, prefix + ".h");
    det.conf = require_number(d, "conf", line, prefix + ".conf");
    if (!(det.conf >= 0.0 && det.conf <= 1.0)) {
      schema_error(line, prefix + ".conf", "must lie in [0,1]");
    }
    if (!(det.box.w > 0) || !(det.box.h > 0)) {
      schema_error(line, prefix + ".w/h", "must be positive");
    }
    // Clamp to the frame; a box left with no area is malformed.
    const double x0 = std::clamp(det.box.x, 0.0, static_cast<double>(f.width));
    const double y0 = std::clamp(det.box.y, 0.0, static_cast<double>(f.height));
    const double x1 = std::clamp(det.box.x + det.box.w, 0.0, static_cast<double>(f.width));
    const double y1 = std::clamp(det.box.y + det.box.h, 0.0, static_cast<double>(f.height));
    if (x1 <= x0 || y1 <= y0) schema_error(line, prefix, "lies outside the frame");
    if (x0 != det.box.x || y0 != det.box.y || x1 != det.box.x + det.box.w ||
        y1 != det.box.y + det.box.h) {
      det.box = {x0, y0, x1 - x0, y1 - y0};
    }
    f.detections.push_back(std::move(det));
  }
  return f;
}

nlohmann::ordered_json frame_to_json(const FrameDetections& f) {
  nlohmann::ordered_json j;
  j["v"] = kSchemaVersion;
  j["frame"] = f.frame;
  j["ts_ms"] = f.ts_ms;
  j["camera"] = f.camera;
  j["width"] = f.width;
  j["height"] = f.height;
  if (f.crop_ref) j["crop_ref"] = *f.crop_ref;
  auto dets = nlohmann::ordered_json::array();
  for (const auto& d : f.detections) {
    nlohmann::ordered_json o;
    o["cls"] = d.cls;
    o["x"] = d.box.x;
    o["y"] = d.box.y;
    o["w"] = d.box.w;
    o["h"] = d.box.h;
    o["conf"] = d.conf;
    dets.push_back(std::move(o));
  }
  j["detections"] = std::move(dets);
  return j;
}

std::string to_jsonl(const FrameDetections& frame) { return frame_to_json(frame).dump(); }

void write_frame(std::ostream& out, const FrameDetections& frame) {
  out << to_jsonl(frame) << '\n';
}

std::optional<FrameDetections> DetectionReader::next() {
  while (std::getline(*in_, buffer_)) {
    ++line_;
    if (buffer_.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(buffer_, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::kSchemaError,
                  "line " + std::to_string(line_) + ": not valid JSON");
    }
    FrameDetections f = frame_from_json(j, line_);
    if (last_frame_ && f.frame <= *last_frame_) {
      throw Error(ErrorCode::kNonMonotonicFrame,
                  "line " + std::to_string(line_) + ": frame " + std::to_string(f.frame) +
                      " after " + std::to_string(*last_frame_));
    }
    if (last_frame_ && (f.width != width_ || f.height != height_)) {
      schema_error(line_, "width/height", "changed within the stream");
    }
    last_frame_ = f.frame;
    width_ = f.width;
    height_ = f.height;
    return f;
  }
  return std::nullopt;
}

DetectionFile::DetectionFile(const std::string& path) : file_(path), reader_(file_) {
  if (!file_) throw Error(ErrorCode::kInvalidArgument, "cannot open " + path);
}

}  // namespace wagonline
