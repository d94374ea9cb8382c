#include <algorithm>
#include <thread>

#include <httplib.h>

#include "wagonline/detection_io.hpp"
#include "wagonline/error.hpp"

namespace wagonline {

DetectorClient::DetectorClient(std::string_view url, DetectorClientOptions options)
    : endpoint_(parse_endpoint(url)), options_(options) {
  if (endpoint_.scheme != "http") {
    throw Error(ErrorCode::kConfigError, "detector endpoint must be http");
  }
  if (options_.max_attempts < 1) {
    throw Error(ErrorCode::kConfigError, "max_attempts must be >= 1");
  }
}

FrameDetections DetectorClient::poll(std::string_view crop_ref) {
  httplib::Client client(endpoint_.origin());
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  const std::string path = endpoint_.path == "/" ? "/infer" : endpoint_.path;
  const std::string body = nlohmann::json{{"crop_ref", crop_ref}}.dump();

  auto backoff = options_.initial_backoff;
  bool timed_out = false;
  std::string last_failure;
  last_attempts_ = 0;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    last_attempts_ = attempt;
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      const auto err = res.error();
      timed_out = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout;
      last_failure = httplib::to_string(err);
    } else if (res->status >= 500) {
      timed_out = false;
      last_failure = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw Error(ErrorCode::kBadResponse, "HTTP " + std::to_string(res->status));
    } else {
      auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded()) throw Error(ErrorCode::kBadResponse, "body is not JSON");
      try {
        return frame_from_json(j);
      } catch (const Error& e) {
        throw Error(ErrorCode::kBadResponse, e.what());
      }
    }
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, options_.max_backoff);
    }
  }
  if (timed_out) {
    throw Error(ErrorCode::kTimeout, "detector did not answer in time (" + last_failure + ")");
  }
  throw Error(ErrorCode::kUnavailable,
              "detector unavailable after " + std::to_string(last_attempts_) +
                  " attempts (" + last_failure + ")");
}

}  // namespace wagonline
