#include "wagonline/service.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace wagonline {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  ordered_json j;
  j["error"] = std::string(code);
  j["message"] = message;
  send_json(res, status, j);
}

void send_error(httplib::Response& res, const Error& e) {
  send_error(res, http_status(e.code()), to_string(e.code()), e.what());
}

std::string content_type(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".json") return "application/json";
  return "application/octet-stream";
}

// The file under root that crop_ref names, or nullopt if it escapes root
// or does not exist.
std::optional<fs::path> resolve_media(const fs::path& root, const std::string& crop_ref) {
  const fs::path rel(crop_ref);
  if (crop_ref.empty() || rel.is_absolute()) return std::nullopt;
  for (const auto& part : rel) {
    if (part == "..") return std::nullopt;
  }
  std::error_code ec;
  const fs::path base = fs::canonical(root, ec);
  if (ec) return std::nullopt;
  const fs::path full = fs::canonical(base / rel, ec);
  if (ec || !fs::is_regular_file(full)) return std::nullopt;
  // Symlinks may still point outside.
  const auto [b, f] = std::mismatch(base.begin(), base.end(), full.begin(), full.end());
  if (b != base.end()) return std::nullopt;
  return full;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchemaError:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidPattern:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kDuplicateTrainId:
      return 409;
    case ErrorCode::kInvalidCode:
      return 422;
    default:
      return 500;
  }
}

Service::Service(TrainStore& store, ServiceOptions options, Publisher* publisher)
    : store_(store), options_(std::move(options)), publisher_(publisher) {
  routes();
}

bool Service::authorized(const httplib::Request& req, httplib::Response& res) const {
  if (!options_.token) return true;
  if (req.get_header_value("Authorization") == "Bearer " + *options_.token) return true;
  send_error(res, 401, "Unauthorized", "missing or wrong API token");
  return false;
}

void Service::routes() {
  server_.Post("/api/trains", [this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return send_error(res, 400, "SchemaError", "body is not JSON");
    try {
      const auto result = store_.ingest(summary_from_json(body));
      if (result.created && publisher_ != nullptr) {
        publisher_->publish(store_.view_json(result.train_id).dump());
      }
      ordered_json j;
      j["train_id"] = result.train_id;
      j["created"] = result.created;
      send_json(res, result.created ? 201 : 200, j);
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  server_.Get("/api/trains", [this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    auto items = ordered_json::array();
    for (const auto& item : store_.list()) items.push_back(list_item_to_json(item));
    send_json(res, 200, items);
  });

  server_.Get(R"(/api/trains/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    try {
      send_json(res, 200, store_.view_json(req.matches[1]));
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  server_.Get(R"(/api/trains/([^/]+)/mosaic)", [this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    try {
      send_json(res, 200, mosaic_manifest(store_.view(req.matches[1])));
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  server_.Patch(R"(/api/trains/([^/]+)/wagons/(\d+))",
                [this](const httplib::Request& req, httplib::Response& res) {
                  if (!authorized(req, res)) return;
                  auto body = nlohmann::json::parse(req.body, nullptr, false);
                  if (body.is_discarded() || !body.is_object()) {
                    return send_error(res, 400, "SchemaError", "body must be a JSON object");
                  }
                  CorrectionRequest request;
                  try {
                    request.new_code = body.value("new_code", "");
                    request.op = body.value("operator", "");
                    request.reason = body.value("reason", "");
                  } catch (const nlohmann::json::exception& e) {
                    return send_error(res, 400, "SchemaError", e.what());
                  }
                  try {
                    const int position = std::stoi(req.matches[2]);
                    send_json(res, 200, record_to_json(store_.correct(req.matches[1], position, request)));
                  } catch (const std::out_of_range&) {
                    send_error(res, 404, "NotFound", "position out of range");
                  } catch (const Error& e) {
                    send_error(res, e);
                  }
                });

  server_.Get(R"(/media/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    if (!options_.media_dir) return send_error(res, 404, "NotFound", "no media directory configured");
    const auto path = resolve_media(*options_.media_dir, req.matches[1]);
    if (!path) return send_error(res, 404, "NotFound", "no such crop");
    std::ifstream in(*path, std::ios::binary);
    std::ostringstream data;
    data << in.rdbuf();
    res.set_content(data.str(), content_type(*path));
  });
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kConfigError, "cannot bind " + host);
    return bound;
  }
  if (!server_.bind_to_port(host, port)) {
    throw Error(ErrorCode::kConfigError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void Service::listen() { server_.listen_after_bind(); }

void Service::stop() { server_.stop(); }

}  // namespace wagonline
