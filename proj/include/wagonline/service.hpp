#pragma once

// HTTP API over a TrainStore:
//   POST  /api/trains                       ingest a TrainSummary
//   GET   /api/trains                       list
//   GET   /api/trains/{id}                  current view + correction history
//   GET   /api/trains/{id}/mosaic           mosaic manifest of the current view
//   PATCH /api/trains/{id}/wagons/{pos}     operator correction
//   GET   /media/{crop_ref}                 crop image from the media directory

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>

#include "wagonline/error.hpp"
#include "wagonline/publisher.hpp"
#include "wagonline/store.hpp"

namespace wagonline {

struct ServiceOptions {
  std::optional<std::filesystem::path> media_dir;
  // When set, /api requests must carry "Authorization: Bearer <token>".
  std::optional<std::string> token;
};

int http_status(ErrorCode code);

class Service {
 public:
  // The publisher, if any, receives every newly ingested summary.
  Service(TrainStore& store, ServiceOptions options = {}, Publisher* publisher = nullptr);

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

  httplib::Server& server() { return server_; }

 private:
  void routes();
  bool authorized(const httplib::Request& req, httplib::Response& res) const;

  TrainStore& store_;
  ServiceOptions options_;
  Publisher* publisher_;
  httplib::Server server_;
};

}  // namespace wagonline
