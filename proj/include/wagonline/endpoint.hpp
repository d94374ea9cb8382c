#pragma once

#include <string>
#include <string_view>

namespace wagonline {

// "scheme://host[:port][/path]". Only http and mqtt are understood.
struct Endpoint {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path = "/";

  // "http://host:port", the form cpp-httplib clients accept.
  std::string origin() const;
};

// Throws Error(kConfigError) on anything malformed or an unknown scheme.
Endpoint parse_endpoint(std::string_view url);

}  // namespace wagonline
