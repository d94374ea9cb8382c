#include "wagonline/endpoint.hpp"

#include <charconv>
#include <regex>

#include "wagonline/error.hpp"

namespace wagonline {

std::string Endpoint::origin() const {
  return scheme + "://" + host + ":" + std::to_string(port);
}

Endpoint parse_endpoint(std::string_view url) {
  static const std::regex kUrl(
      R"(^([a-z]+)://([A-Za-z0-9._-]+)(?::([0-9]{1,5}))?(/[^\s]*)?$)");
  std::cmatch m;
  if (!std::regex_match(url.begin(), url.end(), m, kUrl)) {
    throw Error(ErrorCode::kConfigError, "malformed endpoint URL '" + std::string(url) + "'");
  }
  Endpoint ep;
  ep.scheme = m[1].str();
  ep.host = m[2].str();
  if (ep.scheme == "http") {
    ep.port = 80;
  } else if (ep.scheme == "mqtt") {
    ep.port = 1883;
  } else {
    throw Error(ErrorCode::kConfigError, "unsupported scheme '" + ep.scheme + "'");
  }
  if (m[3].matched) {
    const std::string port = m[3].str();
    int value = 0;
    std::from_chars(port.data(), port.data() + port.size(), value);
    if (value < 1 || value > 65535) {
      throw Error(ErrorCode::kConfigError, "port out of range in '" + std::string(url) + "'");
    }
    ep.port = value;
  }
  if (m[4].matched) ep.path = m[4].str();
  return ep;
}

}  // namespace wagonline
