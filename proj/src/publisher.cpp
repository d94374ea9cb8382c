#include "wagonline/publisher.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

[[noreturn]] void unreachable(const std::string& what) { throw Error(ErrorCode::kUnreachable, what); }

class HttpTransport final : public Transport {
 public:
  HttpTransport(Endpoint ep, std::chrono::milliseconds timeout) : ep_(std::move(ep)), timeout_(timeout) {}

  void send(const std::string& message_id, const std::string& body) override {
    httplib::Client client(ep_.origin());
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const httplib::Headers headers{{"Idempotency-Key", message_id}};
    auto res = client.Post(ep_.path, headers, body, "application/json");
    if (!res) unreachable(ep_.origin() + ep_.path + ": " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
      unreachable(ep_.origin() + ep_.path + ": HTTP " + std::to_string(res->status));
    }
  }

 private:
  Endpoint ep_;
  std::chrono::milliseconds timeout_;
};

class Socket {
 public:
  Socket(const Endpoint& ep, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const std::string port = std::to_string(ep.port);
    if (const int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
      unreachable(ep.host + ": " + ::gai_strerror(rc));
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> list(found, ::freeaddrinfo);
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
      const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd < 0) continue;
      ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
        fd_ = fd;
        return;
      }
      ::close(fd);
    }
    unreachable(ep.origin() + ": " + std::strerror(errno));
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { ::close(fd_); }

  void write_all(const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) unreachable(std::string("broker write: ") + std::strerror(errno));
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string read_exact(std::size_t size) {
    std::string out(size, '\0');
    std::size_t got = 0;
    while (got < size) {
      const ssize_t n = ::recv(fd_, out.data() + got, size - got, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) unreachable(n == 0 ? "broker closed the connection" : std::string("broker read: ") + std::strerror(errno));
      got += static_cast<std::size_t>(n);
    }
    return out;
  }

 private:
  int fd_ = -1;
};

std::string mqtt_string(const std::string& s) {
  std::string out;
  out.push_back(static_cast<char>((s.size() >> 8) & 0xFF));
  out.push_back(static_cast<char>(s.size() & 0xFF));
  return out + s;
}

std::string mqtt_packet(std::uint8_t header, const std::string& body) {
  std::string out(1, static_cast<char>(header));
  std::size_t len = body.size();
  do {
    std::uint8_t byte = len % 128;
    len /= 128;
    if (len > 0) byte |= 0x80;
    out.push_back(static_cast<char>(byte));
  } while (len > 0);
  return out + body;
}

// Fixed header byte and body of the next packet.
std::pair<std::uint8_t, std::string> mqtt_read(Socket& s) {
  const auto header = static_cast<std::uint8_t>(s.read_exact(1)[0]);
  std::size_t len = 0;
  std::size_t scale = 1;
  for (int i = 0; i < 4; ++i) {
    const auto byte = static_cast<std::uint8_t>(s.read_exact(1)[0]);
    len += (byte & 0x7F) * scale;
    scale *= 128;
    if (!(byte & 0x80)) break;
  }
  return {header, s.read_exact(len)};
}

class MqttTransport final : public Transport {
 public:
  MqttTransport(Endpoint ep, std::chrono::milliseconds timeout) : ep_(std::move(ep)), timeout_(timeout) {
    topic_ = ep_.path.size() > 1 ? ep_.path.substr(1) : "wagonline/trains";
  }

  void send(const std::string& message_id, const std::string& body) override {
    Socket s(ep_, timeout_);
    std::string connect = mqtt_string("MQTT");
    connect.push_back(4);     // protocol level 3.1.1
    connect.push_back(0x02);  // clean session
    connect.push_back(0);
    connect.push_back(60);  // keep alive, seconds
    connect += mqtt_string("wagonline-" + std::to_string(::getpid()));
    s.write_all(mqtt_packet(0x10, connect));
    const auto [ack, ack_body] = mqtt_read(s);
    if (ack != 0x20 || ack_body.size() != 2) unreachable("broker sent no CONNACK");
    if (ack_body[1] != 0) unreachable("broker refused connection, code " + std::to_string(ack_body[1]));

    const std::uint16_t packet_id = static_cast<std::uint16_t>(std::hash<std::string>{}(message_id) % 65535 + 1);
    std::string publish = mqtt_string(topic_);
    publish.push_back(static_cast<char>(packet_id >> 8));
    publish.push_back(static_cast<char>(packet_id & 0xFF));
    publish += body;
    s.write_all(mqtt_packet(0x32, publish));  // PUBLISH, QoS 1
    const auto [puback, puback_body] = mqtt_read(s);
    if (puback != 0x40 || puback_body.size() != 2 ||
        static_cast<std::uint8_t>(puback_body[0]) != (packet_id >> 8) ||
        static_cast<std::uint8_t>(puback_body[1]) != (packet_id & 0xFF)) {
      unreachable("broker sent no matching PUBACK");
    }
    s.write_all(mqtt_packet(0xE0, ""));
  }

 private:
  Endpoint ep_;
  std::chrono::milliseconds timeout_;
  std::string topic_;
};

void write_file_durably(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(ErrorCode::kStorageFailure, "cannot write " + tmp.string());
  const bool ok = ::write(fd, content.data(), content.size()) == static_cast<ssize_t>(content.size()) &&
                  ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) throw Error(ErrorCode::kStorageFailure, "cannot write " + tmp.string());
  fs::rename(tmp, path);
  const int dir = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY);
  if (dir >= 0) {
    ::fsync(dir);
    ::close(dir);
  }
}

}  // namespace

std::unique_ptr<Transport> make_http_transport(const Endpoint& ep, std::chrono::milliseconds timeout) {
  return std::make_unique<HttpTransport>(ep, timeout);
}

std::unique_ptr<Transport> make_mqtt_transport(const Endpoint& ep, std::chrono::milliseconds timeout) {
  return std::make_unique<MqttTransport>(ep, timeout);
}

std::unique_ptr<Transport> make_transport(const Endpoint& ep, std::chrono::milliseconds timeout) {
  if (ep.scheme == "mqtt") return make_mqtt_transport(ep, timeout);
  return make_http_transport(ep, timeout);
}

Publisher::Publisher(const std::string& endpoint_url, fs::path outbox_dir, PublisherOptions options)
    : Publisher(make_transport(parse_endpoint(endpoint_url), options.timeout), std::move(outbox_dir),
                options) {}

Publisher::Publisher(std::unique_ptr<Transport> transport, fs::path outbox_dir, PublisherOptions options)
    : transport_(std::move(transport)), outbox_(std::move(outbox_dir)), options_(options) {
  std::error_code ec;
  fs::create_directories(outbox_, ec);
  if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create " + outbox_.string() + ": " + ec.message());
  load_outbox();
  if (options_.background_retry) worker_ = std::thread([this] { retry_loop(); });
}

Publisher::~Publisher() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  changed_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void Publisher::load_outbox() {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(outbox_)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  const auto now = Clock::now();
  for (const auto& path : files) {
    std::ifstream in(path);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("body")) continue;  // torn before rename; never acknowledged
    Pending p;
    p.body = j["body"].get<std::string>();
    p.attempts = j.value("attempts", 0);
    p.next_try = now;
    p.backoff = options_.initial_backoff;
    const std::string id = path.stem().string();
    receipts_[id] = {id, false, p.attempts, "queued by an earlier run"};
    queue_.emplace(id, std::move(p));
  }
}

void Publisher::persist(const std::string& id, const Pending& p) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["attempts"] = p.attempts;
  j["body"] = p.body;
  write_file_durably(outbox_ / (id + ".json"), j.dump());
}

std::string Publisher::next_id() {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  char buf[48];
  std::snprintf(buf, sizeof buf, "%013lld-%06llu", static_cast<long long>(ms),
                static_cast<unsigned long long>(++sequence_));
  return buf;
}

DeliveryReceipt Publisher::publish(const std::string& body) {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = next_id();
    Pending p;
    p.body = body;
    p.backoff = options_.initial_backoff;
    p.next_try = Clock::now();
    p.in_flight = true;  // the first attempt below belongs to this call
    persist(id, p);
    receipts_[id] = {id, false, 0, ""};
    queue_.emplace(id, std::move(p));
  }
  attempt(id);
  return *receipt(id);
}

bool Publisher::attempt(const std::string& id) {
  std::string body;
  {
    std::lock_guard lock(mutex_);
    auto it = queue_.find(id);
    if (it == queue_.end()) return true;
    it->second.in_flight = true;
    ++it->second.attempts;
    receipts_[id].attempts = it->second.attempts;
    persist(id, it->second);
    body = it->second.body;
  }
  std::string failure;
  try {
    transport_->send(id, body);
  } catch (const Error& e) {
    failure = e.what();
  }
  {
    std::lock_guard lock(mutex_);
    auto it = queue_.find(id);
    DeliveryReceipt& r = receipts_[id];
    if (failure.empty()) {
      std::error_code ec;
      fs::remove(outbox_ / (id + ".json"), ec);
      queue_.erase(it);
      r.delivered = true;
      r.last_error.clear();
    } else {
      Pending& p = it->second;
      p.in_flight = false;
      p.next_try = Clock::now() + p.backoff;
      p.backoff = std::min(p.backoff * 2, options_.max_backoff);
      r.last_error = failure;
    }
  }
  changed_.notify_all();
  return failure.empty();
}

void Publisher::retry_now() {
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, p] : queue_) {
      if (!p.in_flight) ids.push_back(id);
    }
  }
  for (const auto& id : ids) attempt(id);
}

void Publisher::retry_loop() {
  std::unique_lock lock(mutex_);
  while (!stopping_) {
    auto wake = Clock::now() + std::chrono::seconds(1);
    std::vector<std::string> due;
    for (const auto& [id, p] : queue_) {
      if (p.in_flight) continue;
      if (p.next_try <= Clock::now()) {
        due.push_back(id);
      } else {
        wake = std::min(wake, p.next_try);
      }
    }
    if (due.empty()) {
      changed_.wait_until(lock, wake);
      continue;
    }
    lock.unlock();
    for (const auto& id : due) {
      if (stopping_) break;
      attempt(id);
    }
    lock.lock();
  }
}

std::optional<DeliveryReceipt> Publisher::receipt(const std::string& message_id) const {
  std::lock_guard lock(mutex_);
  auto it = receipts_.find(message_id);
  if (it == receipts_.end()) return std::nullopt;
  return it->second;
}

std::size_t Publisher::pending() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

bool Publisher::wait_idle(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  return changed_.wait_for(lock, timeout, [this] { return queue_.empty(); });
}

}  // namespace wagonline
