#pragma once

// Cloud reporting with at-least-once delivery. Every message is written to
// a local outbox before the first send and removed only after the endpoint
// acknowledges it; a background loop retries whatever is left, including
// messages queued by an earlier process.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "wagonline/endpoint.hpp"

namespace wagonline {

// One delivery attempt. Throws Error(kUnreachable) on any failure.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const std::string& message_id, const std::string& body) = 0;
};

// POST to the endpoint path; any 2xx is an acknowledgment. The message id
// travels in an Idempotency-Key header so receivers can drop repeats.
std::unique_ptr<Transport> make_http_transport(const Endpoint& ep, std::chrono::milliseconds timeout);

// MQTT 3.1.1 QoS 1 publish to the topic named by the endpoint path; the
// PUBACK is the acknowledgment.
std::unique_ptr<Transport> make_mqtt_transport(const Endpoint& ep, std::chrono::milliseconds timeout);

std::unique_ptr<Transport> make_transport(const Endpoint& ep, std::chrono::milliseconds timeout);

struct PublisherOptions {
  std::chrono::milliseconds timeout{2000};
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds max_backoff{10000};
  bool background_retry = true;
};

struct DeliveryReceipt {
  std::string message_id;
  bool delivered = false;
  int attempts = 0;
  std::string last_error;  // empty once delivered
};

class Publisher {
 public:
  // Throws Error(kConfigError) for a malformed or unsupported URL, so a bad
  // endpoint surfaces at startup rather than at publish time.
  Publisher(const std::string& endpoint_url, std::filesystem::path outbox_dir,
            PublisherOptions options = {});
  // For tests and alternative transports.
  Publisher(std::unique_ptr<Transport> transport, std::filesystem::path outbox_dir,
            PublisherOptions options = {});
  ~Publisher();

  Publisher(const Publisher&) = delete;
  Publisher& operator=(const Publisher&) = delete;

  // Queues the body durably, tries once, and reports the outcome. A failed
  // first attempt leaves the message queued for retry.
  DeliveryReceipt publish(const std::string& body);

  // Tries every queued message now, ignoring backoff.
  void retry_now();

  std::optional<DeliveryReceipt> receipt(const std::string& message_id) const;
  std::size_t pending() const;
  // True if the outbox drained before the timeout.
  bool wait_idle(std::chrono::milliseconds timeout);

 private:
  struct Pending {
    std::string body;
    int attempts = 0;
    std::chrono::steady_clock::time_point next_try;
    std::chrono::milliseconds backoff{0};
    bool in_flight = false;
  };

  void load_outbox();
  void persist(const std::string& id, const Pending& p);
  // Sends one queued message; returns true when it was acknowledged.
  bool attempt(const std::string& id);
  void retry_loop();
  std::string next_id();

  std::unique_ptr<Transport> transport_;
  std::filesystem::path outbox_;
  PublisherOptions options_;

  mutable std::mutex mutex_;
  std::condition_variable changed_;
  std::map<std::string, Pending> queue_;
  std::map<std::string, DeliveryReceipt> receipts_;
  std::uint64_t sequence_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread worker_;
};

}  // namespace wagonline
