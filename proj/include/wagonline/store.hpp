#pragma once

// Durable train records. Each train has its own append-only JSONL log
// (the ingested summary, then one line per operator correction) and an
// index file lists trains in ingest order. The current view of a train is
// always rebuilt by replaying its log.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "wagonline/mosaic_report.hpp"

namespace wagonline {

inline constexpr std::string_view kMarkDamaged = "mark_damaged";

struct CorrectionRecord {
  std::string train_id;
  int position = 0;
  std::optional<std::string> old_code;
  std::string new_code;  // empty when only marking damage
  std::string op;        // operator name
  std::string reason;
  std::int64_t at_ms = 0;

  bool operator==(const CorrectionRecord&) const = default;
};

nlohmann::ordered_json correction_to_json(const CorrectionRecord& c);
CorrectionRecord correction_from_json(const nlohmann::json& j);

struct CorrectionRequest {
  std::string new_code;
  std::string op;
  std::string reason;
};

// Throws Error(kInvalidCode) if the request carries a code that does not
// parse or validate and is not a damage report, Error(kInvalidArgument) if
// the operator name is missing.
void check_request(const CorrectionRequest& request);

// Applies one correction to a summary in place and refreshes its stats.
// Throws Error(kNotFound) for a position outside 1..N.
void apply_correction(TrainSummary& summary, const CorrectionRecord& c);

struct TrainListItem {
  std::string train_id;
  std::int64_t started_ms = 0;
  int wagon_count = 0;
  double rejection_rate = 0;
  int unresolved_conflicts = 0;  // wagons still flagged for review
};

nlohmann::ordered_json list_item_to_json(const TrainListItem& item);

struct IngestResult {
  std::string train_id;
  bool created = false;  // false when an identical summary was already stored
};

class TrainStore {
 public:
  using Clock = std::function<std::int64_t()>;

  // Opens (or creates) the store and replays every log. A torn final line
  // left by a crash is dropped; any other corruption throws
  // Error(kStorageFailure).
  explicit TrainStore(std::filesystem::path dir, Clock clock = {});

  // Durable once this returns. Throws Error(kDuplicateTrainId) when the id
  // is stored with different content.
  IngestResult ingest(const TrainSummary& summary);

  // Throws Error(kNotFound) or Error(kInvalidCode). Returns the wagon as it
  // now stands.
  WagonRecord correct(const std::string& train_id, int position, const CorrectionRequest& request);

  bool contains(const std::string& train_id) const;
  // Current view: ingested summary with every correction applied.
  TrainSummary view(const std::string& train_id) const;
  std::vector<CorrectionRecord> corrections(const std::string& train_id) const;
  // The served document: view plus its correction history.
  nlohmann::ordered_json view_json(const std::string& train_id) const;
  std::vector<TrainListItem> list() const;
  std::size_t size() const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  struct Entry {
    std::string file;
    TrainSummary ingested;
    std::string ingested_text;  // canonical JSON, for idempotence checks
    std::vector<CorrectionRecord> corrections;
    TrainSummary current;
  };

  void load();
  void load_train(const std::string& train_id, const std::string& file);
  const Entry& find(const std::string& train_id) const;

  std::filesystem::path dir_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::vector<std::string> order_;
  std::map<std::string, Entry> trains_;
};

// File name for a train log: the id with unsafe bytes percent-encoded.
std::string log_file_name(const std::string& train_id);

}  // namespace wagonline
