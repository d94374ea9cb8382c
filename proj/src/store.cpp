#include "wagonline/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr const char* kIndexFile = "index.jsonl";
constexpr const char* kTrainsDir = "trains";

[[noreturn]] void storage_failure(const std::string& what, const fs::path& path) {
  throw Error(ErrorCode::kStorageFailure, what + " " + path.string() + ": " + std::strerror(errno));
}

class FileHandle {
 public:
  FileHandle(const fs::path& path, int flags) : path_(path), fd_(::open(path.c_str(), flags, 0644)) {
    if (fd_ < 0) storage_failure("cannot open", path);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
  ~FileHandle() { ::close(fd_); }

  void write_all(std::string_view data) {
    while (!data.empty()) {
      const ssize_t n = ::write(fd_, data.data(), data.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        storage_failure("cannot write", path_);
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  void sync() {
    if (::fsync(fd_) != 0) storage_failure("cannot sync", path_);
  }

 private:
  fs::path path_;
  int fd_;
};

void sync_dir(const fs::path& dir) {
  FileHandle(dir, O_RDONLY | O_DIRECTORY).sync();
}

void append_durably(const fs::path& path, std::string_view line) {
  FileHandle f(path, O_WRONLY | O_APPEND | O_CREAT);
  f.write_all(line);
  f.sync();
}

// Complete lines of a log. A final line without its newline is a torn
// write; the file is cut back to the last complete line so later appends
// start clean.
std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) storage_failure("cannot read", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      fs::resize_file(path, start);
      break;
    }
    if (nl > start) lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

nlohmann::json parse_line(const std::string& line, const fs::path& path, std::size_t number) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kStorageFailure,
                path.string() + " line " + std::to_string(number) + ": " + e.what());
  }
}

std::int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ordered_json correction_to_json(const CorrectionRecord& c) {
  ordered_json j;
  j["train_id"] = c.train_id;
  j["position"] = c.position;
  j["old_code"] = c.old_code ? ordered_json(*c.old_code) : ordered_json();
  j["new_code"] = c.new_code;
  j["operator"] = c.op;
  j["reason"] = c.reason;
  j["at_ms"] = c.at_ms;
  return j;
}

CorrectionRecord correction_from_json(const nlohmann::json& j) {
  try {
    CorrectionRecord c;
    c.train_id = j.at("train_id").get<std::string>();
    c.position = j.at("position").get<int>();
    if (auto it = j.find("old_code"); it != j.end() && !it->is_null()) c.old_code = it->get<std::string>();
    c.new_code = j.value("new_code", "");
    c.op = j.at("operator").get<std::string>();
    c.reason = j.value("reason", "");
    c.at_ms = j.at("at_ms").get<std::int64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("correction: ") + e.what());
  }
}

void check_request(const CorrectionRequest& request) {
  if (request.op.empty()) throw Error(ErrorCode::kInvalidArgument, "operator name is required");
  if (request.reason == kMarkDamaged && request.new_code.empty()) return;
  RollingStockId id;
  try {
    id = parse_code(request.new_code);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidCode, "'" + request.new_code + "' " + e.what());
  }
  if (!validate(id).valid) {
    throw Error(ErrorCode::kInvalidCode, "'" + request.new_code + "' fails its check digit");
  }
}

void apply_correction(TrainSummary& summary, const CorrectionRecord& c) {
  if (c.position < 1 || c.position > static_cast<int>(summary.wagons.size())) {
    throw Error(ErrorCode::kNotFound, "train " + summary.train_id + " has no wagon " +
                                          std::to_string(c.position));
  }
  WagonRecord& w = summary.wagons[static_cast<std::size_t>(c.position - 1)];
  if (c.reason == kMarkDamaged) {
    w.maintenance_flag = true;
    if (!c.new_code.empty()) {
      w.code = parse_code(c.new_code);
      w.status = WagonStatus::kAcceptedDamaged;
      w.reject_reason.reset();
      w.corrected_by = c.op;
      w.review_flag = false;
    }
  } else {
    w.code = parse_code(c.new_code);
    w.status = WagonStatus::kAccepted;
    w.reject_reason.reset();
    w.corrected_by = c.op;
    w.review_flag = false;
  }
  summary.stats = compute_stats(summary.wagons);
}

ordered_json list_item_to_json(const TrainListItem& item) {
  ordered_json j;
  j["train_id"] = item.train_id;
  j["started_ms"] = item.started_ms;
  j["wagon_count"] = item.wagon_count;
  j["rejection_rate"] = item.rejection_rate;
  j["unresolved_conflicts"] = item.unresolved_conflicts;
  return j;
}

std::string log_file_name(const std::string& train_id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : train_id) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '+' || (c == '.' && !out.empty())) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out + ".jsonl";
}

TrainStore::TrainStore(fs::path dir, Clock clock)
    : dir_(std::move(dir)), clock_(clock ? std::move(clock) : Clock(system_now_ms)) {
  std::error_code ec;
  fs::create_directories(dir_ / kTrainsDir, ec);
  if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create " + dir_.string() + ": " + ec.message());
  load();
}

void TrainStore::load() {
  const fs::path index = dir_ / kIndexFile;
  if (!fs::exists(index)) return;
  const auto lines = read_lines(index);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = parse_line(lines[i], index, i + 1);
    const auto id = j.at("train_id").get<std::string>();
    if (trains_.count(id)) continue;
    load_train(id, j.at("file").get<std::string>());
  }
}

void TrainStore::load_train(const std::string& train_id, const std::string& file) {
  const fs::path path = dir_ / kTrainsDir / file;
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error(ErrorCode::kStorageFailure, path.string() + " has no summary");
  Entry e;
  e.file = file;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = parse_line(lines[i], path, i + 1);
    const auto kind = j.value("kind", "");
    if (i == 0) {
      if (kind != "summary") throw Error(ErrorCode::kStorageFailure, path.string() + " must start with a summary");
      e.ingested = summary_from_json(j.at("summary"));
      e.ingested_text = summary_to_json(e.ingested).dump();
      e.current = e.ingested;
    } else if (kind == "correction") {
      auto c = correction_from_json(j.at("correction"));
      apply_correction(e.current, c);
      e.corrections.push_back(std::move(c));
    } else {
      throw Error(ErrorCode::kStorageFailure, path.string() + ": unknown entry '" + kind + "'");
    }
  }
  order_.push_back(train_id);
  trains_.emplace(train_id, std::move(e));
}

IngestResult TrainStore::ingest(const TrainSummary& summary) {
  // Round trip through JSON so the stored form is exactly what replay sees.
  const TrainSummary canonical = summary_from_json(nlohmann::json::parse(summary_to_json(summary).dump()));
  const std::string text = summary_to_json(canonical).dump();

  std::unique_lock lock(mutex_);
  if (auto it = trains_.find(canonical.train_id); it != trains_.end()) {
    if (it->second.ingested_text == text) return {canonical.train_id, false};
    throw Error(ErrorCode::kDuplicateTrainId, canonical.train_id + " is stored with different content");
  }

  Entry e;
  e.file = log_file_name(canonical.train_id);
  const fs::path path = dir_ / kTrainsDir / e.file;
  {
    // Truncates a log left behind by a crash before its index line landed.
    FileHandle f(path, O_WRONLY | O_CREAT | O_TRUNC);
    ordered_json line;
    line["kind"] = "summary";
    line["summary"] = summary_to_json(canonical);
    f.write_all(line.dump() + "\n");
    f.sync();
  }
  sync_dir(dir_ / kTrainsDir);

  ordered_json index_line;
  index_line["train_id"] = canonical.train_id;
  index_line["file"] = e.file;
  const bool new_index = !fs::exists(dir_ / kIndexFile);
  append_durably(dir_ / kIndexFile, index_line.dump() + "\n");
  if (new_index) sync_dir(dir_);

  e.ingested = canonical;
  e.ingested_text = text;
  e.current = canonical;
  order_.push_back(canonical.train_id);
  trains_.emplace(canonical.train_id, std::move(e));
  return {canonical.train_id, true};
}

WagonRecord TrainStore::correct(const std::string& train_id, int position,
                                const CorrectionRequest& request) {
  std::unique_lock lock(mutex_);
  auto it = trains_.find(train_id);
  if (it == trains_.end()) throw Error(ErrorCode::kNotFound, "no train " + train_id);
  Entry& e = it->second;
  if (position < 1 || position > e.current.wagon_count) {
    throw Error(ErrorCode::kNotFound, "train " + train_id + " has no wagon " + std::to_string(position));
  }
  check_request(request);

  CorrectionRecord c;
  c.train_id = train_id;
  c.position = position;
  const auto& before = e.current.wagons[static_cast<std::size_t>(position - 1)];
  if (before.code) c.old_code = before.code->text();
  c.new_code = request.new_code.empty() ? "" : parse_code(request.new_code).text();
  c.op = request.op;
  c.reason = request.reason;
  c.at_ms = clock_();

  TrainSummary next = e.current;
  apply_correction(next, c);

  ordered_json line;
  line["kind"] = "correction";
  line["correction"] = correction_to_json(c);
  append_durably(dir_ / kTrainsDir / e.file, line.dump() + "\n");

  e.current = std::move(next);
  e.corrections.push_back(std::move(c));
  return e.current.wagons[static_cast<std::size_t>(position - 1)];
}

const TrainStore::Entry& TrainStore::find(const std::string& train_id) const {
  auto it = trains_.find(train_id);
  if (it == trains_.end()) throw Error(ErrorCode::kNotFound, "no train " + train_id);
  return it->second;
}

bool TrainStore::contains(const std::string& train_id) const {
  std::shared_lock lock(mutex_);
  return trains_.count(train_id) > 0;
}

TrainSummary TrainStore::view(const std::string& train_id) const {
  std::shared_lock lock(mutex_);
  return find(train_id).current;
}

std::vector<CorrectionRecord> TrainStore::corrections(const std::string& train_id) const {
  std::shared_lock lock(mutex_);
  return find(train_id).corrections;
}

ordered_json TrainStore::view_json(const std::string& train_id) const {
  std::shared_lock lock(mutex_);
  const Entry& e = find(train_id);
  ordered_json j = summary_to_json(e.current);
  auto audit = ordered_json::array();
  for (const auto& c : e.corrections) audit.push_back(correction_to_json(c));
  j["corrections"] = std::move(audit);
  return j;
}

std::vector<TrainListItem> TrainStore::list() const {
  std::shared_lock lock(mutex_);
  std::vector<TrainListItem> items;
  items.reserve(order_.size());
  for (const auto& id : order_) {
    const TrainSummary& s = trains_.at(id).current;
    int flagged = 0;
    for (const auto& w : s.wagons) flagged += w.review_flag ? 1 : 0;
    items.push_back({s.train_id, s.started_ms, s.wagon_count, s.stats.rejection_rate, flagged});
  }
  return items;
}

std::size_t TrainStore::size() const {
  std::shared_lock lock(mutex_);
  return trains_.size();
}

}  // namespace wagonline
