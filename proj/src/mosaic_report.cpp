#include "wagonline/mosaic_report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr int kGridColumns = 6;

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + path.string());
}

}  // namespace

TrainStats compute_stats(const std::vector<WagonRecord>& wagons) {
  TrainStats s;
  for (const auto& w : wagons) {
    switch (w.status) {
      case WagonStatus::kAccepted: ++s.accepted; break;
      case WagonStatus::kAcceptedDamaged: ++s.accepted_damaged; break;
      case WagonStatus::kRejected: ++s.rejected; break;
      case WagonStatus::kNotLocated: ++s.not_located; break;
    }
  }
  s.rejection_rate = wagons.empty() ? 0.0
                                    : static_cast<double>(s.rejected + s.not_located) /
                                          static_cast<double>(wagons.size());
  return s;
}

std::string make_train_id(const std::string& camera, std::int64_t started_ms) {
  return camera + "-" + std::to_string(started_ms);
}

TrainSummary build_summary(std::vector<WagonRecord> wagons, const CameraMeta& meta) {
  std::stable_sort(wagons.begin(), wagons.end(),
                   [](const WagonRecord& a, const WagonRecord& b) { return a.position < b.position; });
  TrainSummary s;
  s.train_id = make_train_id(meta.camera, meta.started_ms);
  s.camera = meta.camera;
  s.started_ms = meta.started_ms;
  s.ended_ms = meta.ended_ms;
  s.wagon_count = static_cast<int>(wagons.size());
  s.stats = compute_stats(wagons);
  s.wagons = std::move(wagons);
  return s;
}

ordered_json summary_to_json(const TrainSummary& s) {
  ordered_json j;
  j["train_id"] = s.train_id;
  j["camera"] = s.camera;
  j["started_ms"] = s.started_ms;
  j["ended_ms"] = s.ended_ms;
  j["wagon_count"] = s.wagon_count;
  auto wagons = ordered_json::array();
  for (const auto& w : s.wagons) wagons.push_back(record_to_json(w));
  j["wagons"] = std::move(wagons);
  ordered_json stats;
  stats["accepted"] = s.stats.accepted;
  stats["accepted_damaged"] = s.stats.accepted_damaged;
  stats["rejected"] = s.stats.rejected;
  stats["not_located"] = s.stats.not_located;
  stats["rejection_rate"] = s.stats.rejection_rate;
  j["stats"] = std::move(stats);
  if (!s.fusion.empty()) {
    auto fusion = ordered_json::array();
    for (const auto& f : s.fusion) {
      fusion.push_back({{"position", f.position}, {"provenance", f.provenance}, {"conflict", f.conflict}});
    }
    j["fusion"] = std::move(fusion);
  }
  return j;
}

TrainSummary summary_from_json(const nlohmann::json& j) {
  TrainSummary s;
  try {
    s.train_id = j.at("train_id").get<std::string>();
    s.camera = j.at("camera").get<std::string>();
    s.started_ms = j.at("started_ms").get<std::int64_t>();
    s.ended_ms = j.at("ended_ms").get<std::int64_t>();
    s.wagon_count = j.at("wagon_count").get<int>();
    for (const auto& w : j.at("wagons")) s.wagons.push_back(record_from_json(w));
    const auto& st = j.at("stats");
    s.stats.accepted = st.at("accepted").get<int>();
    s.stats.accepted_damaged = st.at("accepted_damaged").get<int>();
    s.stats.rejected = st.at("rejected").get<int>();
    s.stats.not_located = st.at("not_located").get<int>();
    s.stats.rejection_rate = st.at("rejection_rate").get<double>();
    if (auto it = j.find("fusion"); it != j.end()) {
      for (const auto& f : *it) {
        s.fusion.push_back({f.at("position").get<int>(), f.at("provenance").get<std::string>(),
                            f.at("conflict").get<bool>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("train summary: ") + e.what());
  }
  if (s.train_id.empty()) throw Error(ErrorCode::kSchemaError, "train_id is empty");
  if (s.wagon_count != static_cast<int>(s.wagons.size())) {
    throw Error(ErrorCode::kSchemaError, "wagon_count does not match wagons");
  }
  for (std::size_t i = 0; i < s.wagons.size(); ++i) {
    const WagonRecord& w = s.wagons[i];
    if (w.position != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::kSchemaError, "positions must be 1..N in order");
    }
    if (is_accepted(w.status) && (!w.code || !validate(*w.code).valid)) {
      throw Error(ErrorCode::kSchemaError,
                  "accepted wagon " + std::to_string(w.position) + " lacks a valid code");
    }
    if (w.status == WagonStatus::kRejected && !w.reject_reason) {
      throw Error(ErrorCode::kSchemaError,
                  "rejected wagon " + std::to_string(w.position) + " lacks a reason");
    }
    if (w.status == WagonStatus::kNotLocated && w.code) {
      throw Error(ErrorCode::kSchemaError,
                  "not-located wagon " + std::to_string(w.position) + " carries a code");
    }
  }
  const TrainStats expected = compute_stats(s.wagons);
  if (expected.accepted != s.stats.accepted ||
      expected.accepted_damaged != s.stats.accepted_damaged ||
      expected.rejected != s.stats.rejected || expected.not_located != s.stats.not_located) {
    throw Error(ErrorCode::kSchemaError, "stats do not match wagons");
  }
  return s;
}

std::string border_color(WagonStatus status) {
  switch (status) {
    case WagonStatus::kAccepted: return "green";
    case WagonStatus::kAcceptedDamaged: return "blue";
    case WagonStatus::kRejected: return "red";
    case WagonStatus::kNotLocated: return "gray";
  }
  return "gray";
}

ordered_json mosaic_manifest(const TrainSummary& s) {
  ordered_json j;
  j["train_id"] = s.train_id;
  auto cells = ordered_json::array();
  for (const auto& w : s.wagons) {
    ordered_json c;
    c["pos"] = w.position;
    c["crop_ref"] = w.crop_ref;
    if (w.code) c["code"] = w.code->text();
    c["status"] = to_string(w.status);
    c["border"] = border_color(w.status);
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  return j;
}

std::string mosaic_html(const TrainSummary& s, const fs::path& crop_dir, const fs::path& out_dir,
                        std::vector<std::string>* missing) {
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>"
       << html_escape(s.train_id) << "</title>\n<style>\n"
       << "body{font-family:sans-serif;background:#222;color:#eee}\n"
       << ".grid{display:grid;grid-template-columns:repeat(" << kGridColumns << ",1fr);gap:6px}\n"
       << ".cell{border:4px solid;padding:4px;background:#111}\n"
       << ".cell img{width:100%;display:block}\n"
       << ".missing{height:80px;display:flex;align-items:center;justify-content:center;color:#888}\n"
       << ".green{border-color:green}.blue{border-color:blue}.red{border-color:red}"
       << ".gray{border-color:gray;border-style:dashed}\n"
       << "</style></head><body>\n<h1>" << html_escape(s.train_id) << "</h1>\n<p>"
       << s.wagon_count << " vehicles, " << s.stats.rejected << " rejected, "
       << s.stats.not_located << " not located</p>\n<div class=\"grid\">\n";
  for (const auto& w : s.wagons) {
    const std::string border = border_color(w.status);
    html << "<div class=\"cell " << border << "\" data-pos=\"" << w.position << "\">\n";
    const fs::path crop = crop_dir / w.crop_ref;
    if (!w.crop_ref.empty() && fs::exists(crop)) {
      const fs::path rel = fs::relative(crop, out_dir);
      html << "<img src=\"" << html_escape(rel.generic_string()) << "\" alt=\"\">\n";
    } else {
      if (missing) missing->push_back(w.crop_ref);
      html << "<div class=\"missing\">no image</div>\n";
    }
    html << "<div>#" << w.position << " ";
    if (w.code) {
      html << html_escape(w.code->text());
    } else if (w.status == WagonStatus::kNotLocated) {
      html << "probable frame";
    } else {
      html << html_escape(w.reading.empty() ? "?" : w.reading);
    }
    html << "</div>\n</div>\n";
  }
  html << "</div>\n</body></html>\n";
  return html.str();
}

MosaicOutput render_manifest(const TrainSummary& s, const fs::path& crop_dir,
                             const fs::path& out_dir) {
  fs::create_directories(out_dir);
  MosaicOutput out;
  out.manifest = out_dir / "mosaic.json";
  out.page = out_dir / "mosaic.html";
  write_file(out.manifest, mosaic_manifest(s).dump(2) + "\n");
  write_file(out.page, mosaic_html(s, crop_dir, out_dir, &out.missing_crops));
  return out;
}

}  // namespace wagonline
