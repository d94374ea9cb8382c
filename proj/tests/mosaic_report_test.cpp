#include "wagonline/mosaic_report.hpp"

#include <fstream>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

namespace fs = std::filesystem;

WagonRecord wagon(int pos, WagonStatus status) {
  WagonRecord r;
  r.position = pos;
  r.status = status;
  r.camera = "cam0";
  r.crop_ref = "cam0/" + std::to_string(pos) + ".jpg";
  if (is_accepted(status)) r.code = parse_code(pos % 2 ? "HFE-094063-1" : "FHD-643258-1L");
  if (status == WagonStatus::kRejected) r.reject_reason = RejectReason::kLowConfidence;
  return r;
}

TrainSummary sample() {
  return build_summary({wagon(3, WagonStatus::kRejected), wagon(1, WagonStatus::kAccepted),
                        wagon(2, WagonStatus::kAcceptedDamaged), wagon(4, WagonStatus::kNotLocated)},
                       {"cam0", 1000, 9000});
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("wagonline-mosaic-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(Stats, CountsAndRejectionRate) {
  const auto s = sample();
  EXPECT_EQ(s.stats, (TrainStats{1, 1, 1, 1, 0.5}));
  EXPECT_EQ(compute_stats({}).rejection_rate, 0.0);
}

TEST(Summary, SortedAndIdentified) {
  const auto s = sample();
  EXPECT_EQ(s.train_id, "cam0-1000");
  EXPECT_EQ(s.wagon_count, 4);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(s.wagons[i].position, i + 1);
}

TEST(Summary, JsonRoundTripAndFieldOrder) {
  const auto s = sample();
  const auto j = summary_to_json(s);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"train_id", "camera", "started_ms", "ended_ms",
                                            "wagon_count", "wagons", "stats"}));
  EXPECT_EQ(summary_from_json(nlohmann::json::parse(j.dump())), s);
}

TEST(Summary, RejectsBrokenInvariants) {
  const auto base = nlohmann::json::parse(summary_to_json(sample()).dump());
  auto j = base;
  j["wagon_count"] = 5;
  EXPECT_THROW(summary_from_json(j), Error);
  j = base;
  j["wagons"][1]["position"] = 7;
  EXPECT_THROW(summary_from_json(j), Error);
  j = base;
  j["wagons"][0]["code"] = "HFE-094063-7";
  EXPECT_THROW(summary_from_json(j), Error);
  j = base;
  j["wagons"][2]["reject_reason"] = nullptr;
  EXPECT_THROW(summary_from_json(j), Error);
  j = base;
  j["stats"]["rejected"] = 0;
  EXPECT_THROW(summary_from_json(j), Error);
  j = base;
  j.erase("train_id");
  EXPECT_THROW(summary_from_json(j), Error);
}

TEST(Mosaic, BorderColors) {
  EXPECT_EQ(border_color(WagonStatus::kAccepted), "green");
  EXPECT_EQ(border_color(WagonStatus::kAcceptedDamaged), "blue");
  EXPECT_EQ(border_color(WagonStatus::kRejected), "red");
  EXPECT_EQ(border_color(WagonStatus::kNotLocated), "gray");
}

TEST(Mosaic, ManifestCells) {
  const auto m = mosaic_manifest(sample());
  EXPECT_EQ(m["train_id"], "cam0-1000");
  ASSERT_EQ(m["cells"].size(), 4u);
  EXPECT_EQ(m["cells"][0]["code"], "HFE-094063-1");
  EXPECT_EQ(m["cells"][2]["border"], "red");
  EXPECT_FALSE(m["cells"][3].contains("code"));
  EXPECT_EQ(m["cells"][3]["status"], "not_located");
}

TEST(Mosaic, RenderIsDeterministicAndReportsMissingCrops) {
  TempDir tmp;
  const fs::path crops = tmp.path() / "crops";
  fs::create_directories(crops / "cam0");
  for (int pos : {1, 2}) std::ofstream(crops / "cam0" / (std::to_string(pos) + ".jpg")) << "jpg";
  const auto s = sample();
  const auto a = render_manifest(s, crops, tmp.path() / "a");
  const auto b = render_manifest(s, crops, tmp.path() / "b");
  EXPECT_EQ(slurp(a.manifest), slurp(b.manifest));
  EXPECT_EQ(slurp(a.page), slurp(b.page));
  EXPECT_EQ(a.missing_crops, (std::vector<std::string>{"cam0/3.jpg", "cam0/4.jpg"}));
  const std::string html = slurp(a.page);
  EXPECT_NE(html.find("../crops/cam0/1.jpg"), std::string::npos);
  EXPECT_NE(html.find("no image"), std::string::npos);
  EXPECT_NE(html.find("cell red"), std::string::npos);
}

}  // namespace
}  // namespace wagonline
