#include "wagonline/detection_io.hpp"

#include <atomic>
#include <random>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

std::string record(int frame, double conf = 0.9) {
  return R"({"v":1,"frame":)" + std::to_string(frame) + R"(,"ts_ms":)" + std::to_string(frame * 33) +
         R"(,"camera":"cam0","width":1920,"height":1080,"crop_ref":"cam0/x.jpg",)"
         R"("detections":[{"cls":"code_region","x":100,"y":500,"w":260,"h":56,"conf":)" +
         std::to_string(conf) + R"(},{"cls":"H","x":110,"y":510,"w":18,"h":39,"conf":0.9}]})";
}

ErrorCode read_all_expecting_error(const std::string& text) {
  std::istringstream in(text);
  DetectionReader reader(in);
  try {
    while (reader.next()) {
    }
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

TEST(DetectionReader, ReadsRecordsInOrder) {
  std::istringstream in(record(1) + "\n" + record(2) + "\n\n" + record(5) + "\n");
  DetectionReader reader(in);
  std::vector<std::int64_t> frames;
  while (auto f = reader.next()) frames.push_back(f->frame);
  EXPECT_EQ(frames, (std::vector<std::int64_t>{1, 2, 5}));
}

TEST(DetectionReader, ParsesFields) {
  std::istringstream in(record(7));
  DetectionReader reader(in);
  const auto f = reader.next();
  ASSERT_TRUE(f);
  EXPECT_EQ(f->camera, "cam0");
  EXPECT_EQ(f->width, 1920);
  EXPECT_EQ(f->crop_ref, "cam0/x.jpg");
  ASSERT_EQ(f->detections.size(), 2u);
  EXPECT_TRUE(f->detections[0].is_region());
  EXPECT_EQ(f->detections[1].glyph(), 'H');
  EXPECT_DOUBLE_EQ(f->detections[0].box.w, 260);
}

TEST(DetectionReader, ConfidenceOutOfRangeNamesLine) {
  std::istringstream in(record(1) + "\n" + record(2, 1.2) + "\n");
  DetectionReader reader(in);
  ASSERT_TRUE(reader.next());
  try {
    reader.next();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("conf"), std::string::npos) << e.what();
  }
}

TEST(DetectionReader, NonMonotonicFrame) {
  EXPECT_EQ(read_all_expecting_error(record(5) + "\n" + record(4) + "\n"),
            ErrorCode::kNonMonotonicFrame);
  EXPECT_EQ(read_all_expecting_error(record(5) + "\n" + record(5) + "\n"),
            ErrorCode::kNonMonotonicFrame);
}

TEST(DetectionReader, SchemaViolations) {
  EXPECT_EQ(read_all_expecting_error("not json\n"), ErrorCode::kSchemaError);
  EXPECT_EQ(read_all_expecting_error(R"({"v":2,"frame":1})"), ErrorCode::kSchemaError);
  EXPECT_EQ(read_all_expecting_error(
                R"({"v":1,"frame":1,"ts_ms":0,"camera":"c","width":10,"height":10,"detections":[{"cls":"code_region","x":1,"y":1,"w":0,"h":2,"conf":0.5}]})"),
            ErrorCode::kSchemaError);
  EXPECT_EQ(read_all_expecting_error(
                R"({"v":1,"frame":1,"ts_ms":0,"camera":"c","width":10,"height":10,"detections":[{"cls":"car","x":1,"y":1,"w":2,"h":2,"conf":0.5}]})"),
            ErrorCode::kSchemaError);
  EXPECT_EQ(read_all_expecting_error(
                R"({"v":1,"frame":1,"ts_ms":0,"camera":"c","width":10,"height":10,"detections":[{"cls":"A","x":20,"y":1,"w":2,"h":2,"conf":0.5}]})"),
            ErrorCode::kSchemaError);
  EXPECT_EQ(read_all_expecting_error(
                R"({"v":1,"frame":1,"ts_ms":0,"camera":"c","width":10,"height":10,"detections":[]})"
                "\n"
                R"({"v":1,"frame":2,"ts_ms":0,"camera":"c","width":20,"height":10,"detections":[]})"),
            ErrorCode::kSchemaError);
}

TEST(DetectionReader, ClampsBoxesToFrame) {
  std::istringstream in(
      R"({"v":1,"frame":1,"ts_ms":0,"camera":"c","width":100,"height":50,"detections":[{"cls":"code_region","x":-10,"y":40,"w":30,"h":20,"conf":0.5}]})");
  DetectionReader reader(in);
  const auto f = reader.next();
  ASSERT_TRUE(f);
  EXPECT_EQ(f->detections[0].box, (Box{0, 40, 20, 10}));
}

TEST(DetectionReader, MissingFileIsReported) {
  EXPECT_THROW(DetectionFile("/nonexistent/dets.jsonl"), Error);
}

TEST(DetectionWriter, FieldOrderIsFixed) {
  FrameDetections f;
  f.frame = 3;
  f.ts_ms = 100;
  f.camera = "left";
  f.width = 1920;
  f.height = 1080;
  f.detections.push_back({"code_region", {1.5, 2, 3, 4}, 0.75});
  EXPECT_EQ(to_jsonl(f),
            R"({"v":1,"frame":3,"ts_ms":100,"camera":"left","width":1920,"height":1080,)"
            R"("detections":[{"cls":"code_region","x":1.5,"y":2.0,"w":3.0,"h":4.0,"conf":0.75}]})");
}

// write(read(write(x))) == write(x) over random in-bounds records.
TEST(DetectionWriter, RoundTripProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  const std::string classes = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  std::ostringstream stream;
  std::vector<std::string> lines;
  for (int frame = 0; frame < 200; ++frame) {
    FrameDetections f;
    f.frame = frame * 3;
    f.ts_ms = frame * 100;
    f.camera = "cam";
    f.width = 1920;
    f.height = 1080;
    if (frame % 2) f.crop_ref = "cam/" + std::to_string(frame) + ".jpg";
    const int n = static_cast<int>(u(rng) * 12);
    for (int i = 0; i < n; ++i) {
      Detection d;
      d.cls = i == 0 ? "code_region" : std::string(1, classes[static_cast<std::size_t>(u(rng) * 36)]);
      d.box.w = 1 + u(rng) * 300;
      d.box.h = 1 + u(rng) * 100;
      d.box.x = u(rng) * (1920 - d.box.w);
      d.box.y = u(rng) * (1080 - d.box.h);
      d.conf = u(rng);
      f.detections.push_back(d);
    }
    lines.push_back(to_jsonl(f));
    write_frame(stream, f);
  }
  std::istringstream in(stream.str());
  DetectionReader reader(in);
  std::size_t i = 0;
  while (auto f = reader.next()) {
    ASSERT_LT(i, lines.size());
    EXPECT_EQ(to_jsonl(*f), lines[i]);
    ++i;
  }
  EXPECT_EQ(i, lines.size());
}

TEST(Iou, Basics) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 0, 10, 10}), 0.0);
  EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 0, 10, 10}), 50.0 / 150.0, 1e-12);
}

class FakeDetector {
 public:
  FakeDetector() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeDetector() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

DetectorClientOptions fast_options() {
  DetectorClientOptions o;
  o.timeout = std::chrono::milliseconds(300);
  o.initial_backoff = std::chrono::milliseconds(1);
  o.max_backoff = std::chrono::milliseconds(4);
  return o;
}

TEST(DetectorClient, HealthyEndpoint) {
  FakeDetector fake;
  std::string seen;
  fake.server().Post("/infer", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body).at("crop_ref").get<std::string>();
    res.set_content(record(9), "application/json");
  });
  DetectorClient client(fake.url(), fast_options());
  const auto f = client.poll("cam0/000009.jpg");
  EXPECT_EQ(f.frame, 9);
  EXPECT_EQ(seen, "cam0/000009.jpg");
  EXPECT_EQ(client.last_attempts(), 1);
}

TEST(DetectorClient, ServerErrorsExhaustRetries) {
  FakeDetector fake;
  std::atomic<int> calls{0};
  fake.server().Post("/infer", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 503;
  });
  DetectorClient client(fake.url(), fast_options());
  try {
    client.poll("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnavailable);
  }
  EXPECT_EQ(calls.load(), 3);
}

TEST(DetectorClient, RecoversAfterTransientError) {
  FakeDetector fake;
  std::atomic<int> calls{0};
  fake.server().Post("/infer", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 500;
      return;
    }
    res.set_content(record(2), "application/json");
  });
  DetectorClient client(fake.url(), fast_options());
  EXPECT_EQ(client.poll("x").frame, 2);
  EXPECT_EQ(client.last_attempts(), 2);
}

TEST(DetectorClient, SchemaViolationIsBadResponse) {
  FakeDetector fake;
  fake.server().Post("/infer", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(record(1, 1.5), "application/json");
  });
  DetectorClient client(fake.url(), fast_options());
  try {
    client.poll("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadResponse);
  }
}

TEST(DetectorClient, SlowEndpointTimesOut) {
  FakeDetector fake;
  fake.server().Post("/infer", [&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content(record(1), "application/json");
  });
  auto options = fast_options();
  options.max_attempts = 2;
  DetectorClient client(fake.url(), options);
  try {
    client.poll("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTimeout);
  }
}

TEST(DetectorClient, MalformedUrlFailsAtConstruction) {
  EXPECT_THROW(DetectorClient("not a url"), Error);
  EXPECT_THROW(DetectorClient("ftp://host/x"), Error);
}

}  // namespace
}  // namespace wagonline
