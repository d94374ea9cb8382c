// wagonline: command-line entry points.
//
//   simulate    write a synthetic detection stream and its ground truth
//   run         detections -> train summary (and optionally a mosaic)
//   fuse        merge the summaries of the two sides of one passage
//   serve       HTTP API over a train store
//   report      publish a summary to the cloud endpoint
//   checkdigit  validate identification codes
//   bench       pipeline throughput on a synthetic stream

#include <signal.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "wagonline/detection_io.hpp"
#include "wagonline/error.hpp"
#include "wagonline/fuse.hpp"
#include "wagonline/pipeline.hpp"
#include "wagonline/publisher.hpp"
#include "wagonline/scenario_sim.hpp"
#include "wagonline/service.hpp"
#include "wagonline/store.hpp"

namespace fs = std::filesystem;
using namespace wagonline;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitQueued = 3;

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot read " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kSchemaError, path.string() + " is not JSON");
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(path);
  out << text << "\n";
  if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + path);
}

PipelineConfig load_pipeline_config(const std::string& config_file) {
  return pipeline_config(config_file.empty() ? KeyValueConfig::from_environment()
                                             : KeyValueConfig::load(config_file));
}

void write_stream(const fs::path& path, const std::vector<FrameDetections>& frames) {
  std::ofstream out(path);
  for (const auto& f : frames) write_frame(out, f);
  if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + path.string());
}

struct SimulateArgs {
  ScenarioConfig config;
  std::string direction = "ltr";
  std::string out_dir = ".";
  bool pair = false;
};

int simulate(SimulateArgs args) {
  if (args.direction == "rtl") {
    args.config.direction = Direction::kRightToLeft;
  } else if (args.direction != "ltr") {
    throw Error(ErrorCode::kInvalidConfig, "direction must be ltr or rtl");
  }
  const fs::path dir = args.out_dir;
  fs::create_directories(dir);
  if (args.pair) {
    const auto pair = generate_pair(args.config);
    write_stream(dir / "left.jsonl", pair.left.frames);
    write_stream(dir / "right.jsonl", pair.right.frames);
    write_text((dir / "truth_left.json").string(), truth_to_json(pair.left.truth).dump(2));
    write_text((dir / "truth_right.json").string(), truth_to_json(pair.right.truth).dump(2));
    std::cerr << "wrote " << pair.left.frames.size() << " + " << pair.right.frames.size()
              << " frames to " << dir.string() << "\n";
  } else {
    const auto s = generate(args.config);
    write_stream(dir / "detections.jsonl", s.frames);
    write_text((dir / "truth.json").string(), truth_to_json(s.truth).dump(2));
    std::cerr << "wrote " << s.frames.size() << " frames, " << s.truth.expected_count
              << " vehicles to " << dir.string() << "\n";
  }
  return kExitOk;
}

struct RunArgs {
  std::string detections;
  std::string detector;
  std::string crop_list;
  std::string out;
  std::string mosaic_dir;
  std::string crop_dir = ".";
  std::string config;
};

int run(const RunArgs& args) {
  const PipelineConfig config = load_pipeline_config(args.config);
  PipelineResult result;
  if (!args.detector.empty()) {
    // Poll a detector service for each crop named in the list file.
    DetectorClient client(args.detector);
    std::ifstream list(args.crop_list);
    if (!list) throw Error(ErrorCode::kNotFound, "cannot read crop list '" + args.crop_list + "'");
    result = run_pipeline(
        [&]() -> std::optional<FrameDetections> {
          std::string crop;
          while (std::getline(list, crop)) {
            if (!crop.empty()) return client.poll(crop);
          }
          return std::nullopt;
        },
        config);
  } else {
    DetectionFile file(args.detections);
    result = run_pipeline([&] { return file.next(); }, config);
  }
  write_text(args.out, summary_to_json(result.summary).dump(2));
  if (!args.mosaic_dir.empty()) {
    const auto m = render_manifest(result.summary, args.crop_dir, args.mosaic_dir);
    if (!m.missing_crops.empty()) {
      std::cerr << "MissingCrop: " << m.missing_crops.size() << " crops not found under " << args.crop_dir
                << " (first: " << m.missing_crops.front() << ")\n";
    }
  }
  const auto& s = result.summary.stats;
  std::cerr << result.frames << " frames, " << result.summary.wagon_count << " vehicles: " << s.accepted
            << " accepted, " << s.accepted_damaged << " damaged, " << s.rejected << " rejected, "
            << s.not_located << " not located\n";
  return kExitOk;
}

int fuse_cmd(const std::string& left_path, const std::string& right_path, const std::string& out) {
  const auto left = summary_from_json(read_json(left_path));
  const auto right = summary_from_json(read_json(right_path));
  const auto fused = merge(left, right, align(left, right));
  write_text(out, summary_to_json(fused_summary(fused, left, right)).dump(2));
  std::cerr << fused.wagons.size() << " vehicles, " << fused.unresolved() << " unresolved, "
            << fused.conflicts() << " conflicts\n";
  return kExitOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string store;
  std::string media;
  std::string token;
  std::string publish;
  std::string outbox;
};

int serve(const ServeArgs& args) {
  // Block termination signals before any thread starts so only the waiter
  // below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<Publisher> publisher;
  if (!args.publish.empty()) {
    const fs::path outbox = args.outbox.empty() ? fs::path(args.store) / "outbox" : fs::path(args.outbox);
    publisher = std::make_unique<Publisher>(args.publish, outbox);
  }
  TrainStore store(args.store);
  ServiceOptions options;
  if (!args.media.empty()) options.media_dir = args.media;
  if (!args.token.empty()) options.token = args.token;
  Service service(store, options, publisher.get());
  const int port = service.bind(args.host, args.port);

  std::atomic<bool> signalled{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    signalled = true;
    service.stop();
  });
  std::cout << "listening on " << args.host << ":" << port << " (" << store.size() << " trains)"
            << std::endl;
  service.listen();
  // listen() can also return on its own; wake the waiter so it exits.
  if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kExitOk;
}

int report(const std::string& train, const std::string& endpoint, const std::string& outbox, int wait_s) {
  const auto summary = summary_from_json(read_json(train));
  PublisherOptions options;
  Publisher publisher(endpoint, outbox.empty() ? fs::path(".wagonline-outbox") : fs::path(outbox), options);
  auto receipt = publisher.publish(summary_to_json(summary).dump());
  if (!receipt.delivered && wait_s > 0 && publisher.wait_idle(std::chrono::seconds(wait_s))) {
    receipt = *publisher.receipt(receipt.message_id);
  }
  nlohmann::ordered_json j;
  j["message_id"] = receipt.message_id;
  j["delivered"] = receipt.delivered;
  j["attempts"] = receipt.attempts;
  if (!receipt.delivered) j["last_error"] = receipt.last_error;
  std::cout << j.dump() << "\n";
  return receipt.delivered ? kExitOk : kExitQueued;
}

int checkdigit(const std::vector<std::string>& codes) {
  int worst = kExitOk;
  for (const auto& text : codes) {
    try {
      const auto id = parse_code(text);
      const auto v = validate(id);
      if (v.valid) {
        std::cout << id.text() << " valid\n";
      } else {
        const bool unissuable = v.reason == ValidationFailure::kUnissuableSerial;
        std::cout << id.text() << " invalid: "
                  << (unissuable ? "serial has no decimal check digit"
                                 : "expected check digit " + std::to_string(compute_check_digit(id.serial)))
                  << "\n";
        worst = std::max(worst, kExitInvalid);
      }
    } catch (const Error& e) {
      std::cout << text << " " << e.what() << "\n";
      worst = worst == kExitInvalid ? kExitInvalid : kExitError;
    }
  }
  return worst;
}

int bench(int wagons, std::uint64_t seed, int repeat) {
  ScenarioConfig c;
  c.wagons = wagons;
  c.seed = seed;
  c.miss_rate = 0.1;
  c.false_positive_rate = 0.02;
  c.char_confusion_rate = 0.02;
  c.confidence_noise = 0.05;
  c.damaged_fraction = 0.116;
  const auto frames = generate(c).frames;
  double best = 0;
  for (int r = 0; r < repeat; ++r) {
    std::size_t i = 0;
    const auto start = std::chrono::steady_clock::now();
    const auto result = run_pipeline([&]() -> std::optional<FrameDetections> {
      if (i == frames.size()) return std::nullopt;
      return frames[i++];
    });
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    const double rate = static_cast<double>(result.frames) / took.count();
    best = std::max(best, rate);
    std::printf("run %d: %zu frames, %d vehicles, %.3f s, %.0f frames/s\n", r + 1, result.frames,
                result.summary.wagon_count, took.count(), rate);
  }
  std::printf("best: %.0f frames/s\n", best);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wagon counting and identification from code-region detections"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Write a synthetic detection stream with ground truth");
  simulate_cmd->add_option("--seed", sim.config.seed);
  simulate_cmd->add_option("--wagons", sim.config.wagons)->check(CLI::Range(1, 100000));
  simulate_cmd->add_option("--locomotives", sim.config.locomotives);
  simulate_cmd->add_option("--miss-rate", sim.config.miss_rate);
  simulate_cmd->add_option("--fp-rate", sim.config.false_positive_rate);
  simulate_cmd->add_option("--confusion", sim.config.char_confusion_rate);
  simulate_cmd->add_option("--noise", sim.config.confidence_noise);
  simulate_cmd->add_option("--damaged", sim.config.damaged_fraction);
  simulate_cmd->add_option("--unlabeled", sim.config.unlabeled_fraction);
  simulate_cmd->add_option("--two-line", sim.config.two_line_fraction);
  simulate_cmd->add_option("--camera", sim.config.camera);
  simulate_cmd->add_option("--direction", sim.direction, "ltr or rtl");
  simulate_cmd->add_option("--out", sim.out_dir, "Output directory");
  simulate_cmd->add_flag("--pair", sim.pair, "Both sides of the passage");

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Count and read wagons from a detection stream");
  auto* det_opt = run_cmd->add_option("--detections", run_args.detections, "JSONL detection file");
  auto* detector_opt = run_cmd->add_option("--detector", run_args.detector, "Detector service URL");
  run_cmd->add_option("--crop-list", run_args.crop_list, "Crop refs to send to the detector, one per line");
  det_opt->excludes(detector_opt);
  run_cmd->add_option("--out", run_args.out, "Summary file (stdout if omitted)");
  run_cmd->add_option("--mosaic", run_args.mosaic_dir, "Write mosaic.json and mosaic.html here");
  run_cmd->add_option("--crops", run_args.crop_dir, "Directory holding crop images");
  run_cmd->add_option("--config", run_args.config, "Key-value config (default: $WAGONLINE_CONFIG)");

  std::string left, right, fuse_out;
  auto* fuse = app.add_subcommand("fuse", "Merge left and right summaries of one passage");
  fuse->add_option("--left", left)->required();
  fuse->add_option("--right", right)->required();
  fuse->add_option("--out", fuse_out);

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the train API");
  serve_cmd->add_option("--host", serve_args.host);
  serve_cmd->add_option("--port", serve_args.port, "0 picks a free port")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--store", serve_args.store, "Data directory")->required();
  serve_cmd->add_option("--media", serve_args.media, "Directory served under /media");
  serve_cmd->add_option("--token", serve_args.token, "Require this bearer token on /api");
  serve_cmd->add_option("--publish", serve_args.publish, "Forward new trains to this endpoint");
  serve_cmd->add_option("--outbox", serve_args.outbox, "Publisher queue directory");

  std::string train, endpoint, outbox;
  int wait_s = 0;
  auto* report_cmd = app.add_subcommand("report", "Publish a train summary");
  report_cmd->add_option("--train", train)->required();
  report_cmd->add_option("--endpoint", endpoint, "http://host[:port]/path or mqtt://host[:port]/topic")
      ->required();
  report_cmd->add_option("--outbox", outbox, "Publisher queue directory");
  report_cmd->add_option("--wait", wait_s, "Seconds to keep retrying before exiting");

  std::vector<std::string> codes;
  auto* check_cmd = app.add_subcommand("checkdigit", "Validate codes; exit 0 valid, 2 invalid, 1 unparsable");
  check_cmd->add_option("codes", codes)->required();

  int bench_wagons = 135;
  std::uint64_t bench_seed = 1;
  int bench_repeat = 3;
  auto* bench_cmd = app.add_subcommand("bench", "Measure pipeline throughput");
  bench_cmd->add_option("--wagons", bench_wagons);
  bench_cmd->add_option("--seed", bench_seed);
  bench_cmd->add_option("--repeat", bench_repeat)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate_cmd) return simulate(sim);
    if (*run_cmd) {
      if (run_args.detections.empty() == run_args.detector.empty()) {
        throw Error(ErrorCode::kConfigError, "give exactly one of --detections or --detector");
      }
      return run(run_args);
    }
    if (*fuse) return fuse_cmd(left, right, fuse_out);
    if (*serve_cmd) return serve(serve_args);
    if (*report_cmd) return report(train, endpoint, outbox, wait_s);
    if (*check_cmd) return checkdigit(codes);
    if (*bench_cmd) return bench(bench_wagons, bench_seed, bench_repeat);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
