#include "wagonline/scenario_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string_view confusables(char c) {
  switch (c) {
    case '0': return "O86";
    case '1': return "I7";
    case '2': return "Z7";
    case '3': return "8";
    case '4': return "A";
    case '5': return "S6";
    case '6': return "G5";
    case '7': return "T1";
    case '8': return "B3";
    case '9': return "4";
    case 'A': return "4";
    case 'B': return "8";
    case 'C': return "G";
    case 'D': return "O";
    case 'E': return "F";
    case 'F': return "E";
    case 'G': return "6C";
    case 'H': return "N";
    case 'I': return "1";
    case 'J': return "I";
    case 'K': return "X";
    case 'L': return "I";
    case 'M': return "N";
    case 'N': return "H";
    case 'O': return "0D";
    case 'P': return "R";
    case 'Q': return "O";
    case 'R': return "P";
    case 'S': return "5";
    case 'T': return "7";
    case 'U': return "V";
    case 'V': return "U";
    case 'W': return "V";
    case 'X': return "K";
    case 'Y': return "V";
    case 'Z': return "2";
    default: return "X";
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool probability_ok(double p) { return p >= 0.0 && p <= 1.0; }

RawReading reading_of(std::string_view glyphs) {
  RawReading r;
  for (char c : glyphs) r.chars.push_back({c, 0.9, {}, true});
  return r;
}

}  // namespace

std::string to_string(Direction d) {
  switch (d) {
    case Direction::kLeftToRight: return "left_to_right";
    case Direction::kRightToLeft: return "right_to_left";
    case Direction::kUnknown: return "unknown";
  }
  return "unknown";
}

std::string to_string(DamageMode m) {
  switch (m) {
    case DamageMode::kTruncateTail: return "truncate_tail";
    case DamageMode::kOccludeHead: return "occlude_head";
    case DamageMode::kGarble: return "garble";
  }
  return "garble";
}

void ScenarioConfig::check() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (wagons < 1) fail("wagons must be >= 1");
  if (locomotives < 0) fail("locomotives must be >= 0");
  if (!(px_per_frame > 0)) fail("px_per_frame must be > 0");
  if (frame_width <= 0 || frame_height <= 0) fail("frame size must be positive");
  if (!(region_width > 0) || !(region_height > 0) || region_width >= frame_width ||
      region_height >= frame_height) {
    fail("code region must be positive and smaller than the frame");
  }
  if (!(vehicle_length_px > region_width)) fail("vehicle_length_px must exceed region_width");
  if (!(coupling_gap_px >= 0)) fail("coupling_gap_px must be >= 0");
  if (!(fps > 0)) fail("fps must be > 0");
  if (direction == Direction::kUnknown) fail("direction must be known");
  if (!probability_ok(miss_rate) || !probability_ok(char_confusion_rate) ||
      !probability_ok(damaged_fraction) || !probability_ok(unlabeled_fraction) ||
      !probability_ok(two_line_fraction)) {
    fail("probabilities must lie in [0,1]");
  }
  if (!(false_positive_rate >= 0)) fail("false_positive_rate must be >= 0");
  if (!(confidence_noise >= 0)) fail("confidence_noise must be >= 0");
}

int GroundTruth::damaged_count() const {
  return static_cast<int>(
      std::count_if(wagons.begin(), wagons.end(), [](const TruthWagon& w) { return w.damaged; }));
}

nlohmann::ordered_json truth_to_json(const GroundTruth& truth) {
  nlohmann::ordered_json j;
  j["expected_count"] = truth.expected_count;
  auto wagons = nlohmann::ordered_json::array();
  for (const auto& w : truth.wagons) {
    nlohmann::ordered_json o;
    o["position"] = w.position;
    o["code"] = w.code ? nlohmann::ordered_json(w.code->text()) : nlohmann::ordered_json();
    o["damaged"] = w.damaged;
    if (w.damage) o["damage"] = to_string(*w.damage);
    o["unlabeled"] = w.unlabeled;
    wagons.push_back(std::move(o));
  }
  j["wagons"] = std::move(wagons);
  return j;
}

GroundTruth truth_from_json(const nlohmann::json& j) {
  GroundTruth truth;
  truth.expected_count = j.at("expected_count").get<int>();
  for (const auto& o : j.at("wagons")) {
    TruthWagon w;
    w.position = o.at("position").get<int>();
    if (!o.at("code").is_null()) w.code = parse_code(o.at("code").get<std::string>());
    w.damaged = o.at("damaged").get<bool>();
    if (auto it = o.find("damage"); it != o.end()) {
      const auto s = it->get<std::string>();
      w.damage = s == "truncate_tail"  ? DamageMode::kTruncateTail
                 : s == "occlude_head" ? DamageMode::kOccludeHead
                                       : DamageMode::kGarble;
    }
    w.unlabeled = o.value("unlabeled", false);
    truth.wagons.push_back(std::move(w));
  }
  return truth;
}

RawReading apply_damage(const RollingStockId& code, DamageMode mode) {
  std::string glyphs = code.glyphs();
  switch (mode) {
    case DamageMode::kTruncateTail: {
      const std::size_t keep = code.kind == StockKind::kWagon ? 9 : 2;
      glyphs.resize(std::min(keep, glyphs.size() - 1));
      break;
    }
    case DamageMode::kOccludeHead:
      glyphs.erase(0, 2);
      break;
    case DamageMode::kGarble: {
      if (code.kind == StockKind::kLocomotive) {
        glyphs[glyphs.size() / 2] = 'X';
        break;
      }
      // Last serial digit first, smallest replacement that breaks the check.
      for (int pos = 5; pos >= 0; --pos) {
        for (char d = '0'; d <= '9'; ++d) {
          if (d == code.serial[pos]) continue;
          RollingStockId garbled = code;
          garbled.serial[pos] = d;
          const auto v = validate(garbled);
          if (!v.valid && v.reason == ValidationFailure::kCheckDigitMismatch) {
            glyphs[3 + pos] = d;
            return reading_of(glyphs);
          }
        }
      }
      break;
    }
  }
  return reading_of(glyphs);
}

Consist make_consist(const ScenarioConfig& config) {
  config.check();
  std::mt19937_64 rng(splitmix64(config.seed));
  Consist consist;
  const int total = config.locomotives + config.wagons;
  double offset = 0;
  for (int i = 0; i < total; ++i) {
    if (i < config.locomotives) {
      const int digits = uniform_int(rng, 3, 4);
      std::string number(1, static_cast<char>('1' + uniform_int(rng, 0, 8)));
      for (int k = 1; k < digits; ++k) number.push_back(static_cast<char>('0' + uniform_int(rng, 0, 9)));
      consist.codes.push_back(RollingStockId::locomotive(number));
    } else {
      std::string letters;
      for (int k = 0; k < 3; ++k) letters.push_back(static_cast<char>('A' + uniform_int(rng, 0, 25)));
      std::string serial;
      do {
        serial.clear();
        for (int k = 0; k < 6; ++k) serial.push_back(static_cast<char>('0' + uniform_int(rng, 0, 9)));
      } while (raw_check_value(serial, default_scheme()) == 10);
      const char check = static_cast<char>('0' + compute_check_digit(serial));
      std::optional<char> region;
      if (uniform(rng, 0, 1) < 0.3) region = static_cast<char>('A' + uniform_int(rng, 0, 25));
      consist.codes.push_back(RollingStockId::wagon(letters, serial, check, region));
    }
    if (i > 0) {
      offset += config.vehicle_length_px + config.coupling_gap_px * uniform(rng, 0.8, 1.2);
    }
    consist.offsets.push_back(offset);
    consist.region_y.push_back(config.frame_height * 0.55 - config.region_height / 2 +
                               uniform(rng, -60, 60));
  }
  return consist;
}

ScenarioGenerator::ScenarioGenerator(const ScenarioConfig& config)
    : ScenarioGenerator(config, make_consist(config), splitmix64(config.seed ^ 0x5151)) {}

ScenarioGenerator::ScenarioGenerator(const ScenarioConfig& config, Consist consist,
                                     std::uint64_t side_seed)
    : config_(config), consist_(std::move(consist)), rng_(side_seed) {
  config_.check();
  const std::size_t n = consist_.codes.size();
  painted_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u_unlabeled = uniform(rng_, 0, 1);
    const double u_damage = uniform(rng_, 0, 1);
    const int mode = uniform_int(rng_, 0, 2);
    const double u_two_line = uniform(rng_, 0, 1);

    TruthWagon truth;
    truth.position = static_cast<int>(i) + 1;
    // The first and last vehicle always carry a code: with detections alone
    // an unlabeled vehicle at either end of the train is unobservable.
    const bool interior = i > 0 && i + 1 < n;
    truth.unlabeled = interior && u_unlabeled < config_.unlabeled_fraction;
    truth.damaged = !truth.unlabeled && u_damage < config_.damaged_fraction;
    if (!truth.unlabeled) truth.code = consist_.codes[i];

    Painted& p = painted_[i];
    p.unlabeled = truth.unlabeled;
    p.two_line = u_two_line < config_.two_line_fraction;
    if (truth.damaged) {
      truth.damage = static_cast<DamageMode>(mode);
      p.glyphs = apply_damage(consist_.codes[i], *truth.damage);
    } else {
      p.glyphs = reading_of(consist_.codes[i].glyphs());
    }
    truth_.wagons.push_back(std::move(truth));
  }
  truth_.expected_count = static_cast<int>(n);
  const double travel = config_.frame_width + config_.region_width + consist_.offsets.back();
  total_frames_ = static_cast<std::int64_t>(std::ceil(travel / config_.px_per_frame)) + 5;
}

double ScenarioGenerator::region_x(std::size_t i, std::int64_t frame) const {
  const double travelled =
      config_.px_per_frame * static_cast<double>(frame) - config_.region_width - consist_.offsets[i];
  if (config_.direction == Direction::kLeftToRight) return travelled;
  return config_.frame_width - travelled - config_.region_width;
}

void ScenarioGenerator::emit_region(FrameDetections& f, std::size_t i, double x) {
  const double y = consist_.region_y[i];
  Detection region;
  region.cls = std::string(kCodeRegion);
  region.box = {x + uniform(rng_, -2, 2), y + uniform(rng_, -2, 2), config_.region_width,
                config_.region_height};
  region.box.x = std::clamp(region.box.x, 0.0, config_.frame_width - region.box.w);
  region.conf = uniform(rng_, 0.6, 0.95);
  f.detections.push_back(std::move(region));

  const Painted& p = painted_[i];
  const double pitch = config_.region_width / 11.5;
  const double margin = (config_.region_width - 11 * pitch) / 2;
  const std::size_t first_row = p.two_line ? std::min<std::size_t>(3, p.glyphs.chars.size())
                                           : p.glyphs.chars.size();
  for (std::size_t k = 0; k < p.glyphs.chars.size(); ++k) {
    char glyph = p.glyphs.chars[k].glyph;
    double conf = std::clamp(0.92 + (config_.confidence_noise > 0
                                         ? std::normal_distribution<double>(
                                               0, config_.confidence_noise)(rng_)
                                         : 0.0),
                             0.05, 1.0);
    if (uniform(rng_, 0, 1) < config_.char_confusion_rate) {
      const auto options = confusables(glyph);
      glyph = options[static_cast<std::size_t>(uniform_int(rng_, 0, static_cast<int>(options.size()) - 1))];
      conf = uniform(rng_, 0.3, 0.7);
    }
    Box box;
    if (p.two_line) {
      const bool top = k < first_row;
      const std::size_t col = top ? k : k - first_row;
      box = {x + margin + static_cast<double>(col) * pitch,
             y + config_.region_height * (top ? 0.05 : 0.53), pitch * 0.8,
             config_.region_height * 0.42};
    } else {
      box = {x + margin + static_cast<double>(k) * pitch, y + config_.region_height * 0.15,
             pitch * 0.8, config_.region_height * 0.7};
    }
    box.x += uniform(rng_, -1, 1);
    box.x = std::clamp(box.x, 0.0, config_.frame_width - box.w);
    f.detections.push_back({std::string(1, glyph), box, conf});
  }
}

std::optional<FrameDetections> ScenarioGenerator::next() {
  if (frame_ >= total_frames_) return std::nullopt;
  FrameDetections f;
  f.frame = frame_;
  f.ts_ms = config_.start_ts_ms +
            static_cast<std::int64_t>(std::llround(static_cast<double>(frame_) * 1000.0 / config_.fps));
  f.camera = config_.camera;
  f.width = config_.frame_width;
  f.height = config_.frame_height;
  char name[32];
  std::snprintf(name, sizeof name, "/%06lld.jpg", static_cast<long long>(frame_));
  f.crop_ref = config_.camera + name;

  for (std::size_t i = 0; i < painted_.size(); ++i) {
    const double x = region_x(i, frame_);
    if (x < 0 || x + config_.region_width > config_.frame_width) continue;
    if (painted_[i].unlabeled) continue;
    if (uniform(rng_, 0, 1) < config_.miss_rate) continue;
    emit_region(f, i, x);
  }

  const int spurious =
      config_.false_positive_rate > 0
          ? std::poisson_distribution<int>(config_.false_positive_rate)(rng_)
          : 0;
  for (int s = 0; s < spurious; ++s) {
    Detection d;
    d.cls = std::string(kCodeRegion);
    d.box.w = config_.region_width * uniform(rng_, 0.5, 1.5);
    d.box.h = config_.region_height * uniform(rng_, 0.5, 1.5);
    d.box.x = uniform(rng_, 0, config_.frame_width - d.box.w);
    d.box.y = uniform(rng_, 0, config_.frame_height - d.box.h);
    d.conf = uniform(rng_, 0.25, 0.6);
    f.detections.push_back(std::move(d));
  }
  ++frame_;
  return f;
}

Scenario generate(const ScenarioConfig& config) {
  ScenarioGenerator gen(config);
  Scenario s;
  while (auto f = gen.next()) s.frames.push_back(std::move(*f));
  s.truth = gen.truth();
  return s;
}

ScenarioPair generate_pair(const ScenarioConfig& config) {
  const Consist consist = make_consist(config);
  ScenarioConfig left = config;
  left.camera = config.camera + "-left";
  left.direction = Direction::kLeftToRight;
  ScenarioConfig right = config;
  right.camera = config.camera + "-right";
  right.direction = Direction::kRightToLeft;

  ScenarioPair pair;
  ScenarioGenerator lg(left, consist, splitmix64(config.seed * 2 + 1));
  while (auto f = lg.next()) pair.left.frames.push_back(std::move(*f));
  pair.left.truth = lg.truth();
  ScenarioGenerator rg(right, consist, splitmix64(config.seed * 2 + 2));
  while (auto f = rg.next()) pair.right.frames.push_back(std::move(*f));
  pair.right.truth = rg.truth();
  return pair;
}

}  // namespace wagonline
