#include "wagonline/code_grammar.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

std::optional<char> letter_to_digit(char c) {
  switch (c) {
    case 'O':
    case 'Q':
      return '0';
    case 'I':
      return '1';
    case 'Z':
      return '2';
    case 'S':
      return '5';
    case 'G':
      return '6';
    case 'T':
      return '7';
    case 'B':
      return '8';
    default:
      return std::nullopt;
  }
}

std::optional<char> digit_to_letter(char c) {
  switch (c) {
    case '0':
      return 'O';
    case '1':
      return 'I';
    case '2':
      return 'Z';
    case '5':
      return 'S';
    case '6':
      return 'G';
    case '7':
      return 'T';
    case '8':
      return 'B';
    default:
      return std::nullopt;
  }
}

bool in_class(char c, GlyphClass cls) {
  return cls == GlyphClass::kLetter ? is_letter(c) : is_digit(c);
}

bool all_of_class(std::string_view s, GlyphClass cls) {
  return std::all_of(s.begin(), s.end(),
                     [cls](char c) { return in_class(c, cls); });
}

}  // namespace

bool is_letter(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_glyph(char c) { return is_letter(c) || is_digit(c); }

RollingStockId RollingStockId::wagon(std::string letters, std::string serial,
                                     char check, std::optional<char> region) {
  RollingStockId id;
  id.kind = StockKind::kWagon;
  id.letters = std::move(letters);
  id.serial = std::move(serial);
  id.check = check;
  id.region = region;
  return id;
}

RollingStockId RollingStockId::locomotive(std::string digits) {
  RollingStockId id;
  id.kind = StockKind::kLocomotive;
  id.check = '0';
  id.loco_digits = std::move(digits);
  return id;
}

std::string RollingStockId::text() const {
  if (kind == StockKind::kLocomotive) return loco_digits;
  std::string out = letters + "-" + serial + "-" + check;
  if (region) out += *region;
  return out;
}

std::string RollingStockId::glyphs() const {
  if (kind == StockKind::kLocomotive) return loco_digits;
  std::string out = letters + serial + check;
  if (region) out += *region;
  return out;
}

RollingStockId parse_code(std::string_view text) {
  std::string s;
  s.reserve(text.size());
  for (char c : text) {
    if (static_cast<unsigned char>(c) > 0x7f) {
      throw Error(ErrorCode::kInvalidPattern, "non-ASCII input");
    }
    if (c == '-' || c == ' ') continue;
    s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if ((s.size() == 10 || s.size() == 11) &&
      all_of_class(std::string_view(s).substr(0, 3), GlyphClass::kLetter) &&
      all_of_class(std::string_view(s).substr(3, 7), GlyphClass::kDigit) &&
      (s.size() == 10 || is_letter(s[10]))) {
    std::optional<char> region;
    if (s.size() == 11) region = s[10];
    return RollingStockId::wagon(s.substr(0, 3), s.substr(3, 6), s[9], region);
  }
  if ((s.size() == 3 || s.size() == 4) && all_of_class(s, GlyphClass::kDigit)) {
    return RollingStockId::locomotive(s);
  }
  throw Error(ErrorCode::kInvalidPattern,
              "'" + std::string(text) + "' is neither a wagon nor a locomotive code");
}

void CheckDigitScheme::check_well_formed() const {
  if (modulus != 11) {
    throw Error(ErrorCode::kInvalidConfig, "check-digit modulus must be 11");
  }
  std::set<int> seen;
  for (int w : weights) {
    if (w < 2 || w > 10) {
      throw Error(ErrorCode::kInvalidConfig, "weight out of range 2..10");
    }
    if (!seen.insert(w).second) {
      throw Error(ErrorCode::kInvalidConfig, "weights must be distinct");
    }
  }
  if (ten_digit < 0 || ten_digit > 9) {
    throw Error(ErrorCode::kInvalidConfig, "ten_digit must be a digit");
  }
}

const CheckDigitScheme& default_scheme() {
  static const CheckDigitScheme scheme{
      "mod11-765432", {7, 6, 5, 4, 3, 2}, 11, 0, true};
  return scheme;
}

int raw_check_value(std::string_view serial, const CheckDigitScheme& scheme) {
  if (serial.size() != scheme.weights.size() ||
      !all_of_class(serial, GlyphClass::kDigit)) {
    throw Error(ErrorCode::kInvalidArgument,
                "serial must be exactly 6 digits: '" + std::string(serial) + "'");
  }
  int sum = 0;
  for (std::size_t i = 0; i < serial.size(); ++i) {
    sum += scheme.weights[i] * (serial[i] - '0');
  }
  return (scheme.modulus - sum % scheme.modulus) % scheme.modulus;
}

int compute_check_digit(std::string_view serial, const CheckDigitScheme& scheme) {
  const int value = raw_check_value(serial, scheme);
  return value == 10 ? scheme.ten_digit : value;
}

Validation validate(const RollingStockId& id, const CheckDigitScheme& scheme) {
  if (id.kind == StockKind::kLocomotive) return {};
  const int value = raw_check_value(id.serial, scheme);
  const int expected = value == 10 ? scheme.ten_digit : value;
  if (id.check - '0' != expected) {
    return {false, ValidationFailure::kCheckDigitMismatch};
  }
  if (value == 10 && scheme.ten_unissuable) {
    return {false, ValidationFailure::kUnissuableSerial};
  }
  return {};
}

std::string RawReading::text() const {
  std::string out;
  out.reserve(chars.size());
  for (const auto& c : chars) out.push_back(c.glyph);
  return out;
}

std::vector<GlyphClass> slot_classes(std::size_t n) {
  std::vector<GlyphClass> classes(n, GlyphClass::kDigit);
  if (n <= 4) return classes;
  for (std::size_t i = 0; i < n && i < 3; ++i) classes[i] = GlyphClass::kLetter;
  if (n >= 11) {
    for (std::size_t i = 10; i < n; ++i) classes[i] = GlyphClass::kLetter;
  }
  return classes;
}

RawReading pattern_correct(const RawReading& reading) {
  RawReading out = reading;
  const auto classes = slot_classes(out.chars.size());
  for (std::size_t i = 0; i < out.chars.size(); ++i) {
    ReadingChar& slot = out.chars[i];
    const GlyphClass cls = classes[i];
    slot.admissible = true;
    if (in_class(slot.glyph, cls)) continue;

    std::optional<char> fixed;
    if (is_glyph(slot.glyph)) {
      fixed = cls == GlyphClass::kDigit ? letter_to_digit(slot.glyph)
                                        : digit_to_letter(slot.glyph);
    }
    if (!fixed) {
      auto alt = std::find_if(slot.alternatives.begin(), slot.alternatives.end(),
                              [cls](char c) { return in_class(c, cls); });
      if (alt != slot.alternatives.end()) fixed = *alt;
    }
    if (fixed) {
      slot.glyph = *fixed;
    } else {
      slot.admissible = false;
    }
  }
  return out;
}

GrammarSet classify_length(std::size_t n) {
  GrammarSet set;
  set.wagon = n == 10 || n == 11;
  set.locomotive = n == 3 || n == 4;
  return set;
}

}  // namespace wagonline
