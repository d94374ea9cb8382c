#pragma once

// Wagon and locomotive identification codes.
//
// Wagon codes are three letters, a six-digit serial and a check digit,
// optionally followed by a region letter: "HFE-094063-1", "FHD-643258-1L".
// Locomotives carry a bare three or four digit number: "672", "8330".

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wagonline {

enum class StockKind { kWagon, kLocomotive };

struct RollingStockId {
  StockKind kind = StockKind::kWagon;
  std::string letters;           // wagon only, 3 x A-Z
  std::string serial;            // wagon only, 6 x 0-9
  char check = '0';              // wagon only
  std::optional<char> region;    // wagon only
  std::string loco_digits;       // locomotive only, 3 or 4 digits

  static RollingStockId wagon(std::string letters, std::string serial,
                              char check, std::optional<char> region = {});
  static RollingStockId locomotive(std::string digits);

  // Canonical text: "LLL-DDDDDD-C", "LLL-DDDDDD-CR", "DDD" or "DDDD".
  std::string text() const;
  // Canonical text without separators, i.e. the glyph sequence as painted.
  std::string glyphs() const;

  bool operator==(const RollingStockId&) const = default;
};

// Parses a code, normalising case and dropping '-' and ' ' separators.
// Throws Error(kInvalidPattern) when the text fits neither grammar.
RollingStockId parse_code(std::string_view text);

// Weighted modulo-11 scheme. The computed value is (11 - sum mod 11) mod 11;
// a computed value of 10 is written as `ten_digit`.
struct CheckDigitScheme {
  std::string name;
  std::array<int, 6> weights{};
  int modulus = 11;
  int ten_digit = 0;
  // When set, serials whose computed value is 10 are unissuable and never
  // validate. Without this rule 10 and 0 share a digit and some single-digit
  // substitutions go undetected.
  bool ten_unissuable = true;

  // Throws Error(kInvalidConfig) unless weights are pairwise distinct and
  // each lies in 2..10.
  void check_well_formed() const;
};

const CheckDigitScheme& default_scheme();

// Value before the 10 -> digit mapping, in 0..10.
int raw_check_value(std::string_view serial, const CheckDigitScheme& scheme);
// Throws Error(kInvalidArgument) unless `serial` is exactly six digits.
int compute_check_digit(std::string_view serial,
                        const CheckDigitScheme& scheme = default_scheme());

enum class ValidationFailure { kCheckDigitMismatch, kUnissuableSerial };

struct Validation {
  bool valid = true;
  std::optional<ValidationFailure> reason;
};

Validation validate(const RollingStockId& id,
                    const CheckDigitScheme& scheme = default_scheme());

struct ReadingChar {
  char glyph = '?';
  double confidence = 0.0;
  std::vector<char> alternatives;  // ranked, best first
  bool admissible = true;

  bool operator==(const ReadingChar&) const = default;
};

// The per-character prediction for one track, in reading order.
struct RawReading {
  std::vector<ReadingChar> chars;
  std::int64_t source_track = -1;

  std::string text() const;
  bool operator==(const RawReading&) const = default;
};

enum class GlyphClass { kLetter, kDigit };

// Expected class for each slot of a reading of length n. Readings of up to
// four glyphs are treated as locomotive numbers, longer ones as wagon codes.
std::vector<GlyphClass> slot_classes(std::size_t n);

// Coerces every slot to its positional class through the confusion table
// (O/0, I/1, Z/2, S/5, B/8, G/6, Q->0, T/7), falling back to the best
// ranked alternative of the right class. Slots with no admissible glyph keep
// their glyph and get admissible = false. Idempotent.
RawReading pattern_correct(const RawReading& reading);

struct GrammarSet {
  bool wagon = false;
  bool locomotive = false;

  bool empty() const { return !wagon && !locomotive; }
  bool operator==(const GrammarSet&) const = default;
};

GrammarSet classify_length(std::size_t n);

bool is_glyph(char c);
bool is_letter(char c);
bool is_digit(char c);

}  // namespace wagonline
