#pragma once

// Fusing the two camera views of one passage (one camera on each side of
// the track). Both sides see the vehicles in the same order, so equal
// counts pair by index; otherwise a global alignment repairs the drift.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wagonline/mosaic_report.hpp"

namespace wagonline {

enum class Provenance { kLeftOnly, kRightOnly, kAgree, kConflictResolved, kBothRejected };

std::string to_string(Provenance p);

struct AlignedPair {
  std::optional<std::size_t> left;   // index into the left wagons
  std::optional<std::size_t> right;

  bool operator==(const AlignedPair&) const = default;
};

struct AlignOptions {
  double gap_penalty = 0.4;
  double max_count_drift = 0.05;  // of the larger count
};

// 1 - edit distance / longer length over the glyphs of two accepted codes;
// 0 when either side has no accepted code.
double code_similarity(const WagonRecord& a, const WagonRecord& b);

// Maximum-score monotone alignment (matches score their similarity, gaps
// cost gap_penalty). Ties prefer a match, then a gap on the right.
std::vector<AlignedPair> align_records(std::span<const WagonRecord> left,
                                       std::span<const WagonRecord> right,
                                       double gap_penalty = 0.4);

double alignment_score(std::span<const WagonRecord> left, std::span<const WagonRecord> right,
                       const std::vector<AlignedPair>& pairs, double gap_penalty = 0.4);

// Identity pairing for equal counts, align_records otherwise. Throws
// Error(kCountMismatchTooLarge) when the counts differ by more than
// max_count_drift of the larger one.
std::vector<AlignedPair> align(const TrainSummary& left, const TrainSummary& right,
                               const AlignOptions& options = {});

struct FusedWagon {
  int position = 0;
  std::optional<WagonRecord> left;
  std::optional<WagonRecord> right;
  WagonRecord merged;
  Provenance provenance = Provenance::kBothRejected;
  bool conflict = false;
};

struct FusedTrain {
  std::vector<FusedWagon> wagons;

  int unresolved() const;
  int conflicts() const;
};

// Accepted beats rejected; two different accepted codes resolve to the
// higher mean slot confidence and are flagged for review.
FusedTrain merge(const TrainSummary& left, const TrainSummary& right,
                 const std::vector<AlignedPair>& pairs);

// The fused train as a summary: camera "<left>+<right>", fusion notes
// attached, merged records renumbered 1..N.
TrainSummary fused_summary(const FusedTrain& fused, const TrainSummary& left,
                           const TrainSummary& right);

}  // namespace wagonline
