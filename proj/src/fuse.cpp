#include "wagonline/fuse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "wagonline/error.hpp"

namespace wagonline {
namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

int status_rank(WagonStatus s) {
  switch (s) {
    case WagonStatus::kAccepted: return 3;
    case WagonStatus::kAcceptedDamaged: return 2;
    case WagonStatus::kRejected: return 1;
    case WagonStatus::kNotLocated: return 0;
  }
  return 0;
}

// Order-independent choice between two records: higher confidence, then
// the smaller code or reading text, then the left one.
const WagonRecord& pick(const WagonRecord& a, const WagonRecord& b) {
  const double ca = a.mean_confidence();
  const double cb = b.mean_confidence();
  if (ca != cb) return ca > cb ? a : b;
  const std::string ta = a.code ? a.code->text() : a.reading;
  const std::string tb = b.code ? b.code->text() : b.reading;
  if (ta != tb) return ta < tb ? a : b;
  return a;
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kLeftOnly: return "left_only";
    case Provenance::kRightOnly: return "right_only";
    case Provenance::kAgree: return "agree";
    case Provenance::kConflictResolved: return "conflict_resolved";
    case Provenance::kBothRejected: return "both_rejected";
  }
  return "both_rejected";
}

double code_similarity(const WagonRecord& a, const WagonRecord& b) {
  if (!is_accepted(a.status) || !is_accepted(b.status) || !a.code || !b.code) return 0.0;
  const std::string ga = a.code->glyphs();
  const std::string gb = b.code->glyphs();
  const std::size_t longest = std::max(ga.size(), gb.size());
  if (longest == 0) return 0.0;
  return 1.0 - static_cast<double>(edit_distance(ga, gb)) / static_cast<double>(longest);
}

std::vector<AlignedPair> align_records(std::span<const WagonRecord> left,
                                       std::span<const WagonRecord> right, double gap_penalty) {
  const std::size_t n = left.size();
  const std::size_t m = right.size();
  // score[i][j]: best alignment of left[0..i) with right[0..j).
  std::vector<std::vector<double>> score(n + 1, std::vector<double>(m + 1, 0.0));
  for (std::size_t i = 1; i <= n; ++i) score[i][0] = -gap_penalty * static_cast<double>(i);
  for (std::size_t j = 1; j <= m; ++j) score[0][j] = -gap_penalty * static_cast<double>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      score[i][j] = std::max({score[i - 1][j - 1] + code_similarity(left[i - 1], right[j - 1]),
                              score[i - 1][j] - gap_penalty, score[i][j - 1] - gap_penalty});
    }
  }
  constexpr double kEps = 1e-9;
  std::vector<AlignedPair> pairs;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        std::abs(score[i][j] - (score[i - 1][j - 1] + code_similarity(left[i - 1], right[j - 1]))) < kEps) {
      pairs.push_back({i - 1, j - 1});
      --i;
      --j;
    } else if (i > 0 && std::abs(score[i][j] - (score[i - 1][j] - gap_penalty)) < kEps) {
      pairs.push_back({i - 1, std::nullopt});
      --i;
    } else {
      pairs.push_back({std::nullopt, j - 1});
      --j;
    }
  }
  std::reverse(pairs.begin(), pairs.end());
  return pairs;
}

double alignment_score(std::span<const WagonRecord> left, std::span<const WagonRecord> right,
                       const std::vector<AlignedPair>& pairs, double gap_penalty) {
  double total = 0;
  for (const auto& p : pairs) {
    if (p.left && p.right) {
      total += code_similarity(left[*p.left], right[*p.right]);
    } else {
      total -= gap_penalty;
    }
  }
  return total;
}

std::vector<AlignedPair> align(const TrainSummary& left, const TrainSummary& right,
                               const AlignOptions& options) {
  const std::size_t n = left.wagons.size();
  const std::size_t m = right.wagons.size();
  if (n == m) {
    std::vector<AlignedPair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pairs.push_back({i, i});
    return pairs;
  }
  const double drift = std::abs(static_cast<double>(n) - static_cast<double>(m));
  if (drift > options.max_count_drift * static_cast<double>(std::max(n, m))) {
    throw Error(ErrorCode::kCountMismatchTooLarge,
                std::to_string(n) + " vs " + std::to_string(m) + " vehicles");
  }
  return align_records(left.wagons, right.wagons, options.gap_penalty);
}

int FusedTrain::unresolved() const {
  return static_cast<int>(std::count_if(wagons.begin(), wagons.end(), [](const FusedWagon& w) {
    return w.provenance == Provenance::kBothRejected;
  }));
}

int FusedTrain::conflicts() const {
  return static_cast<int>(
      std::count_if(wagons.begin(), wagons.end(), [](const FusedWagon& w) { return w.conflict; }));
}

FusedTrain merge(const TrainSummary& left, const TrainSummary& right,
                 const std::vector<AlignedPair>& pairs) {
  FusedTrain fused;
  for (const auto& p : pairs) {
    FusedWagon w;
    w.position = static_cast<int>(fused.wagons.size()) + 1;
    if (p.left) w.left = left.wagons.at(*p.left);
    if (p.right) w.right = right.wagons.at(*p.right);

    if (!w.right) {
      w.merged = *w.left;
      w.provenance = is_accepted(w.left->status) ? Provenance::kLeftOnly : Provenance::kBothRejected;
    } else if (!w.left) {
      w.merged = *w.right;
      w.provenance = is_accepted(w.right->status) ? Provenance::kRightOnly : Provenance::kBothRejected;
    } else {
      const WagonRecord& l = *w.left;
      const WagonRecord& r = *w.right;
      const bool la = is_accepted(l.status);
      const bool ra = is_accepted(r.status);
      if (la && !ra) {
        w.merged = l;
        w.provenance = Provenance::kLeftOnly;
      } else if (!la && ra) {
        w.merged = r;
        w.provenance = Provenance::kRightOnly;
      } else if (la && ra) {
        w.merged = pick(l, r);
        if (*l.code == *r.code) {
          w.provenance = Provenance::kAgree;
          if (status_rank(r.status) > status_rank(w.merged.status)) w.merged.status = r.status;
          if (status_rank(l.status) > status_rank(w.merged.status)) w.merged.status = l.status;
        } else {
          w.provenance = Provenance::kConflictResolved;
          w.conflict = true;
          w.merged.review_flag = true;
        }
      } else {
        w.provenance = Provenance::kBothRejected;
        if (status_rank(l.status) != status_rank(r.status)) {
          w.merged = status_rank(l.status) > status_rank(r.status) ? l : r;
        } else {
          w.merged = pick(l, r);
        }
      }
      w.merged.maintenance_flag = l.maintenance_flag || r.maintenance_flag;
    }
    w.merged.position = w.position;
    fused.wagons.push_back(std::move(w));
  }
  return fused;
}

TrainSummary fused_summary(const FusedTrain& fused, const TrainSummary& left,
                           const TrainSummary& right) {
  std::vector<WagonRecord> records;
  std::vector<FusionNote> notes;
  for (const auto& w : fused.wagons) {
    records.push_back(w.merged);
    notes.push_back({w.position, to_string(w.provenance), w.conflict});
  }
  CameraMeta meta{left.camera + "+" + right.camera, std::min(left.started_ms, right.started_ms),
                  std::max(left.ended_ms, right.ended_ms)};
  TrainSummary s = build_summary(std::move(records), meta);
  s.fusion = std::move(notes);
  return s;
}

}  // namespace wagonline
