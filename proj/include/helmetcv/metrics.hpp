#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "helmetcv/dataset.hpp"
#include "helmetcv/detector.hpp"
#include "helmetcv/geometry.hpp"

namespace helmetcv {

inline constexpr double kDefaultIouThreshold = 0.5;

struct MatchedPair {
  std::size_t detection = 0;
  std::size_t ground_truth = 0;
  double iou = 0.0;
  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct MatchCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend MatchCounts operator+(MatchCounts a, const MatchCounts& b) { return a += b; }
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

struct MatchResult {
  MatchCounts counts;
  std::vector<MatchedPair> matched_pairs;
};

/// Greedy matching: detections in descending score (ties by input order) each take the
/// unmatched ground truth with the highest IoU, if that IoU >= iou_threshold.
MatchResult match_detections(std::span<const ScoredDetection> detections,
                             std::span<const Box> ground_truth,
                             double iou_threshold = kDefaultIouThreshold);

/// Precision and recall; a ratio with a zero denominator is nullopt, never 0.
struct PRPoint {
  double threshold = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;

  bool defined() const { return precision.has_value() && recall.has_value(); }
  friend bool operator==(const PRPoint&, const PRPoint&) = default;
};

PRPoint precision_recall(long long tp, long long fp, long long fn, double threshold = 0.0);
inline PRPoint precision_recall(const MatchCounts& c, double threshold = 0.0) {
  return precision_recall(c.tp, c.fp, c.fn, threshold);
}

/// Trapezoidal area under the measured precision-recall points.
///
/// Points are sorted by recall (stable); no anchoring at recall 0 or 1 and no precision
/// envelope. Undefined points are skipped and counted into `skipped` when given.
/// Throws DomainError when no point is defined.
double average_precision(std::span<const PRPoint> points, std::size_t* skipped = nullptr);

/// Always-predict-helmeted classifier scored against the class statistics.
PRPoint naive_helmet_baseline(const ClassStats& stats);

/// Positive class is "true". Throws UsageError when the sequences differ in length.
MatchCounts binary_counts(const std::vector<bool>& predicted, const std::vector<bool>& actual);
PRPoint binary_classification_pr(const std::vector<bool>& predicted, const std::vector<bool>& actual,
                                 double threshold = 0.0);

/// Rows are ground-truth seat roles, columns predicted seat roles.
class ConfusionMatrix4 {
 public:
  void accumulate(SeatRole actual, SeatRole predicted);
  long long at(SeatRole actual, SeatRole predicted) const;
  long long total() const;
  long long trace() const;
  /// trace / total; nullopt for an empty matrix.
  std::optional<double> accuracy() const;

  friend bool operator==(const ConfusionMatrix4&, const ConfusionMatrix4&) = default;

 private:
  std::array<std::array<long long, kSeatRoleCount>, kSeatRoleCount> cells_{};
};

}  // namespace helmetcv
