#include "helmetcv/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "helmetcv/errors.hpp"

namespace helmetcv {

MatchResult match_detections(std::span<const ScoredDetection> detections,
                             std::span<const Box> ground_truth, double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  MatchResult result;
  std::vector<bool> taken(ground_truth.size(), false);
  for (std::size_t d : order) {
    std::optional<std::size_t> best;
    double best_iou = iou_threshold;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(detections[d].box, ground_truth[g]);
      if (v >= best_iou && (!best || v > best_iou)) {
        best = g;
        best_iou = v;
      }
    }
    if (best) {
      taken[*best] = true;
      result.matched_pairs.push_back({d, *best, best_iou});
    }
  }

  const auto tp = static_cast<long long>(result.matched_pairs.size());
  result.counts = {tp, static_cast<long long>(detections.size()) - tp,
                   static_cast<long long>(ground_truth.size()) - tp};
  return result;
}

PRPoint precision_recall(long long tp, long long fp, long long fn, double threshold) {
  PRPoint p;
  p.threshold = threshold;
  if (tp + fp > 0) p.precision = double(tp) / double(tp + fp);
  if (tp + fn > 0) p.recall = double(tp) / double(tp + fn);
  return p;
}

double average_precision(std::span<const PRPoint> points, std::size_t* skipped) {
  std::vector<std::pair<double, double>> curve;  // (recall, precision)
  for (const auto& p : points) {
    if (p.defined()) curve.emplace_back(*p.recall, *p.precision);
  }
  if (skipped) *skipped = points.size() - curve.size();
  if (curve.empty()) throw DomainError("average precision: no points with defined precision and recall");

  std::stable_sort(curve.begin(), curve.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    area += (curve[i + 1].first - curve[i].first) * (curve[i].second + curve[i + 1].second) / 2.0;
  }
  return area;
}

PRPoint naive_helmet_baseline(const ClassStats& stats) {
  if (stats.total_people() <= 0) throw DomainError("naive baseline needs at least one person");
  // Every person predicted helmeted: tp = helmeted, fp = unhelmeted, fn = 0.
  return precision_recall(stats.helmeted, stats.unhelmeted, 0);
}

MatchCounts binary_counts(const std::vector<bool>& predicted, const std::vector<bool>& actual) {
  if (predicted.size() != actual.size()) {
    throw UsageError(fmt::format("binary classification: {} predictions for {} labels",
                                 predicted.size(), actual.size()));
  }
  MatchCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] && actual[i]) ++c.tp;
    else if (predicted[i]) ++c.fp;
    else if (actual[i]) ++c.fn;
  }
  return c;
}

PRPoint binary_classification_pr(const std::vector<bool>& predicted, const std::vector<bool>& actual,
                                 double threshold) {
  return precision_recall(binary_counts(predicted, actual), threshold);
}

void ConfusionMatrix4::accumulate(SeatRole actual, SeatRole predicted) {
  ++cells_[static_cast<std::size_t>(actual)][static_cast<std::size_t>(predicted)];
}

long long ConfusionMatrix4::at(SeatRole actual, SeatRole predicted) const {
  return cells_[static_cast<std::size_t>(actual)][static_cast<std::size_t>(predicted)];
}

long long ConfusionMatrix4::total() const {
  long long sum = 0;
  for (const auto& row : cells_) sum += std::accumulate(row.begin(), row.end(), 0LL);
  return sum;
}

long long ConfusionMatrix4::trace() const {
  long long sum = 0;
  for (std::size_t i = 0; i < kSeatRoleCount; ++i) sum += cells_[i][i];
  return sum;
}

std::optional<double> ConfusionMatrix4::accuracy() const {
  const long long n = total();
  if (n == 0) return std::nullopt;
  return double(trace()) / double(n);
}

}  // namespace helmetcv
