#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmetcv/cascade.hpp"
#include "helmetcv/dataset.hpp"
#include "helmetcv/detector.hpp"
#include "helmetcv/metrics.hpp"
#include "helmetcv/seat.hpp"

namespace helmetcv {

enum class SweepTask { MotorcycleDetection, PersonDetection, HelmetOnGroundTruth, CascadeFull };

std::string_view to_string(SweepTask task);
/// Accepts the full names and the short forms motorcycle, person, helmet, cascade.
std::optional<SweepTask> sweep_task_from_name(std::string_view name);

struct SweepConfig {
  SweepTask task = SweepTask::MotorcycleDetection;
  std::vector<double> thresholds;
  double iou_threshold = kDefaultIouThreshold;
  /// Backend description echoed into the manifest.
  std::string backend;
  /// Digest of the ground truth and detection inputs, echoed into the manifest.
  std::string input_digest;
  /// Where per-video checkpoints go; empty disables checkpointing.
  std::filesystem::path checkpoint_dir;
  std::size_t jobs = 1;
  /// Stage settings other than thresholds, which the sweep overrides.
  CascadeConfig cascade;

  /// Throws UsageError unless thresholds are strictly increasing within [0,1].
  void validate() const;
};

struct SweepRow {
  PRPoint point;
  MatchCounts counts;
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepTable {
  std::string task;
  std::vector<SweepRow> rows;
  /// nullopt when no row has defined precision and recall.
  std::optional<double> ap;
  nlohmann::json manifest = nlohmann::json::object();

  std::vector<PRPoint> points() const;
  /// Recomputes `ap` from the rows.
  void update_ap();

  nlohmann::json to_json() const;
  static SweepTable from_json(const nlohmann::json& j);
};

/// A sweep stopped by a backend failure. `partial()` holds the rows finished before it.
class SweepAborted : public std::runtime_error {
 public:
  SweepAborted(const std::string& what, SweepTable partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const SweepTable& partial() const { return partial_; }

 private:
  SweepTable partial_;
};

/// Counts for one task at one threshold over a set of frames.
MatchCounts evaluate_frames(SweepTask task, std::span<const FrameAnnotation> frames, double threshold,
                            Detector& backend, SeatClassifier& seats, const SweepConfig& cfg);

/// Runs the task at every threshold, summing counts over all frames before computing one
/// precision/recall point per threshold. `seats` is only consulted by the full cascade task.
SweepTable run_sweep(const SweepConfig& cfg, const AnnotationSet& annotations, Detector& backend,
                     SeatClassifier* seats = nullptr);

/// Matches labeled detections against ground truth, frame by frame. Detections below
/// `score_threshold` are ignored. Class-aware unless `class_agnostic`; class 0 rows match nothing.
MatchCounts evaluate_detections(const AnnotationSet& gt, std::span<const FrameDetections> detections,
                                double score_threshold, double iou_threshold, bool class_agnostic);

/// `threshold,precision,recall` with 4 decimals, `undefined` for missing ratios, then
/// `# ap=<6 decimals>`. Returns bytes written; throws std::runtime_error if the sink fails.
std::size_t emit_pr_csv(const SweepTable& table, std::ostream& sink);

/// Standalone SVG precision-recall plot. Throws DomainError without a defined point.
std::size_t emit_pr_svg(const SweepTable& table, std::ostream& sink);

/// Reads back the rows of an emitted PR CSV.
std::vector<PRPoint> parse_pr_csv(std::istream& in);

/// "start:stop:step" (stop inclusive within 1e-9) or a comma separated list.
std::vector<double> parse_threshold_list(std::string_view text);

std::string utc_timestamp();

}  // namespace helmetcv
