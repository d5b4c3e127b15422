#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "helmetcv/dataset.hpp"
#include "helmetcv/geometry.hpp"

namespace helmetcv {

inline constexpr std::string_view kMotorcyclePrompt = "motorcycle";
inline constexpr std::string_view kPersonPrompt = "person";
inline constexpr std::string_view kHelmetPrompt = "helmet";

/// Names one image a backend can look at: a whole frame, or an integer crop of it.
///
/// Textual form is `<video_id>/<frame>` or `<video_id>/<frame>@<x>,<y>,<w>,<h>`.
struct ImageKey {
  std::string video_id;
  int frame_index = 0;
  std::optional<PixelRect> crop;

  std::string str() const;
  static ImageKey parse(std::string_view text);
  ImageKey frame_key() const { return {video_id, frame_index, std::nullopt}; }
  ImageKey with_crop(const PixelRect& rect) const { return {video_id, frame_index, rect}; }

  friend bool operator==(const ImageKey&, const ImageKey&) = default;
};

struct DetectionRequest {
  ImageKey image;
  std::string prompt;
  double threshold = 0.0;
  /// Whole-frame requests may ask the backend to run at a fixed model input resolution;
  /// boxes then come back in that resolution.
  std::optional<ImageSize> resize_to;

  /// Space the returned boxes live in.
  CoordSpace result_space() const;
  /// Throws UsageError on an out-of-range threshold or empty prompt.
  void validate() const;
};

struct ScoredDetection {
  Box box;
  double score = 0.0;
  std::string prompt;
};

/// Drops detections under `threshold` and orders the rest by descending score, stable on ties.
void filter_and_sort(std::vector<ScoredDetection>& detections, double threshold);

/// Prompted detector contract. Implementations must be safe for concurrent detect() calls.
///
/// Every returned score is >= request.threshold, boxes are in request.result_space(),
/// and results are ordered by descending score with ties in insertion order.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<ScoredDetection> detect(const DetectionRequest& request) = 0;
  virtual std::string describe() const = 0;
};

struct ReplayDetection {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double score = 0.0;
};

struct ReplayRecord {
  std::string image_key;
  std::string prompt;
  std::vector<ReplayDetection> detections;
};

/// Serves recorded detections. A (key, prompt) pair with no record is a miss: an empty
/// result, counted in misses().
class ReplayDetector final : public Detector {
 public:
  ReplayDetector() = default;
  explicit ReplayDetector(std::vector<ReplayRecord> records);
  ReplayDetector(ReplayDetector&& other) noexcept
      : records_(std::move(other.records_)), index_(std::move(other.index_)), misses_(other.misses_.load()) {}

  /// One JSON record per line. Throws ParseError with the offending line number.
  static ReplayDetector load(std::istream& in);
  static ReplayDetector load_file(const std::string& path);

  /// Canonical form: fixed key order, shortest round-trip coordinates, scores with 6 decimals.
  void serialize(std::ostream& out) const;

  std::vector<ScoredDetection> detect(const DetectionRequest& request) override;
  std::string describe() const override;

  const std::vector<ReplayRecord>& records() const { return records_; }
  std::uint64_t misses() const { return misses_.load(); }

 private:
  std::vector<ReplayRecord> records_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
  std::atomic<std::uint64_t> misses_{0};
};

void write_replay_record(std::ostream& out, const ReplayRecord& record);

struct ScoreRange {
  double min = 1.0;
  double max = 1.0;
};

struct NoiseConfig {
  /// Probability that a ground-truth object is omitted.
  double drop_rate = 0.0;
  /// Expected number of false boxes per requested image.
  double spurious_rate = 0.0;
  /// Standard deviation of the Gaussian added to each box edge, in pixels.
  double jitter_sigma = 0.0;
  ScoreRange tp_score{1.0, 1.0};
  ScoreRange fp_score{0.0, 1.0};
  std::uint64_t seed = 0;

  void validate() const;
  static NoiseConfig from_json_text(std::string_view text);
  static NoiseConfig load_file(const std::string& path);
};

/// Ground-truth classes a prompt stands for in the synthetic backend.
enum class ClassFilter { None, Motorcycle, Person, Helmet };
ClassFilter class_filter_for(std::string_view prompt);

/// Noisy detections for one frame, in frame coordinates, restricted to `region` (frame
/// coordinates). Objects need at least half their area inside the region and are clipped
/// to it. Spurious boxes are uniform in position and log-uniform in size between 8 px and
/// half the region. Deterministic in (cfg.seed, stream).
std::vector<ScoredDetection> synthetic_generate(const FrameAnnotation& gt, const NoiseConfig& cfg,
                                                ClassFilter filter, const Box& region,
                                                std::string_view stream, std::string_view prompt);

/// Detector that perturbs ground truth according to a NoiseConfig.
class SyntheticDetector final : public Detector {
 public:
  SyntheticDetector(AnnotationSet ground_truth, NoiseConfig cfg, ImageSize frame_size = kFrameSize);

  std::vector<ScoredDetection> detect(const DetectionRequest& request) override;
  std::string describe() const override;

 private:
  const FrameAnnotation& frame(const ImageKey& key) const;

  AnnotationSet gt_;
  NoiseConfig cfg_;
  ImageSize frame_size_;
  std::map<std::pair<std::string, int>, std::size_t> index_;
};

/// Forwards to another detector and records every answer as a replay record.
///
/// Record at threshold 0 to capture a file that later answers any threshold.
class RecordingDetector final : public Detector {
 public:
  explicit RecordingDetector(Detector& inner) : inner_(inner) {}

  std::vector<ScoredDetection> detect(const DetectionRequest& request) override;
  std::string describe() const override { return "recording(" + inner_.describe() + ")"; }

  /// Records sorted by image key then prompt, so output does not depend on call order.
  std::vector<ReplayRecord> records() const;

 private:
  Detector& inner_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, ReplayRecord> records_;
};

}  // namespace helmetcv
