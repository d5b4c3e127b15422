#pragma once

#include <cstddef>
#include <exception>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "helmetcv/dataset.hpp"
#include "helmetcv/detector.hpp"
#include "helmetcv/geometry.hpp"
#include "helmetcv/seat.hpp"

namespace helmetcv {

struct CascadeConfig {
  ImageSize frame_size = kFrameSize;
  ImageSize model_input_size = kModelInputSize;
  Margins expansion_margins = kRiderMargins;
  double motorcycle_threshold = 0.3;
  double person_threshold = 0.3;
  double helmet_threshold = 0.3;
  double person_dedup_iou = 0.9;
  /// Person crops narrower or shorter than this skip the helmet and seat stages.
  int min_crop_px = 2;

  /// Same threshold for every stage, as used by threshold sweeps.
  CascadeConfig with_threshold(double t) const;
  void validate() const;
};

struct RiderRecord {
  std::size_t motorcycle_index = 0;
  Box person_box;  // frame coordinates
  double person_score = 0.0;
  bool helmet = false;
  std::optional<SeatRole> seat_role;
  /// Set whenever seat_role is known.
  std::optional<ObjectClass> composite_class;
};

struct CascadeOutput {
  ImageKey frame;
  std::vector<ScoredDetection> motorcycles;  // frame coordinates
  /// Rider search region per motorcycle, same order as `motorcycles`.
  std::vector<Box> search_regions;
  std::vector<RiderRecord> riders;
  /// Non-fatal events: skipped tiny crops, failed seat classifications.
  std::vector<std::string> notes;
};

enum class CascadeStage { Motorcycle, Person, Helmet };
std::string_view to_string(CascadeStage stage);

/// A backend failure inside one cascade stage. The original exception is kept in cause().
class CascadeStageError : public std::runtime_error {
 public:
  CascadeStageError(CascadeStage stage, const std::string& where, std::exception_ptr cause);

  CascadeStage stage() const noexcept { return stage_; }
  std::exception_ptr cause() const noexcept { return cause_; }
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  CascadeStage stage_;
  std::exception_ptr cause_;
};

/// Inverse of class_decompose on person classes. Throws DomainError when the role is unknown.
ObjectClass assemble_class(std::optional<SeatRole> seat_role, bool helmet);

/// Among groups of person boxes with pairwise IoU >= dedup_iou keeps only the best
/// scored record (ties: lowest motorcycle_index). Survivors keep their input order.
std::vector<RiderRecord> dedup_persons(std::vector<RiderRecord> riders, double dedup_iou);

/// Runs the full cascade on one frame: motorcycles on the resized frame, persons inside each
/// expanded motorcycle crop, then a helmet check and a seat role per person crop.
CascadeOutput run_frame(const ImageKey& frame, Detector& backend, SeatClassifier& seats,
                        const CascadeConfig& cfg);

/// Stages 1 and 2 only; riders carry no helmet or seat information.
CascadeOutput detect_riders(const ImageKey& frame, Detector& backend, const CascadeConfig& cfg);

/// Stage 1 only, in frame coordinates.
std::vector<ScoredDetection> detect_motorcycles(const ImageKey& frame, Detector& backend,
                                                const CascadeConfig& cfg);

/// Helmet status per ground-truth person box: true iff the helmet prompt finds anything
/// in the box's crop at `threshold`.
std::vector<bool> classify_helmet_on_gt(const ImageKey& frame, std::span<const Box> person_boxes,
                                        Detector& backend, double threshold,
                                        ImageSize frame_size = kFrameSize, int min_crop_px = 2);

/// One row of the cascade output CSV. Class 0 marks a rider whose seat role is unknown.
struct LabeledDetection {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

struct FrameDetections {
  std::string video_id;
  int frame_index = 0;
  std::vector<LabeledDetection> detections;
};

/// `video_id,frame,bb_left,bb_top,bb_width,bb_height,class,score` rows.
void write_cascade_csv(std::ostream& out, std::span<const CascadeOutput> outputs);
std::vector<FrameDetections> parse_detection_csv(std::istream& in);
std::vector<FrameDetections> load_detection_csv(const std::string& path);

}  // namespace helmetcv
