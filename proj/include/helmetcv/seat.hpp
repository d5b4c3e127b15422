#pragma once

#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "helmetcv/dataset.hpp"
#include "helmetcv/detector.hpp"

namespace helmetcv {

/// Four-way seat role classifier over person crops. nullopt means "could not classify".
class SeatClassifier {
 public:
  virtual ~SeatClassifier() = default;
  virtual std::optional<SeatRole> classify(const ImageKey& person_crop) = 0;
  virtual std::string describe() const = 0;
};

/// Never classifies; riders stay unclassified.
class NullSeatClassifier final : public SeatClassifier {
 public:
  std::optional<SeatRole> classify(const ImageKey&) override { return std::nullopt; }
  std::string describe() const override { return "none"; }
};

class FixedSeatClassifier final : public SeatClassifier {
 public:
  explicit FixedSeatClassifier(SeatRole role) : role_(role) {}
  std::optional<SeatRole> classify(const ImageKey&) override { return role_; }
  std::string describe() const override;

 private:
  SeatRole role_;
};

/// Answers from a table of crop key -> role. Lines look like
/// `{"image_key":"001/5@10,20,30,40","role":"driver"}`; unknown keys are unclassified.
class MappedSeatClassifier final : public SeatClassifier {
 public:
  MappedSeatClassifier() = default;
  explicit MappedSeatClassifier(std::map<std::string, SeatRole> table) : table_(std::move(table)) {}

  static MappedSeatClassifier load(std::istream& in);
  static MappedSeatClassifier load_file(const std::string& path);
  void serialize(std::ostream& out) const;

  std::optional<SeatRole> classify(const ImageKey& person_crop) override;
  std::string describe() const override;

  const std::map<std::string, SeatRole>& table() const { return table_; }

 private:
  std::map<std::string, SeatRole> table_;
};

/// Oracle classifier: the role of the ground-truth person best overlapping the crop
/// (IoU >= min_iou), otherwise unclassified.
class GroundTruthSeatClassifier final : public SeatClassifier {
 public:
  explicit GroundTruthSeatClassifier(const AnnotationSet& gt, double min_iou = 0.5);

  std::optional<SeatRole> classify(const ImageKey& person_crop) override;
  std::string describe() const override { return "ground-truth"; }

 private:
  std::map<std::pair<std::string, int>, std::vector<GTObject>> persons_;
  double min_iou_;
};

/// Forwards to another classifier and remembers every answered crop.
class RecordingSeatClassifier final : public SeatClassifier {
 public:
  explicit RecordingSeatClassifier(SeatClassifier& inner) : inner_(inner) {}

  std::optional<SeatRole> classify(const ImageKey& person_crop) override;
  std::string describe() const override { return "recording(" + inner_.describe() + ")"; }

  MappedSeatClassifier snapshot() const;

 private:
  SeatClassifier& inner_;
  mutable std::mutex mu_;
  std::map<std::string, SeatRole> table_;
};

}  // namespace helmetcv
