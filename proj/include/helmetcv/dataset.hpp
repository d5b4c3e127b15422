#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "helmetcv/geometry.hpp"

namespace helmetcv {

enum class Role { Motorcycle, Driver, Passenger1, Passenger2, Child };

/// The four person seat roles, in class-table order.
enum class SeatRole { Driver = 0, Passenger1 = 1, Passenger2 = 2, Child = 3 };
inline constexpr std::size_t kSeatRoleCount = 4;
inline constexpr std::array<SeatRole, kSeatRoleCount> kSeatRoles{
    SeatRole::Driver, SeatRole::Passenger1, SeatRole::Passenger2, SeatRole::Child};

enum class HelmetStatus { Helmet, NoHelmet, NotApplicable };

std::string_view to_string(Role role);
std::string_view to_string(SeatRole role);
std::string_view to_string(HelmetStatus helmet);

/// Lower-case wire names: driver, passenger1, passenger2, child.
std::string_view wire_name(SeatRole role);
std::optional<SeatRole> seat_role_from_name(std::string_view name);

Role to_role(SeatRole role);

/// One of the nine annotation classes.
///
///   1      motorcycle
///   2, 3   driver with / without helmet
///   4, 5   first passenger with / without helmet
///   6, 7   second passenger with / without helmet
///   8, 9   child in front of the driver with / without helmet
///
/// Even person ids are helmeted; this is the only place that rule is encoded.
class ObjectClass {
 public:
  static constexpr int kMotorcycleId = 1;
  static constexpr int kMinId = 1;
  static constexpr int kMaxId = 9;

  /// Throws DomainError for ids outside 1-9.
  explicit ObjectClass(int id);

  static ObjectClass motorcycle() { return ObjectClass(kMotorcycleId); }

  int id() const noexcept { return id_; }
  Role role() const noexcept;
  HelmetStatus helmet() const noexcept;
  bool is_person() const noexcept { return id_ != kMotorcycleId; }
  std::optional<SeatRole> seat_role() const noexcept;

  friend bool operator==(const ObjectClass&, const ObjectClass&) = default;

 private:
  int id_;
};

struct ClassParts {
  Role role;
  HelmetStatus helmet;
  friend bool operator==(const ClassParts&, const ClassParts&) = default;
};

/// Splits a class id into seat role and helmet status. Throws DomainError outside 1-9.
ClassParts class_decompose(int id);

struct GTObject {
  Box box;
  ObjectClass cls;
};

struct FrameAnnotation {
  std::string video_id;
  int frame_index = 0;
  std::vector<GTObject> objects;

  std::string key() const;
};

/// Parsed ground truth: frames in order of first appearance.
using AnnotationSet = std::vector<FrameAnnotation>;

struct ParseOptions {
  ImageSize frame_size = kFrameSize;
  /// Frames per video at 10 Hz over 20 s.
  int max_frames_per_video = 200;
};

/// Reads `video_id,frame,bb_left,bb_top,bb_width,bb_height,class` lines.
///
/// Boxes that leave the frame are clamped and reported through `warnings`;
/// frame indices beyond the expected clip length are only warned about.
AnnotationSet parse_annotations(std::istream& in, std::vector<std::string>* warnings = nullptr,
                                const ParseOptions& options = {});
AnnotationSet load_annotations(const std::string& path,
                               std::vector<std::string>* warnings = nullptr,
                               const ParseOptions& options = {});

/// Writes annotations back in the ground-truth CSV layout, without comments.
void write_annotations(std::ostream& out, const AnnotationSet& annotations);

/// Formats a coordinate with the shortest representation that round-trips.
std::string format_number(double value);

struct ClassStats {
  std::array<long long, kSeatRoleCount> role_counts{};
  long long helmeted = 0;
  long long unhelmeted = 0;
  long long motorcycles = 0;

  long long count(SeatRole role) const { return role_counts[static_cast<std::size_t>(role)]; }
  long long total_people() const;

  ClassStats& operator+=(const ClassStats& other);
  friend ClassStats operator+(ClassStats a, const ClassStats& b) { return a += b; }
  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

ClassStats compute_class_stats(const AnnotationSet& annotations);

/// Per-role loss weights, indexed by SeatRole.
using RoleWeights = std::array<double, kSeatRoleCount>;

/// Weights the seat classifier ended up training with (driver, passenger1, passenger2, child).
inline constexpr RoleWeights kManualSeatWeights{1.0, 10.0, 800.0, 3000.0};

/// total_people / count per role. Throws DomainError when any role has no samples.
RoleWeights inverse_class_weights(const ClassStats& stats);

/// Returns `override_weights` verbatim when given, otherwise the inverse class weights.
RoleWeights class_weights(const ClassStats& stats, const std::optional<RoleWeights>& override_weights);

}  // namespace helmetcv
