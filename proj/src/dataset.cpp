#include "helmetcv/dataset.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <utility>

#include <fmt/format.h>

#include "helmetcv/errors.hpp"
#include "helmetcv/text.hpp"

namespace helmetcv {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Motorcycle: return "Motorcycle";
    case Role::Driver: return "Driver";
    case Role::Passenger1: return "Passenger1";
    case Role::Passenger2: return "Passenger2";
    case Role::Child: return "Child";
  }
  return "?";
}

std::string_view to_string(SeatRole role) { return to_string(to_role(role)); }

std::string_view to_string(HelmetStatus helmet) {
  switch (helmet) {
    case HelmetStatus::Helmet: return "helmet";
    case HelmetStatus::NoHelmet: return "no-helmet";
    case HelmetStatus::NotApplicable: return "n/a";
  }
  return "?";
}

std::string_view wire_name(SeatRole role) {
  switch (role) {
    case SeatRole::Driver: return "driver";
    case SeatRole::Passenger1: return "passenger1";
    case SeatRole::Passenger2: return "passenger2";
    case SeatRole::Child: return "child";
  }
  return "?";
}

std::optional<SeatRole> seat_role_from_name(std::string_view name) {
  for (SeatRole r : kSeatRoles) {
    if (iequals(name, wire_name(r)) || iequals(name, to_string(r))) return r;
  }
  return std::nullopt;
}

Role to_role(SeatRole role) {
  switch (role) {
    case SeatRole::Driver: return Role::Driver;
    case SeatRole::Passenger1: return Role::Passenger1;
    case SeatRole::Passenger2: return Role::Passenger2;
    case SeatRole::Child: return Role::Child;
  }
  return Role::Driver;
}

ObjectClass::ObjectClass(int id) : id_(id) {
  if (id < kMinId || id > kMaxId) {
    throw DomainError(fmt::format("class id {} out of range 1-9", id));
  }
}

std::optional<SeatRole> ObjectClass::seat_role() const noexcept {
  if (id_ == kMotorcycleId) return std::nullopt;
  return static_cast<SeatRole>((id_ - 2) / 2);
}

Role ObjectClass::role() const noexcept {
  const auto seat = seat_role();
  return seat ? to_role(*seat) : Role::Motorcycle;
}

HelmetStatus ObjectClass::helmet() const noexcept {
  if (id_ == kMotorcycleId) return HelmetStatus::NotApplicable;
  return id_ % 2 == 0 ? HelmetStatus::Helmet : HelmetStatus::NoHelmet;
}

ClassParts class_decompose(int id) {
  const ObjectClass cls(id);
  return {cls.role(), cls.helmet()};
}

std::string FrameAnnotation::key() const { return fmt::format("{}/{}", video_id, frame_index); }

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

double parse_field(std::string_view text, std::size_t line, std::string_view name) {
  const auto value = parse_double(text);
  if (!value) throw ParseError(line, fmt::format("non-numeric {} '{}'", name, text));
  return *value;
}

int parse_int_field(std::string_view text, std::size_t line, std::string_view name) {
  const auto value = parse_int(text);
  if (!value) throw ParseError(line, fmt::format("non-integer {} '{}'", name, text));
  return *value;
}

}  // namespace

AnnotationSet parse_annotations(std::istream& in, std::vector<std::string>* warnings,
                                const ParseOptions& options) {
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  AnnotationSet frames;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    const auto fields = split(line, ',');
    if (fields.size() != 7) {
      throw ParseError(line_no, fmt::format("expected 7 fields, got {}", fields.size()));
    }
    const std::string video_id(trim(fields[0]));
    if (video_id.empty()) throw ParseError(line_no, "empty video_id");
    const int frame = parse_int_field(trim(fields[1]), line_no, "frame");
    if (frame < 0) throw ParseError(line_no, "negative frame index");
    const double left = parse_field(trim(fields[2]), line_no, "bb_left");
    const double top = parse_field(trim(fields[3]), line_no, "bb_top");
    const double width = parse_field(trim(fields[4]), line_no, "bb_width");
    const double height = parse_field(trim(fields[5]), line_no, "bb_height");
    const int class_id = parse_int_field(trim(fields[6]), line_no, "class");
    if (width < 0 || height < 0) throw ParseError(line_no, "negative width/height");
    if (class_id < ObjectClass::kMinId || class_id > ObjectClass::kMaxId) {
      throw ParseError(line_no, fmt::format("class out of range: {}", class_id));
    }

    Box box{left, top, width, height, CoordSpace::frame()};
    const Box clamped = clamp_to(box, options.frame_size);
    if (clamped != box) {
      warn(fmt::format("line {}: box ({},{},{},{}) leaves the {}x{} frame; clamped", line_no,
                       left, top, width, height, options.frame_size.width,
                       options.frame_size.height));
      box = clamped;
    }
    if (frame >= options.max_frames_per_video) {
      warn(fmt::format("line {}: frame index {} beyond expected clip length {}", line_no, frame,
                       options.max_frames_per_video));
    }

    auto [it, inserted] = index.try_emplace({video_id, frame}, frames.size());
    if (inserted) frames.push_back(FrameAnnotation{video_id, frame, {}});
    frames[it->second].objects.push_back(GTObject{box, ObjectClass(class_id)});
  }
  return frames;
}

AnnotationSet load_annotations(const std::string& path, std::vector<std::string>* warnings,
                               const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open annotations '" + path + "'");
  return parse_annotations(in, warnings, options);
}

void write_annotations(std::ostream& out, const AnnotationSet& annotations) {
  for (const auto& frame : annotations) {
    for (const auto& obj : frame.objects) {
      out << frame.video_id << ',' << frame.frame_index << ',' << format_number(obj.box.x) << ','
          << format_number(obj.box.y) << ',' << format_number(obj.box.w) << ','
          << format_number(obj.box.h) << ',' << obj.cls.id() << '\n';
    }
  }
}

long long ClassStats::total_people() const {
  long long total = 0;
  for (auto c : role_counts) total += c;
  return total;
}

ClassStats& ClassStats::operator+=(const ClassStats& other) {
  for (std::size_t i = 0; i < kSeatRoleCount; ++i) role_counts[i] += other.role_counts[i];
  helmeted += other.helmeted;
  unhelmeted += other.unhelmeted;
  motorcycles += other.motorcycles;
  return *this;
}

ClassStats compute_class_stats(const AnnotationSet& annotations) {
  ClassStats stats;
  for (const auto& frame : annotations) {
    for (const auto& obj : frame.objects) {
      const auto seat = obj.cls.seat_role();
      if (!seat) {
        ++stats.motorcycles;
        continue;
      }
      ++stats.role_counts[static_cast<std::size_t>(*seat)];
      if (obj.cls.helmet() == HelmetStatus::Helmet) {
        ++stats.helmeted;
      } else {
        ++stats.unhelmeted;
      }
    }
  }
  return stats;
}

RoleWeights inverse_class_weights(const ClassStats& stats) {
  const double total = double(stats.total_people());
  RoleWeights weights{};
  for (SeatRole role : kSeatRoles) {
    const long long n = stats.count(role);
    if (n <= 0) {
      throw DomainError(fmt::format("no {} samples; inverse weight undefined", to_string(role)));
    }
    weights[static_cast<std::size_t>(role)] = total / double(n);
  }
  return weights;
}

RoleWeights class_weights(const ClassStats& stats, const std::optional<RoleWeights>& override_weights) {
  if (override_weights) return *override_weights;
  return inverse_class_weights(stats);
}

}  // namespace helmetcv
