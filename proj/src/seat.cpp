#include "helmetcv/seat.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "helmetcv/errors.hpp"
#include "helmetcv/text.hpp"

namespace helmetcv {

using nlohmann::json;

std::string FixedSeatClassifier::describe() const {
  return fmt::format("fixed({})", wire_name(role_));
}

MappedSeatClassifier MappedSeatClassifier::load(std::istream& in) {
  std::map<std::string, SeatRole> table;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("image_key") || !obj["image_key"].is_string() ||
        !obj.contains("role") || !obj["role"].is_string()) {
      throw ParseError(line_no, "expected {\"image_key\": string, \"role\": string}");
    }
    const auto role = seat_role_from_name(obj["role"].get<std::string>());
    if (!role) throw ParseError(line_no, "unknown seat role '" + obj["role"].get<std::string>() + "'");
    const auto key = obj["image_key"].get<std::string>();
    try {
      (void)ImageKey::parse(key);
    } catch (const UsageError& e) {
      throw ParseError(line_no, e.what());
    }
    if (!table.emplace(key, *role).second) throw ParseError(line_no, "duplicate image_key " + key);
  }
  return MappedSeatClassifier(std::move(table));
}

MappedSeatClassifier MappedSeatClassifier::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open seat file '" + path + "'");
  return load(in);
}

void MappedSeatClassifier::serialize(std::ostream& out) const {
  for (const auto& [key, role] : table_) {
    out << "{\"image_key\":" << json(key).dump() << ",\"role\":\"" << wire_name(role) << "\"}\n";
  }
}

std::optional<SeatRole> MappedSeatClassifier::classify(const ImageKey& person_crop) {
  const auto it = table_.find(person_crop.str());
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::string MappedSeatClassifier::describe() const {
  return fmt::format("mapped({} crops)", table_.size());
}

GroundTruthSeatClassifier::GroundTruthSeatClassifier(const AnnotationSet& gt, double min_iou)
    : min_iou_(min_iou) {
  for (const auto& frame : gt) {
    auto& persons = persons_[{frame.video_id, frame.frame_index}];
    for (const auto& obj : frame.objects) {
      if (obj.cls.is_person()) persons.push_back(obj);
    }
  }
}

std::optional<SeatRole> GroundTruthSeatClassifier::classify(const ImageKey& person_crop) {
  if (!person_crop.crop) return std::nullopt;
  const auto it = persons_.find({person_crop.video_id, person_crop.frame_index});
  if (it == persons_.end()) return std::nullopt;
  const Box crop = person_crop.crop->to_box();
  std::optional<SeatRole> best;
  double best_iou = min_iou_;
  for (const auto& obj : it->second) {
    const double v = iou(crop, obj.box);
    if (v >= best_iou) {
      best_iou = v;
      best = obj.cls.seat_role();
    }
  }
  return best;
}

std::optional<SeatRole> RecordingSeatClassifier::classify(const ImageKey& person_crop) {
  const auto role = inner_.classify(person_crop);
  if (role) {
    std::lock_guard lock(mu_);
    table_.emplace(person_crop.str(), *role);
  }
  return role;
}

MappedSeatClassifier RecordingSeatClassifier::snapshot() const {
  std::lock_guard lock(mu_);
  return MappedSeatClassifier(table_);
}

}  // namespace helmetcv
