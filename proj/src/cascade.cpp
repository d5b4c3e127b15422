#include "helmetcv/cascade.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "helmetcv/errors.hpp"
#include "helmetcv/text.hpp"

namespace helmetcv {

CascadeConfig CascadeConfig::with_threshold(double t) const {
  CascadeConfig cfg = *this;
  cfg.motorcycle_threshold = cfg.person_threshold = cfg.helmet_threshold = t;
  return cfg;
}

void CascadeConfig::validate() const {
  for (double t : {motorcycle_threshold, person_threshold, helmet_threshold}) {
    if (!(t >= 0.0 && t <= 1.0)) throw UsageError(fmt::format("stage threshold {} outside [0,1]", t));
  }
  if (!(person_dedup_iou >= 0.0 && person_dedup_iou <= 1.0)) {
    throw UsageError("person_dedup_iou outside [0,1]");
  }
  const auto& m = expansion_margins;
  if (m.left < 0 || m.right < 0 || m.top < 0 || m.bottom < 0) throw UsageError("negative margin");
  if (!frame_size.valid() || !model_input_size.valid()) throw UsageError("invalid image size");
  if (min_crop_px < 1) throw UsageError("min_crop_px must be >= 1");
}

std::string_view to_string(CascadeStage stage) {
  switch (stage) {
    case CascadeStage::Motorcycle: return "motorcycle";
    case CascadeStage::Person: return "person";
    case CascadeStage::Helmet: return "helmet";
  }
  return "?";
}

namespace {

std::string cause_message(const std::exception_ptr& cause) {
  try {
    std::rethrow_exception(cause);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

template <class F>
auto in_stage(CascadeStage stage, const ImageKey& key, F&& f) {
  try {
    return f();
  } catch (const CascadeStageError&) {
    throw;
  } catch (...) {
    throw CascadeStageError(stage, key.str(), std::current_exception());
  }
}

}  // namespace

CascadeStageError::CascadeStageError(CascadeStage stage, const std::string& where,
                                     std::exception_ptr cause)
    : std::runtime_error(
          fmt::format("{} stage failed on {}: {}", to_string(stage), where, cause_message(cause))),
      stage_(stage),
      cause_(std::move(cause)) {}

ObjectClass assemble_class(std::optional<SeatRole> seat_role, bool helmet) {
  if (!seat_role) throw DomainError("cannot assemble a class for an unclassified seat role");
  return ObjectClass(2 + 2 * static_cast<int>(*seat_role) + (helmet ? 0 : 1));
}

std::vector<RiderRecord> dedup_persons(std::vector<RiderRecord> riders, double dedup_iou) {
  std::vector<std::size_t> order(riders.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (riders[a].person_score != riders[b].person_score) {
      return riders[a].person_score > riders[b].person_score;
    }
    return riders[a].motorcycle_index < riders[b].motorcycle_index;
  });

  std::vector<bool> keep(riders.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(riders[i].person_box, riders[k].person_box) >= dedup_iou;
    });
    if (!duplicate) {
      keep[i] = true;
      kept.push_back(i);
    }
  }

  std::vector<RiderRecord> out;
  out.reserve(kept.size());
  for (std::size_t i = 0; i < riders.size(); ++i) {
    if (keep[i]) out.push_back(std::move(riders[i]));
  }
  return out;
}

std::vector<ScoredDetection> detect_motorcycles(const ImageKey& frame, Detector& backend,
                                                const CascadeConfig& cfg) {
  cfg.validate();
  const ImageKey key = frame.frame_key();
  DetectionRequest req{key, std::string(kMotorcyclePrompt), cfg.motorcycle_threshold,
                       cfg.model_input_size};
  auto dets = in_stage(CascadeStage::Motorcycle, key, [&] { return backend.detect(req); });
  for (auto& d : dets) {
    d.box = clamp_to(rescale_box(d.box, cfg.model_input_size, cfg.frame_size, CoordSpace::frame()),
                     cfg.frame_size);
  }
  return dets;
}

CascadeOutput detect_riders(const ImageKey& frame, Detector& backend, const CascadeConfig& cfg) {
  CascadeOutput out;
  out.frame = frame.frame_key();
  out.motorcycles = detect_motorcycles(frame, backend, cfg);

  std::vector<RiderRecord> riders;
  for (std::size_t m = 0; m < out.motorcycles.size(); ++m) {
    const Box region = expand_box(out.motorcycles[m].box, cfg.expansion_margins, cfg.frame_size);
    out.search_regions.push_back(region);
    const PixelRect rect = covering_rect(region, cfg.frame_size);
    if (rect.w <= 0 || rect.h <= 0) continue;

    const ImageKey crop_key = out.frame.with_crop(rect);
    DetectionRequest req{crop_key, std::string(kPersonPrompt), cfg.person_threshold, std::nullopt};
    const auto persons = in_stage(CascadeStage::Person, crop_key, [&] { return backend.detect(req); });
    const Point origin{double(rect.x), double(rect.y)};
    for (const auto& p : persons) {
      const Box in_frame = intersection(crop_to_frame(p.box, origin), region);
      if (in_frame.area() <= 0.0) continue;
      RiderRecord rider;
      rider.motorcycle_index = m;
      rider.person_box = in_frame;
      rider.person_score = p.score;
      riders.push_back(rider);
    }
  }
  out.riders = dedup_persons(std::move(riders), cfg.person_dedup_iou);
  return out;
}

CascadeOutput run_frame(const ImageKey& frame, Detector& backend, SeatClassifier& seats,
                        const CascadeConfig& cfg) {
  CascadeOutput out = detect_riders(frame, backend, cfg);
  for (auto& rider : out.riders) {
    const PixelRect rect = covering_rect(rider.person_box, cfg.frame_size);
    if (rect.w < cfg.min_crop_px || rect.h < cfg.min_crop_px) {
      out.notes.push_back(fmt::format("person crop {}x{} below minimum; helmet=false, unclassified",
                                      rect.w, rect.h));
      continue;
    }
    const ImageKey crop_key = out.frame.with_crop(rect);
    DetectionRequest req{crop_key, std::string(kHelmetPrompt), cfg.helmet_threshold, std::nullopt};
    rider.helmet = !in_stage(CascadeStage::Helmet, crop_key, [&] { return backend.detect(req); }).empty();

    try {
      rider.seat_role = seats.classify(crop_key);
    } catch (const std::exception& e) {
      out.notes.push_back(fmt::format("seat classification failed on {}: {}", crop_key.str(), e.what()));
      rider.seat_role.reset();
    }
    if (rider.seat_role) rider.composite_class = assemble_class(rider.seat_role, rider.helmet);
  }
  return out;
}

std::vector<bool> classify_helmet_on_gt(const ImageKey& frame, std::span<const Box> person_boxes,
                                        Detector& backend, double threshold, ImageSize frame_size,
                                        int min_crop_px) {
  std::vector<bool> out;
  out.reserve(person_boxes.size());
  for (const auto& box : person_boxes) {
    const PixelRect rect = covering_rect(box, frame_size);
    if (rect.w < min_crop_px || rect.h < min_crop_px) {
      out.push_back(false);
      continue;
    }
    const ImageKey key = frame.frame_key().with_crop(rect);
    DetectionRequest req{key, std::string(kHelmetPrompt), threshold, std::nullopt};
    out.push_back(!in_stage(CascadeStage::Helmet, key, [&] { return backend.detect(req); }).empty());
  }
  return out;
}

void write_cascade_csv(std::ostream& out, std::span<const CascadeOutput> outputs) {
  auto row = [&](const ImageKey& f, const Box& b, int cls, double score) {
    out << fmt::format("{},{},{},{},{},{},{},{:.6f}\n", f.video_id, f.frame_index, format_number(b.x),
                       format_number(b.y), format_number(b.w), format_number(b.h), cls, score);
  };
  for (const auto& o : outputs) {
    for (const auto& m : o.motorcycles) row(o.frame, m.box, ObjectClass::kMotorcycleId, m.score);
    for (const auto& r : o.riders) {
      row(o.frame, r.person_box, r.composite_class ? r.composite_class->id() : 0, r.person_score);
    }
  }
}

std::vector<FrameDetections> parse_detection_csv(std::istream& in) {
  std::vector<FrameDetections> frames;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw ParseError(line_no, fmt::format("expected 8 fields, got {}", f.size()));
    const auto frame = parse_int(trim(f[1]));
    const auto x = parse_double(trim(f[2]));
    const auto y = parse_double(trim(f[3]));
    const auto w = parse_double(trim(f[4]));
    const auto h = parse_double(trim(f[5]));
    const auto cls = parse_int(trim(f[6]));
    const auto score = parse_double(trim(f[7]));
    if (!frame || !x || !y || !w || !h || !cls || !score) throw ParseError(line_no, "non-numeric field");
    if (*frame < 0) throw ParseError(line_no, "negative frame index");
    if (*w < 0 || *h < 0) throw ParseError(line_no, "negative width/height");
    if (*cls < 0 || *cls > ObjectClass::kMaxId) throw ParseError(line_no, "class out of range");
    if (!(*score >= 0.0 && *score <= 1.0)) throw ParseError(line_no, "score outside [0,1]");
    const std::string video(trim(f[0]));
    auto [it, inserted] = index.try_emplace({video, *frame}, frames.size());
    if (inserted) frames.push_back({video, *frame, {}});
    frames[it->second].detections.push_back({Box{*x, *y, *w, *h, CoordSpace::frame()}, *cls, *score});
  }
  return frames;
}

std::vector<FrameDetections> load_detection_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open detections '" + path + "'");
  return parse_detection_csv(in);
}

}  // namespace helmetcv
