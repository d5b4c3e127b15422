#include "helmetcv/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "helmetcv/errors.hpp"
#include "helmetcv/text.hpp"

namespace helmetcv {

using nlohmann::json;

std::string ImageKey::str() const {
  if (!crop) return fmt::format("{}/{}", video_id, frame_index);
  return fmt::format("{}/{}@{},{},{},{}", video_id, frame_index, crop->x, crop->y, crop->w, crop->h);
}

ImageKey ImageKey::parse(std::string_view text) {
  ImageKey key;
  std::string_view head = text;
  const auto at = text.find('@');
  if (at != std::string_view::npos) {
    head = text.substr(0, at);
    const auto parts = split(text.substr(at + 1), ',');
    std::optional<int> v[4];
    if (parts.size() == 4) {
      for (int i = 0; i < 4; ++i) v[i] = parse_int(parts[i]);
    }
    if (parts.size() != 4 || !v[0] || !v[1] || !v[2] || !v[3] || *v[2] < 0 || *v[3] < 0) {
      throw UsageError(fmt::format("bad crop in image key '{}'", text));
    }
    key.crop = PixelRect{*v[0], *v[1], *v[2], *v[3]};
  }
  const auto slash = head.rfind('/');
  const auto frame = slash == std::string_view::npos ? std::nullopt : parse_int(head.substr(slash + 1));
  if (!frame || slash == 0 || *frame < 0) {
    throw UsageError(fmt::format("bad image key '{}' (expected <video>/<frame>)", text));
  }
  key.video_id = std::string(head.substr(0, slash));
  key.frame_index = *frame;
  return key;
}

CoordSpace DetectionRequest::result_space() const {
  if (image.crop) return CoordSpace::crop({double(image.crop->x), double(image.crop->y)});
  if (resize_to) return CoordSpace::model_input();
  return CoordSpace::frame();
}

void DetectionRequest::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw UsageError(fmt::format("threshold {} outside [0,1]", threshold));
  }
  if (prompt.empty()) throw UsageError("empty prompt");
  if (resize_to && image.crop) throw UsageError("crops are sent at native resolution");
  if (resize_to && !resize_to->valid()) throw UsageError("invalid model input size");
}

void filter_and_sort(std::vector<ScoredDetection>& detections, double threshold) {
  std::erase_if(detections, [&](const ScoredDetection& d) { return !(d.score >= threshold); });
  std::stable_sort(detections.begin(), detections.end(),
                   [](const ScoredDetection& a, const ScoredDetection& b) { return a.score > b.score; });
}

// ---------------------------------------------------------------------------
// Replay

ReplayDetector::ReplayDetector(std::vector<ReplayRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!index_.try_emplace({r.image_key, r.prompt}, i).second) {
      throw ParseError(i + 1, fmt::format("duplicate record for ({}, {})", r.image_key, r.prompt));
    }
  }
}

namespace {

double number_field(const json& obj, const char* name, std::size_t line) {
  const auto it = obj.find(name);
  if (it == obj.end() || !it->is_number()) {
    throw ParseError(line, fmt::format("missing or non-numeric '{}'", name));
  }
  return it->get<double>();
}

std::string string_field(const json& obj, const char* name, std::size_t line) {
  const auto it = obj.find(name);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(line, fmt::format("missing or non-string '{}'", name));
  }
  return it->get<std::string>();
}

}  // namespace

ReplayDetector ReplayDetector::load(std::istream& in) {
  std::vector<ReplayRecord> records;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
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
    if (!obj.is_object()) throw ParseError(line_no, "record is not a JSON object");

    ReplayRecord rec;
    rec.image_key = string_field(obj, "image_key", line_no);
    rec.prompt = string_field(obj, "prompt", line_no);
    try {
      (void)ImageKey::parse(rec.image_key);
    } catch (const UsageError& e) {
      throw ParseError(line_no, e.what());
    }
    const auto dets = obj.find("detections");
    if (dets == obj.end() || !dets->is_array()) throw ParseError(line_no, "missing 'detections' array");
    for (const auto& d : *dets) {
      if (!d.is_object()) throw ParseError(line_no, "detection is not an object");
      ReplayDetection det{number_field(d, "x", line_no), number_field(d, "y", line_no),
                          number_field(d, "w", line_no), number_field(d, "h", line_no),
                          number_field(d, "score", line_no)};
      if (det.w < 0 || det.h < 0) throw ParseError(line_no, "negative detection size");
      if (!(det.score >= 0.0 && det.score <= 1.0)) throw ParseError(line_no, "score outside [0,1]");
      rec.detections.push_back(det);
    }
    if (!seen.try_emplace({rec.image_key, rec.prompt}, line_no).second) {
      throw ParseError(line_no, fmt::format("duplicate record for ({}, {})", rec.image_key, rec.prompt));
    }
    records.push_back(std::move(rec));
  }
  return ReplayDetector(std::move(records));
}

ReplayDetector ReplayDetector::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open replay file '" + path + "'");
  return load(in);
}

void write_replay_record(std::ostream& out, const ReplayRecord& record) {
  out << "{\"image_key\":" << json(record.image_key).dump() << ",\"prompt\":" << json(record.prompt).dump()
      << ",\"detections\":[";
  for (std::size_t i = 0; i < record.detections.size(); ++i) {
    const auto& d = record.detections[i];
    if (i) out << ',';
    out << fmt::format("{{\"x\":{},\"y\":{},\"w\":{},\"h\":{},\"score\":{:.6f}}}", format_number(d.x),
                       format_number(d.y), format_number(d.w), format_number(d.h), d.score);
  }
  out << "]}\n";
}

void ReplayDetector::serialize(std::ostream& out) const {
  for (const auto& r : records_) write_replay_record(out, r);
}

std::vector<ScoredDetection> ReplayDetector::detect(const DetectionRequest& request) {
  request.validate();
  const auto it = index_.find({request.image.str(), request.prompt});
  if (it == index_.end()) {
    ++misses_;
    return {};
  }
  const CoordSpace space = request.result_space();
  std::vector<ScoredDetection> out;
  for (const auto& d : records_[it->second].detections) {
    out.push_back({Box{d.x, d.y, d.w, d.h, space}, d.score, request.prompt});
  }
  filter_and_sort(out, request.threshold);
  return out;
}

std::string ReplayDetector::describe() const { return fmt::format("replay({} records)", records_.size()); }

// ---------------------------------------------------------------------------
// Synthetic

void NoiseConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(drop_rate)) throw UsageError("drop_rate outside [0,1]");
  if (!(spurious_rate >= 0.0) || !std::isfinite(spurious_rate)) throw UsageError("spurious_rate must be >= 0");
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) throw UsageError("jitter_sigma must be >= 0");
  for (const auto* r : {&tp_score, &fp_score}) {
    if (!in_unit(r->min) || !in_unit(r->max) || r->min > r->max) {
      throw UsageError("score range must satisfy 0 <= min <= max <= 1");
    }
  }
}

NoiseConfig NoiseConfig::from_json_text(std::string_view text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("noise config: ") + e.what());
  }
  NoiseConfig cfg;
  try {
    cfg.drop_rate = obj.value("drop_rate", cfg.drop_rate);
    cfg.spurious_rate = obj.value("spurious_rate", cfg.spurious_rate);
    cfg.jitter_sigma = obj.value("jitter_sigma", cfg.jitter_sigma);
    cfg.seed = obj.value("seed", cfg.seed);
    if (obj.contains("tp_score")) {
      cfg.tp_score = {obj["tp_score"].at("min").get<double>(), obj["tp_score"].at("max").get<double>()};
    }
    if (obj.contains("fp_score")) {
      cfg.fp_score = {obj["fp_score"].at("min").get<double>(), obj["fp_score"].at("max").get<double>()};
    }
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("noise config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

NoiseConfig NoiseConfig::load_file(const std::string& path) { return from_json_text(read_file(path)); }

ClassFilter class_filter_for(std::string_view prompt) {
  if (iequals(prompt, kMotorcyclePrompt)) return ClassFilter::Motorcycle;
  if (iequals(prompt, kPersonPrompt)) return ClassFilter::Person;
  if (iequals(prompt, kHelmetPrompt)) return ClassFilter::Helmet;
  return ClassFilter::None;
}

namespace {

// Helmet stand-in: the middle half of the top quarter of a helmeted person.
Box helmet_box(const Box& person) {
  return {person.x + 0.25 * person.w, person.y, 0.5 * person.w, 0.25 * person.h, person.space};
}

double draw_score(std::mt19937_64& rng, const ScoreRange& range) {
  if (range.min == range.max) return range.min;
  // Quantized to the replay file's 6 decimals so recorded runs replay exactly.
  const double s = std::uniform_real_distribution<double>(range.min, range.max)(rng);
  return std::clamp(std::round(s * 1e6) / 1e6, range.min, range.max);
}

}  // namespace

std::vector<ScoredDetection> synthetic_generate(const FrameAnnotation& gt, const NoiseConfig& cfg,
                                                ClassFilter filter, const Box& region,
                                                std::string_view stream, std::string_view prompt) {
  std::mt19937_64 rng(fnv1a64(stream, fnv1a64(std::to_string(cfg.seed))));
  std::bernoulli_distribution keep(1.0 - cfg.drop_rate);
  std::normal_distribution<double> jitter(0.0, cfg.jitter_sigma > 0 ? cfg.jitter_sigma : 1.0);
  const ImageSize region_size{std::max(1, int(region.w)), std::max(1, int(region.h))};

  std::vector<ScoredDetection> out;
  for (const auto& obj : gt.objects) {
    std::optional<Box> target;
    switch (filter) {
      case ClassFilter::Motorcycle:
        if (!obj.cls.is_person()) target = obj.box;
        break;
      case ClassFilter::Person:
        if (obj.cls.is_person()) target = obj.box;
        break;
      case ClassFilter::Helmet:
        if (obj.cls.helmet() == HelmetStatus::Helmet) target = helmet_box(obj.box);
        break;
      case ClassFilter::None:
        break;
    }
    if (!target) continue;
    const Box inside = intersection(*target, region);
    if (target->area() <= 0.0 || inside.area() < 0.5 * target->area()) continue;
    if (!keep(rng)) continue;

    double left = inside.x, top = inside.y, right = inside.right(), bottom = inside.bottom();
    if (cfg.jitter_sigma > 0) {
      left += jitter(rng);
      top += jitter(rng);
      right += jitter(rng);
      bottom += jitter(rng);
      if (right < left) std::swap(left, right);
      if (bottom < top) std::swap(top, bottom);
    }
    Box box = intersection(Box::from_edges(left, top, right, bottom, region.space), region);
    out.push_back({box, draw_score(rng, cfg.tp_score), std::string(prompt)});
  }

  const int spurious = cfg.spurious_rate > 0 ? std::poisson_distribution<int>(cfg.spurious_rate)(rng) : 0;
  const double max_w = std::max(8.0, region.w / 2.0);
  const double max_h = std::max(8.0, region.h / 2.0);
  std::uniform_real_distribution<double> log_w(std::log(8.0), std::log(max_w));
  std::uniform_real_distribution<double> log_h(std::log(8.0), std::log(max_h));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < spurious; ++i) {
    const double w = std::min(std::exp(log_w(rng)), double(region_size.width));
    const double h = std::min(std::exp(log_h(rng)), double(region_size.height));
    const double x = region.x + unit(rng) * std::max(0.0, region.w - w);
    const double y = region.y + unit(rng) * std::max(0.0, region.h - h);
    out.push_back({Box{x, y, w, h, region.space}, draw_score(rng, cfg.fp_score), std::string(prompt)});
  }
  return out;
}

SyntheticDetector::SyntheticDetector(AnnotationSet ground_truth, NoiseConfig cfg, ImageSize frame_size)
    : gt_(std::move(ground_truth)), cfg_(cfg), frame_size_(frame_size) {
  cfg_.validate();
  if (!frame_size_.valid()) throw UsageError("invalid frame size");
  for (std::size_t i = 0; i < gt_.size(); ++i) index_.emplace(std::pair{gt_[i].video_id, gt_[i].frame_index}, i);
}

const FrameAnnotation& SyntheticDetector::frame(const ImageKey& key) const {
  const auto it = index_.find({key.video_id, key.frame_index});
  if (it == index_.end()) throw NotFoundError("no ground truth for frame " + key.frame_key().str());
  return gt_[it->second];
}

std::vector<ScoredDetection> SyntheticDetector::detect(const DetectionRequest& request) {
  request.validate();
  const FrameAnnotation& gt = frame(request.image);
  const Box region = request.image.crop ? request.image.crop->to_box()
                                        : Box{0, 0, double(frame_size_.width), double(frame_size_.height)};
  auto dets = synthetic_generate(gt, cfg_, class_filter_for(request.prompt), region,
                                 request.image.str() + "|" + request.prompt, request.prompt);
  const CoordSpace space = request.result_space();
  for (auto& d : dets) {
    if (request.image.crop) {
      d.box = frame_to_crop(d.box, space.origin);
    } else if (request.resize_to) {
      d.box = rescale_box(d.box, frame_size_, *request.resize_to, space);
    }
  }
  filter_and_sort(dets, request.threshold);
  return dets;
}

std::string SyntheticDetector::describe() const {
  return fmt::format("synthetic(drop={}, spurious={}, jitter={}, seed={})", cfg_.drop_rate,
                     cfg_.spurious_rate, cfg_.jitter_sigma, cfg_.seed);
}

// ---------------------------------------------------------------------------
// Recording

std::vector<ScoredDetection> RecordingDetector::detect(const DetectionRequest& request) {
  auto dets = inner_.detect(request);
  ReplayRecord rec{request.image.str(), request.prompt, {}};
  for (const auto& d : dets) rec.detections.push_back({d.box.x, d.box.y, d.box.w, d.box.h, d.score});
  std::lock_guard lock(mu_);
  auto [it, inserted] = records_.try_emplace({rec.image_key, rec.prompt}, rec);
  if (!inserted && rec.detections.size() > it->second.detections.size()) it->second = std::move(rec);
  return dets;
}

std::vector<ReplayRecord> RecordingDetector::records() const {
  std::lock_guard lock(mu_);
  std::vector<ReplayRecord> out;
  out.reserve(records_.size());
  for (const auto& [key, rec] : records_) out.push_back(rec);
  return out;
}

}  // namespace helmetcv
