#include "helmetcv/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "helmetcv/errors.hpp"
#include "helmetcv/parallel.hpp"
#include "helmetcv/text.hpp"

namespace helmetcv {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(SweepTask task) {
  switch (task) {
    case SweepTask::MotorcycleDetection: return "motorcycle-detection";
    case SweepTask::PersonDetection: return "person-detection";
    case SweepTask::HelmetOnGroundTruth: return "helmet-classification-on-gt";
    case SweepTask::CascadeFull: return "cascade-full";
  }
  return "?";
}

std::optional<SweepTask> sweep_task_from_name(std::string_view name) {
  static constexpr std::pair<std::string_view, SweepTask> kShort[] = {
      {"motorcycle", SweepTask::MotorcycleDetection},
      {"person", SweepTask::PersonDetection},
      {"helmet", SweepTask::HelmetOnGroundTruth},
      {"cascade", SweepTask::CascadeFull},
  };
  for (const auto& [short_name, task] : kShort) {
    if (name == short_name || name == to_string(task)) return task;
  }
  return std::nullopt;
}

void SweepConfig::validate() const {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0)) {
      throw UsageError(fmt::format("threshold {} outside [0,1]", thresholds[i]));
    }
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw UsageError("thresholds must be strictly increasing");
    }
  }
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw UsageError("iou threshold outside (0,1]");
  cascade.validate();
}

std::vector<PRPoint> SweepTable::points() const {
  std::vector<PRPoint> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.point);
  return out;
}

void SweepTable::update_ap() {
  const auto pts = points();
  const bool any = std::any_of(pts.begin(), pts.end(), [](const PRPoint& p) { return p.defined(); });
  ap = any ? std::optional<double>(average_precision(pts)) : std::nullopt;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

json SweepTable::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"threshold", r.point.threshold},
                         {"precision", optional_number(r.point.precision)},
                         {"recall", optional_number(r.point.recall)},
                         {"tp", r.counts.tp},
                         {"fp", r.counts.fp},
                         {"fn", r.counts.fn}});
  }
  return {{"task", task}, {"rows", rows_json}, {"ap", optional_number(ap)}, {"manifest", manifest}};
}

SweepTable SweepTable::from_json(const json& j) {
  SweepTable t;
  try {
    t.task = j.at("task").get<std::string>();
    for (const auto& r : j.at("rows")) {
      SweepRow row;
      row.point.threshold = r.at("threshold").get<double>();
      row.point.precision = read_optional(r, "precision");
      row.point.recall = read_optional(r, "recall");
      row.counts = {r.value("tp", 0LL), r.value("fp", 0LL), r.value("fn", 0LL)};
      t.rows.push_back(row);
    }
    t.ap = read_optional(j, "ap");
    if (j.contains("manifest")) t.manifest = j["manifest"];
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("sweep table: ") + e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Task evaluation

namespace {

std::vector<Box> boxes_where(const FrameAnnotation& frame, bool persons) {
  std::vector<Box> out;
  for (const auto& obj : frame.objects) {
    if (obj.cls.is_person() == persons) out.push_back(obj.box);
  }
  return out;
}

MatchCounts class_aware_counts(const CascadeOutput& out, const FrameAnnotation& gt, double iou_threshold) {
  std::map<int, std::vector<ScoredDetection>> dets;
  std::map<int, std::vector<Box>> gts;
  for (const auto& m : out.motorcycles) dets[ObjectClass::kMotorcycleId].push_back(m);
  for (const auto& r : out.riders) {
    dets[r.composite_class ? r.composite_class->id() : 0].push_back({r.person_box, r.person_score, ""});
  }
  for (const auto& obj : gt.objects) gts[obj.cls.id()].push_back(obj.box);

  MatchCounts total;
  for (int c = 0; c <= ObjectClass::kMaxId; ++c) {
    total += match_detections(dets[c], gts[c], iou_threshold).counts;
  }
  return total;
}

}  // namespace

MatchCounts evaluate_frames(SweepTask task, std::span<const FrameAnnotation> frames, double threshold,
                            Detector& backend, SeatClassifier& seats, const SweepConfig& cfg) {
  const CascadeConfig stage_cfg = cfg.cascade.with_threshold(threshold);
  MatchCounts total;
  for (const auto& frame : frames) {
    const ImageKey key{frame.video_id, frame.frame_index, std::nullopt};
    switch (task) {
      case SweepTask::MotorcycleDetection: {
        const auto dets = detect_motorcycles(key, backend, stage_cfg);
        total += match_detections(dets, boxes_where(frame, false), cfg.iou_threshold).counts;
        break;
      }
      case SweepTask::PersonDetection: {
        const auto out = detect_riders(key, backend, stage_cfg);
        std::vector<ScoredDetection> persons;
        for (const auto& r : out.riders) persons.push_back({r.person_box, r.person_score, ""});
        total += match_detections(persons, boxes_where(frame, true), cfg.iou_threshold).counts;
        break;
      }
      case SweepTask::HelmetOnGroundTruth: {
        std::vector<Box> boxes;
        std::vector<bool> actual;
        for (const auto& obj : frame.objects) {
          if (!obj.cls.is_person()) continue;
          boxes.push_back(obj.box);
          actual.push_back(obj.cls.helmet() == HelmetStatus::Helmet);
        }
        const auto predicted = classify_helmet_on_gt(key, boxes, backend, threshold, stage_cfg.frame_size,
                                                     stage_cfg.min_crop_px);
        total += binary_counts(predicted, actual);
        break;
      }
      case SweepTask::CascadeFull: {
        const auto out = run_frame(key, backend, seats, stage_cfg);
        total += class_aware_counts(out, frame, cfg.iou_threshold);
        break;
      }
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Sweep driver

namespace {

struct VideoSlice {
  std::string video_id;
  std::vector<FrameAnnotation> frames;
};

std::vector<VideoSlice> group_by_video(const AnnotationSet& annotations) {
  std::vector<VideoSlice> videos;
  std::map<std::string, std::size_t> index;
  for (const auto& f : annotations) {
    auto [it, inserted] = index.try_emplace(f.video_id, videos.size());
    if (inserted) videos.push_back({f.video_id, {}});
    videos[it->second].frames.push_back(f);
  }
  return videos;
}

std::string safe_name(const std::string& video_id) {
  const bool plain = !video_id.empty() && std::all_of(video_id.begin(), video_id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
  return plain ? video_id : fmt::format("v{:016x}", fnv1a64(video_id));
}

std::string run_digest(const SweepConfig& cfg, std::string_view seats) {
  const auto& c = cfg.cascade;
  return sha256_hex(fmt::format("{}|{}|{}|{}|{}|{}x{}|{}x{}|{},{},{},{}|{}|{}", to_string(cfg.task),
                                cfg.iou_threshold, cfg.backend, cfg.input_digest, seats,
                                c.frame_size.width, c.frame_size.height, c.model_input_size.width,
                                c.model_input_size.height, c.expansion_margins.left,
                                c.expansion_margins.right, c.expansion_margins.top,
                                c.expansion_margins.bottom, c.person_dedup_iou, c.min_crop_px))
      .substr(0, 16);
}

std::optional<MatchCounts> load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const json j = json::parse(in);
    return MatchCounts{j.at("tp").get<long long>(), j.at("fp").get<long long>(), j.at("fn").get<long long>()};
  } catch (const json::exception&) {
    return std::nullopt;  // torn write from an aborted run; recompute
  }
}

void save_checkpoint(const fs::path& path, const MatchCounts& c) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}.dump() << '\n';
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

SweepTable run_sweep(const SweepConfig& cfg, const AnnotationSet& annotations, Detector& backend,
                     SeatClassifier* seats) {
  cfg.validate();
  NullSeatClassifier no_seats;
  SeatClassifier& seat_model = seats ? *seats : no_seats;

  SweepTable table;
  table.task = std::string(to_string(cfg.task));
  table.manifest = {{"task", table.task},
                    {"thresholds", cfg.thresholds},
                    {"iou_threshold", cfg.iou_threshold},
                    {"backend", cfg.backend},
                    {"input_digest", cfg.input_digest},
                    {"started_at", utc_timestamp()}};

  const auto videos = group_by_video(annotations);
  const fs::path checkpoint_root =
      cfg.checkpoint_dir.empty() ? fs::path{} : cfg.checkpoint_dir / run_digest(cfg, seat_model.describe());

  for (double t : cfg.thresholds) {
    std::vector<MatchCounts> per_video(videos.size());
    try {
      parallel_for(videos.size(), cfg.jobs, [&](std::size_t v) {
        fs::path ckpt;
        if (!checkpoint_root.empty()) {
          ckpt = checkpoint_root / fmt::format("t{:.6f}", t) / (safe_name(videos[v].video_id) + ".json");
          if (auto saved = load_checkpoint(ckpt)) {
            per_video[v] = *saved;
            return;
          }
        }
        per_video[v] = evaluate_frames(cfg.task, videos[v].frames, t, backend, seat_model, cfg);
        if (!ckpt.empty()) save_checkpoint(ckpt, per_video[v]);
      });
    } catch (const std::exception& e) {
      table.update_ap();
      throw SweepAborted(fmt::format("sweep aborted at threshold {}: {}", t, e.what()), table);
    }
    MatchCounts total;
    for (const auto& c : per_video) total += c;
    table.rows.push_back({precision_recall(total, t), total});
  }
  table.update_ap();
  return table;
}

MatchCounts evaluate_detections(const AnnotationSet& gt, std::span<const FrameDetections> detections,
                                double score_threshold, double iou_threshold, bool class_agnostic) {
  std::map<std::pair<std::string, int>, std::vector<const LabeledDetection*>> by_frame;
  for (const auto& f : detections) {
    auto& v = by_frame[{f.video_id, f.frame_index}];
    for (const auto& d : f.detections) {
      if (d.score >= score_threshold) v.push_back(&d);
    }
  }

  MatchCounts total;
  auto match_group = [&](const std::vector<const LabeledDetection*>& dets, const std::vector<Box>& gts) {
    std::vector<ScoredDetection> sd;
    for (const auto* d : dets) sd.push_back({d->box, d->score, ""});
    total += match_detections(sd, gts, iou_threshold).counts;
  };
  auto match_frame = [&](const std::vector<const LabeledDetection*>& dets, const FrameAnnotation* frame) {
    if (class_agnostic) {
      std::vector<Box> gts;
      if (frame) {
        for (const auto& o : frame->objects) gts.push_back(o.box);
      }
      match_group(dets, gts);
      return;
    }
    for (int c = 0; c <= ObjectClass::kMaxId; ++c) {
      std::vector<const LabeledDetection*> dc;
      for (const auto* d : dets) {
        if (d->class_id == c) dc.push_back(d);
      }
      std::vector<Box> gc;
      if (frame) {
        for (const auto& o : frame->objects) {
          if (o.cls.id() == c) gc.push_back(o.box);
        }
      }
      match_group(dc, gc);
    }
  };

  for (const auto& frame : gt) {
    const auto it = by_frame.find({frame.video_id, frame.frame_index});
    if (it == by_frame.end()) {
      match_frame({}, &frame);
    } else {
      match_frame(it->second, &frame);
      by_frame.erase(it);
    }
  }
  for (const auto& [key, dets] : by_frame) match_frame(dets, nullptr);  // frames without ground truth
  return total;
}

// ---------------------------------------------------------------------------
// Emitters

namespace {

std::string ratio4(const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : "undefined"; }

std::size_t write_all(std::ostream& sink, const std::string& text) {
  sink.write(text.data(), static_cast<std::streamsize>(text.size()));
  sink.flush();
  if (!sink) throw std::runtime_error("failed writing report output");
  return text.size();
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::size_t emit_pr_csv(const SweepTable& table, std::ostream& sink) {
  std::string text = "threshold,precision,recall\n";
  for (const auto& r : table.rows) {
    text += fmt::format("{:.4f},{},{}\n", r.point.threshold, ratio4(r.point.precision), ratio4(r.point.recall));
  }
  text += table.ap ? fmt::format("# ap={:.6f}\n", *table.ap) : std::string("# ap=undefined\n");
  return write_all(sink, text);
}

std::size_t emit_pr_svg(const SweepTable& table, std::ostream& sink) {
  std::vector<std::pair<double, double>> pts;  // (recall, precision)
  for (const auto& r : table.rows) {
    if (r.point.defined()) pts.emplace_back(*r.point.recall, *r.point.precision);
  }
  if (pts.empty()) throw DomainError("PR plot needs at least one defined point");
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const double ap = table.ap ? *table.ap : average_precision(table.points());

  constexpr double kWidth = 640, kHeight = 480;
  constexpr double kLeft = 70, kTop = 50, kPlotW = 530, kPlotH = 370;
  auto px = [&](double recall) { return kLeft + recall * kPlotW; };
  auto py = [&](double precision) { return kTop + (1.0 - precision) * kPlotH; };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
                   "viewBox=\"0 0 {:.0f} {:.0f}\">\n", kWidth, kHeight, kWidth, kHeight);
  s += fmt::format("<title>{} precision-recall AP={:.4f}</title>\n", xml_escape(table.task), ap);
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += fmt::format("<text x=\"{:.1f}\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                   "font-size=\"16\">{} (AP={:.4f})</text>\n",
                   kLeft + kPlotW / 2, xml_escape(table.task), ap);

  s += "<g stroke=\"#ccc\" stroke-width=\"1\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\"/>\n", px(v), py(0), px(v), py(1));
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\"/>\n", px(0), py(v), px(1), py(v));
  }
  s += "</g>\n";
  s += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.1f}</text>\n", px(v), py(0) + 18, v);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.1f}</text>\n", px(0) - 8, py(v) + 4, v);
  }
  s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">Recall</text>\n", px(0.5), kHeight - 12);
  s += fmt::format("<text x=\"20\" y=\"{:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2f})\">"
                   "Precision</text>\n", py(0.5), py(0.5));
  s += "</g>\n";
  s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
                   "stroke=\"black\"/>\n", kLeft, kTop, kPlotW, kPlotH);

  if (pts.size() > 1) {
    s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s += fmt::format("{}{:.2f},{:.2f}", i ? " " : "", px(pts[i].first), py(pts[i].second));
    }
    s += "\"/>\n";
  }
  s += "<g fill=\"#1f77b4\">\n";
  for (const auto& [r, p] : pts) {
    s += fmt::format("<circle class=\"marker\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\"/>\n", px(r), py(p));
  }
  s += "</g>\n</svg>\n";
  return write_all(sink, s);
}

std::vector<PRPoint> parse_pr_csv(std::istream& in) {
  std::vector<PRPoint> out;
  std::string raw;
  std::size_t line_no = 0;
  auto ratio = [&](std::string_view s) -> std::optional<double> {
    if (s == "undefined") return std::nullopt;
    const auto v = parse_double(s);
    if (!v) throw ParseError(line_no, fmt::format("bad ratio '{}'", s));
    return v;
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line == "threshold,precision,recall") continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw ParseError(line_no, "expected threshold,precision,recall");
    const auto t = parse_double(f[0]);
    if (!t) throw ParseError(line_no, "bad threshold");
    out.push_back({*t, ratio(f[1]), ratio(f[2])});
  }
  return out;
}

std::vector<double> parse_threshold_list(std::string_view text) {
  text = trim(text);
  auto number = [&](std::string_view s) {
    const auto v = parse_double(trim(s));
    if (!v) throw UsageError(fmt::format("malformed threshold '{}'", s));
    return *v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw UsageError("threshold range must be start:stop:step");
    const double start = number(parts[0]), stop = number(parts[1]), step = number(parts[2]);
    if (!(step > 0.0) || stop < start) throw UsageError("empty or descending range");
    for (long i = 0;; ++i) {
      const double v = start + double(i) * step;
      if (v > stop + 1e-9) break;
      out.push_back(std::round(v * 1e9) / 1e9);
    }
  } else {
    for (auto part : split(text, ',')) out.push_back(number(part));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out[i] >= 0.0 && out[i] <= 1.0)) throw UsageError(fmt::format("threshold {} outside [0,1]", out[i]));
    if (i > 0 && !(out[i] > out[i - 1])) throw UsageError("empty or descending range");
  }
  if (out.empty()) throw UsageError("empty or descending range");
  return out;
}

}  // namespace helmetcv
