#include "helmetcv/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "helmetcv/errors.hpp"
#include "helmetcv/parallel.hpp"
#include "helmetcv/remote.hpp"
#include "helmetcv/text.hpp"

namespace helmetcv::cli {

namespace fs = std::filesystem;

namespace {

ImageSize parse_size(const std::string& text) {
  const auto parts = split(text, 'x');
  if (parts.size() == 2) {
    const auto w = parse_int(parts[0]);
    const auto h = parse_int(parts[1]);
    if (w && h && *w > 0 && *h > 0) return {*w, *h};
  }
  throw UsageError("expected <width>x<height>, got '" + text + "'");
}

CLI::Validator unit_interval() { return CLI::Range(0.0, 1.0); }

}  // namespace

ParseOutcome parse_args(int argc, const char* const* argv) {
  Command cmd;
  std::string thresholds_text;
  std::string task_text;
  std::string frame_size_text = "1920x1080";
  std::string replay_shortcut;
  std::optional<double> drop, spurious, jitter;
  std::optional<std::uint64_t> seed;

  CLI::App app{"Cascaded motorcycle / rider / helmet detection and its evaluation harness", "helmetcv"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every verb");

  auto add_gt = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--gt", cmd.gt_path, "Ground-truth annotations CSV");
    if (required) opt->required();
    sub->add_option("--frame-size", frame_size_text, "Frame resolution, WxH")->capture_default_str();
  };
  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--backend", cmd.backend, "replay:<path> | synth:<noise.json> | remote:<url>");
    sub->add_option("--replay", replay_shortcut, "Shorthand for --backend replay:<path>");
    sub->add_option("--images", cmd.images_dir, "Frame images <dir>/<video>/<frame>.png, for remote backends");
    sub->add_option("--jobs", cmd.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  };

  auto* validate = app.add_subcommand("validate", "Parse ground truth and print class statistics");
  add_gt(validate, true);

  auto* cascade = app.add_subcommand("cascade", "Run the detection cascade over every frame");
  add_gt(cascade, false);
  add_backend(cascade);
  cascade->add_option("--seats", cmd.seats, "none | gt | fixed:<role> | replay:<path> | remote:<url>")
      ->capture_default_str();
  cascade->add_option("--threshold", cmd.threshold, "Threshold for every stage")->check(unit_interval());
  cascade->add_option("--motorcycle-threshold", cmd.motorcycle_threshold)->check(unit_interval());
  cascade->add_option("--person-threshold", cmd.person_threshold)->check(unit_interval());
  cascade->add_option("--helmet-threshold", cmd.helmet_threshold)->check(unit_interval());
  cascade->add_option("--dedup-iou", cmd.dedup_iou, "IoU above which riders are duplicates")
      ->check(unit_interval())
      ->capture_default_str();
  cascade->add_option("--out", cmd.out, "Output CSV ('-' for stdout)")->required();

  auto* eval = app.add_subcommand("eval", "Score a cascade output CSV against ground truth");
  add_gt(eval, true);
  eval->add_option("--detections", cmd.detections_path, "Cascade output CSV")->required();
  eval->add_option("--threshold", cmd.threshold, "Minimum detection score")->check(unit_interval());
  eval->add_option("--iou", cmd.iou_threshold, "IoU for a true positive")->check(unit_interval())->capture_default_str();
  eval->add_flag("--class-agnostic", cmd.class_agnostic, "Ignore class labels when matching");

  auto* sweep = app.add_subcommand("sweep", "Precision/recall over a range of thresholds");
  sweep->add_option("--task", task_text, "motorcycle | person | helmet | cascade")->required();
  add_gt(sweep, true);
  add_backend(sweep);
  sweep->add_option("--seats", cmd.seats, "Seat classifier for the cascade task")->capture_default_str();
  sweep->add_option("--thresholds", thresholds_text, "start:stop:step or a comma list")->required();
  sweep->add_option("--iou", cmd.iou_threshold, "IoU for a true positive")->check(unit_interval())->capture_default_str();
  sweep->add_option("--out", cmd.out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Re-emit CSV and SVG from a saved sweep table");
  report->add_option("--table", cmd.table_path, "table.json written by sweep")->required();
  report->add_option("--out", cmd.out, "Output directory")->required();

  auto* synth = app.add_subcommand("synth", "Record a replay file from ground truth plus detection noise");
  add_gt(synth, true);
  synth->add_option("--config", cmd.noise_config_path, "Noise config JSON");
  synth->add_option("--drop", drop, "Probability a ground-truth object is missed")->check(unit_interval());
  synth->add_option("--spurious", spurious, "Expected false boxes per image")->check(CLI::NonNegativeNumber);
  synth->add_option("--jitter", jitter, "Box edge jitter sigma in pixels")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", cmd.out, "Replay file to write")->required();
  synth->add_option("--seats-out", cmd.seats_out, "Also write ground-truth seat roles for the recorded crops");
  synth->add_option("--jobs", cmd.jobs, "Worker threads")->check(CLI::PositiveNumber);

  ParseOutcome outcome;
  std::ostringstream help_out, help_err;
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, help_out, help_err);
    outcome.exit_code = code == 0 ? kExitOk : kExitUsage;
    outcome.message = help_out.str() + help_err.str();
    if (argc <= 1) outcome.message += app.help();
    return outcome;
  }

  try {
    if (*validate) cmd.verb = Verb::Validate;
    if (*cascade) cmd.verb = Verb::Cascade;
    if (*eval) cmd.verb = Verb::Eval;
    if (*sweep) cmd.verb = Verb::Sweep;
    if (*report) cmd.verb = Verb::Report;
    if (*synth) cmd.verb = Verb::Synth;

    cmd.frame_size = parse_size(frame_size_text);
    if (!replay_shortcut.empty()) {
      if (!cmd.backend.empty()) throw UsageError("--replay and --backend are mutually exclusive");
      cmd.backend = "replay:" + replay_shortcut;
    }
    if ((cmd.verb == Verb::Cascade || cmd.verb == Verb::Sweep) && cmd.backend.empty()) {
      throw UsageError("a backend is required (--backend or --replay)");
    }
    if (cmd.verb == Verb::Cascade && cmd.gt_path.empty() && cmd.images_dir.empty()) {
      throw UsageError("cascade needs --gt or --images to enumerate frames");
    }
    if (cmd.verb == Verb::Sweep) {
      const auto task = sweep_task_from_name(task_text);
      if (!task) throw UsageError("unknown task '" + task_text + "'");
      cmd.task = *task;
      cmd.thresholds = parse_threshold_list(thresholds_text);
    }
    if (cmd.verb == Verb::Synth) {
      if (!cmd.noise_config_path.empty()) cmd.noise = NoiseConfig::load_file(cmd.noise_config_path);
      if (drop) cmd.noise.drop_rate = *drop;
      if (spurious) cmd.noise.spurious_rate = *spurious;
      if (jitter) cmd.noise.jitter_sigma = *jitter;
      if (seed) cmd.noise.seed = *seed;
      cmd.noise.validate();
    }
  } catch (const std::exception& e) {
    outcome.exit_code = kExitUsage;
    outcome.message = fmt::format("error: {}\nRun with --help for usage.\n", e.what());
    return outcome;
  }
  outcome.command = std::move(cmd);
  return outcome;
}

// ---------------------------------------------------------------------------

namespace {

std::string with_commas(long long v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return v < 0 ? "-" + out : out;
}

std::string ratio(const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : "undefined"; }

struct Backends {
  std::unique_ptr<ImageSource> images;
  std::unique_ptr<Detector> detector;
  std::unique_ptr<SeatClassifier> seats;
  std::string digest_material;
};

std::pair<std::string, std::string> split_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return {spec, ""};
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

RemoteOptions remote_options(const std::string& url, std::size_t jobs) {
  RemoteOptions opts;
  opts.base_url = url;
  opts.max_in_flight = static_cast<int>(std::clamp<std::size_t>(jobs, 4, 64));
  opts.apply_environment();
  return opts;
}

ImageSource& image_source(Backends& b, const Command& cmd) {
  if (!b.images) {
    if (cmd.images_dir.empty()) throw UsageError("remote backends need --images <dir>");
    b.images = std::make_unique<FrameStore>(cmd.images_dir);
  }
  return *b.images;
}

Backends make_backends(const Command& cmd, const AnnotationSet* gt) {
  Backends b;
  const auto [kind, arg] = split_spec(cmd.backend);
  if (kind == "replay") {
    b.detector = std::make_unique<ReplayDetector>(ReplayDetector::load_file(arg));
    b.digest_material = read_file(arg);
  } else if (kind == "synth") {
    if (!gt) throw UsageError("synth backend needs --gt");
    b.detector = std::make_unique<SyntheticDetector>(*gt, NoiseConfig::load_file(arg), cmd.frame_size);
    b.digest_material = read_file(arg);
  } else if (kind == "remote") {
    b.detector = std::make_unique<RemoteDetector>(image_source(b, cmd), remote_options(arg, cmd.jobs));
    b.digest_material = cmd.backend;
  } else {
    throw UsageError("unknown backend '" + cmd.backend + "'");
  }

  const auto [seat_kind, seat_arg] = split_spec(cmd.seats);
  if (seat_kind == "none" || seat_kind.empty()) {
    b.seats = std::make_unique<NullSeatClassifier>();
  } else if (seat_kind == "gt") {
    if (!gt) throw UsageError("--seats gt needs --gt");
    b.seats = std::make_unique<GroundTruthSeatClassifier>(*gt);
  } else if (seat_kind == "fixed") {
    const auto role = seat_role_from_name(seat_arg);
    if (!role) throw UsageError("unknown seat role '" + seat_arg + "'");
    b.seats = std::make_unique<FixedSeatClassifier>(*role);
  } else if (seat_kind == "replay") {
    b.seats = std::make_unique<MappedSeatClassifier>(MappedSeatClassifier::load_file(seat_arg));
    b.digest_material += read_file(seat_arg);
  } else if (seat_kind == "remote") {
    b.seats = std::make_unique<RemoteSeatClassifier>(image_source(b, cmd), remote_options(seat_arg, cmd.jobs));
  } else {
    throw UsageError("unknown seat classifier '" + cmd.seats + "'");
  }
  return b;
}

AnnotationSet load_gt(const Command& cmd, std::ostream& err) {
  std::vector<std::string> warnings;
  ParseOptions options;
  options.frame_size = cmd.frame_size;
  auto gt = load_annotations(cmd.gt_path, &warnings, options);
  constexpr std::size_t kShown = 20;
  for (std::size_t i = 0; i < warnings.size() && i < kShown; ++i) fmt::print(err, "warning: {}\n", warnings[i]);
  if (warnings.size() > kShown) fmt::print(err, "warning: ... {} more\n", warnings.size() - kShown);
  return gt;
}

/// Frames found under <images>/<video>/<frame>.<ext>, sorted.
AnnotationSet frames_from_images(const std::string& dir) {
  AnnotationSet frames;
  for (const auto& video : fs::directory_iterator(dir)) {
    if (!video.is_directory()) continue;
    for (const auto& file : fs::directory_iterator(video.path())) {
      const auto idx = parse_int(file.path().stem().string());
      if (idx && *idx >= 0) frames.push_back({video.path().filename().string(), *idx, {}});
    }
  }
  std::sort(frames.begin(), frames.end(), [](const FrameAnnotation& a, const FrameAnnotation& b) {
    return std::tie(a.video_id, a.frame_index) < std::tie(b.video_id, b.frame_index);
  });
  return frames;
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

template <class Emit>
std::string render(Emit&& emit) {
  std::ostringstream ss;
  emit(ss);
  return ss.str();
}

int do_validate(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto gt = load_gt(cmd, err);
  const auto stats = compute_class_stats(gt);
  const long long total = stats.total_people();
  fmt::print(out, "{:<16}{:>10}\n", "Class", "Frequency");
  fmt::print(out, "{:<16}{:>10}\n", "Driver", with_commas(stats.count(SeatRole::Driver)));
  fmt::print(out, "{:<16}{:>10}\n", "Passenger 1", with_commas(stats.count(SeatRole::Passenger1)));
  fmt::print(out, "{:<16}{:>10}\n", "Passenger 2", with_commas(stats.count(SeatRole::Passenger2)));
  fmt::print(out, "{:<16}{:>10}\n", "Child Passenger", with_commas(stats.count(SeatRole::Child)));
  fmt::print(out, "{:<16}{:>10}\n", "Total", with_commas(total));
  fmt::print(out, "{:<16}{:>10}\n", "Helmeted", with_commas(stats.helmeted));
  fmt::print(out, "{:<16}{:>10}\n", "Unhelmeted", with_commas(stats.unhelmeted));
  fmt::print(out, "{:<16}{:>10}\n", "Motorcycles", with_commas(stats.motorcycles));
  fmt::print(out, "{:<16}{:>10}\n", "Frames", with_commas(static_cast<long long>(gt.size())));
  if (total > 0) {
    const auto naive = naive_helmet_baseline(stats);
    fmt::print(out, "naive helmet baseline: precision={} recall={}\n", ratio(naive.precision), ratio(naive.recall));
    try {
      const auto w = inverse_class_weights(stats);
      fmt::print(out, "inverse class weights: {:.4f} {:.4f} {:.4f} {:.4f}\n", w[0], w[1], w[2], w[3]);
    } catch (const DomainError& e) {
      fmt::print(err, "warning: {}\n", e.what());
    }
  }
  return kExitOk;
}

CascadeConfig cascade_config(const Command& cmd) {
  CascadeConfig cfg;
  cfg.frame_size = cmd.frame_size;
  cfg.person_dedup_iou = cmd.dedup_iou;
  if (cmd.threshold) cfg = cfg.with_threshold(*cmd.threshold);
  if (cmd.motorcycle_threshold) cfg.motorcycle_threshold = *cmd.motorcycle_threshold;
  if (cmd.person_threshold) cfg.person_threshold = *cmd.person_threshold;
  if (cmd.helmet_threshold) cfg.helmet_threshold = *cmd.helmet_threshold;
  cfg.validate();
  return cfg;
}

int do_cascade(const Command& cmd, std::ostream& out, std::ostream& err) {
  std::optional<AnnotationSet> gt;
  if (!cmd.gt_path.empty()) gt = load_gt(cmd, err);
  const AnnotationSet frames = gt ? *gt : frames_from_images(cmd.images_dir);
  auto backends = make_backends(cmd, gt ? &*gt : nullptr);
  const auto cfg = cascade_config(cmd);

  std::vector<CascadeOutput> outputs(frames.size());
  parallel_for(frames.size(), cmd.jobs, [&](std::size_t i) {
    outputs[i] = run_frame({frames[i].video_id, frames[i].frame_index, std::nullopt}, *backends.detector,
                           *backends.seats, cfg);
  });
  std::size_t riders = 0, motorcycles = 0;
  for (const auto& o : outputs) {
    motorcycles += o.motorcycles.size();
    riders += o.riders.size();
    for (const auto& note : o.notes) fmt::print(err, "note: {}: {}\n", o.frame.str(), note);
  }
  const std::string csv = render([&](std::ostream& s) { write_cascade_csv(s, outputs); });
  if (cmd.out == "-") {
    out << csv;
  } else {
    write_text_file(cmd.out, csv);
  }
  fmt::print(err, "{} frames, {} motorcycles, {} riders\n", frames.size(), motorcycles, riders);
  return kExitOk;
}

int do_eval(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto gt = load_gt(cmd, err);
  const auto dets = load_detection_csv(cmd.detections_path);
  const auto counts = evaluate_detections(gt, dets, cmd.threshold.value_or(0.0), cmd.iou_threshold, cmd.class_agnostic);
  const auto pr = precision_recall(counts, cmd.threshold.value_or(0.0));
  fmt::print(out, "precision={} recall={} tp={} fp={} fn={}\n", ratio(pr.precision), ratio(pr.recall), counts.tp,
             counts.fp, counts.fn);
  return kExitOk;
}

std::string started_at() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    if (const auto secs = parse_int(trim(epoch))) {
      const std::time_t t = *secs;
      std::tm tm{};
      gmtime_r(&t, &tm);
      char buf[32];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
      return buf;
    }
  }
  return utc_timestamp();
}

void write_reports(const SweepTable& table, const fs::path& dir, const std::string& suffix, std::ostream& err) {
  write_text_file(dir / ("pr" + suffix + ".csv"), render([&](std::ostream& s) { emit_pr_csv(table, s); }));
  try {
    write_text_file(dir / ("pr" + suffix + ".svg"), render([&](std::ostream& s) { emit_pr_svg(table, s); }));
  } catch (const DomainError& e) {
    fmt::print(err, "warning: no SVG written: {}\n", e.what());
  }
}

nlohmann::json table_file_json(const SweepTable& table) {
  auto j = table.to_json();
  j["manifest"].erase("started_at");
  return j;
}

int do_sweep(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto gt = load_gt(cmd, err);
  auto backends = make_backends(cmd, &gt);
  const fs::path dir = cmd.out;

  SweepConfig cfg;
  cfg.task = cmd.task;
  cfg.thresholds = cmd.thresholds;
  cfg.iou_threshold = cmd.iou_threshold;
  cfg.backend = cmd.backend;
  cfg.input_digest = sha256_hex(read_file(cmd.gt_path) + backends.digest_material);
  cfg.checkpoint_dir = dir / "checkpoints";
  cfg.jobs = cmd.jobs;
  cfg.cascade.frame_size = cmd.frame_size;

  SweepTable table;
  try {
    table = run_sweep(cfg, gt, *backends.detector, backends.seats.get());
  } catch (const SweepAborted& e) {
    fmt::print(err, "error: {}\n", e.what());
    write_text_file(dir / "table.partial.json", table_file_json(e.partial()).dump(2) + "\n");
    write_reports(e.partial(), dir, ".partial", err);
    fmt::print(err, "partial results in {}; re-run to resume from checkpoints\n", dir.string());
    return kExitFailure;
  }
  table.manifest["started_at"] = started_at();

  write_text_file(dir / "manifest.json", table.manifest.dump(2) + "\n");
  write_text_file(dir / "table.json", table_file_json(table).dump(2) + "\n");
  write_reports(table, dir, "", err);

  fmt::print(out, "{}\n", table.task);
  fmt::print(out, "{:>9} {:>10} {:>10}\n", "threshold", "precision", "recall");
  for (const auto& r : table.rows) {
    fmt::print(out, "{:>9.4f} {:>10} {:>10}\n", r.point.threshold, ratio(r.point.precision), ratio(r.point.recall));
  }
  if (table.ap) {
    fmt::print(out, "AP={:.4f}\n", *table.ap);
  } else {
    fmt::print(err, "warning: no points; AP undefined\n");
  }
  return kExitOk;
}

int do_report(const Command& cmd, std::ostream& out, std::ostream& err) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(cmd.table_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, cmd.table_path + ": " + e.what());
  }
  auto table = SweepTable::from_json(j);
  table.update_ap();
  write_reports(table, cmd.out, "", err);
  fmt::print(out, "{}: {} rows, AP={}\n", table.task, table.rows.size(), ratio(table.ap));
  return kExitOk;
}

int do_synth(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto gt = load_gt(cmd, err);
  SyntheticDetector synthetic(gt, cmd.noise, cmd.frame_size);
  RecordingDetector recorder(synthetic);
  GroundTruthSeatClassifier gt_seats(gt);
  RecordingSeatClassifier seat_recorder(gt_seats);
  CascadeConfig cfg = CascadeConfig{}.with_threshold(0.0);
  cfg.frame_size = cmd.frame_size;

  parallel_for(gt.size(), cmd.jobs, [&](std::size_t i) {
    const ImageKey key{gt[i].video_id, gt[i].frame_index, std::nullopt};
    (void)run_frame(key, recorder, seat_recorder, cfg);
    std::vector<Box> persons;
    for (const auto& obj : gt[i].objects) {
      if (obj.cls.is_person()) persons.push_back(obj.box);
    }
    (void)classify_helmet_on_gt(key, persons, recorder, 0.0, cfg.frame_size, cfg.min_crop_px);
  });

  const auto records = recorder.records();
  write_text_file(cmd.out, render([&](std::ostream& s) {
                    for (const auto& r : records) write_replay_record(s, r);
                  }));
  if (!cmd.seats_out.empty()) {
    write_text_file(cmd.seats_out, render([&](std::ostream& s) { seat_recorder.snapshot().serialize(s); }));
  }
  fmt::print(out, "{} replay records for {} frames\n", records.size(), gt.size());
  return kExitOk;
}

}  // namespace

int execute(const Command& cmd, std::ostream& out, std::ostream& err) {
  try {
    switch (cmd.verb) {
      case Verb::Validate: return do_validate(cmd, out, err);
      case Verb::Cascade: return do_cascade(cmd, out, err);
      case Verb::Eval: return do_eval(cmd, out, err);
      case Verb::Sweep: return do_sweep(cmd, out, err);
      case Verb::Report: return do_report(cmd, out, err);
      case Verb::Synth: return do_synth(cmd, out, err);
    }
  } catch (const UsageError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  auto parsed = parse_args(argc, argv);
  if (!parsed.command) {
    (parsed.exit_code == kExitOk ? out : err) << parsed.message;
    return parsed.exit_code;
  }
  return execute(*parsed.command, out, err);
}

}  // namespace helmetcv::cli
