#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "helmetcv/cascade.hpp"
#include "helmetcv/detector.hpp"
#include "helmetcv/sweep.hpp"

namespace helmetcv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

enum class Verb { Validate, Cascade, Eval, Sweep, Report, Synth };

struct Command {
  Verb verb = Verb::Validate;

  std::string gt_path;
  /// `replay:<path>`, `synth:<noise config>` or `remote:<url>`.
  std::string backend;
  /// `none`, `gt`, `fixed:<role>`, `replay:<path>` or `remote:<url>`.
  std::string seats = "none";
  std::string images_dir;
  std::string out;
  std::size_t jobs = 1;

  // cascade / eval
  std::optional<double> threshold;
  std::optional<double> motorcycle_threshold;
  std::optional<double> person_threshold;
  std::optional<double> helmet_threshold;
  double iou_threshold = kDefaultIouThreshold;
  double dedup_iou = 0.9;
  std::string detections_path;
  bool class_agnostic = false;

  // sweep / report
  SweepTask task = SweepTask::MotorcycleDetection;
  std::vector<double> thresholds;
  std::string table_path;

  // synth
  NoiseConfig noise;
  std::string noise_config_path;
  std::string seats_out;

  ImageSize frame_size = kFrameSize;
};

struct ParseOutcome {
  std::optional<Command> command;
  int exit_code = kExitOk;
  /// Help or error text for the caller to print.
  std::string message;
};

ParseOutcome parse_args(int argc, const char* const* argv);

/// Runs a parsed command. Results go to files or `out`; diagnostics go to `err`.
int execute(const Command& cmd, std::ostream& out, std::ostream& err);

/// parse_args + execute, the whole program.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace helmetcv::cli
