#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsamp/engine.hpp"
#include "fedsamp/timing.hpp"

namespace fedsamp {

inline constexpr const char* kVersion = "fedsamp 0.1.0";

/// Flat key-value experiment configuration. See README for the key list.
struct ExperimentConfig {
  // dataset
  std::string dataset_kind = "synthetic";  // synthetic | csv
  double synthetic_alpha = 1.0;
  double synthetic_beta = 1.0;
  int synthetic_dim = 60;
  int synthetic_classes = 10;
  int synthetic_samples = 20509;
  std::string csv_path;
  int clients = 100;
  double partition_exponent = 1.5;
  int partition_classes_min = 1;
  int partition_classes_max = 10;
  double holdout = 0.25;

  // training
  int K = 10;
  int E = 50;
  int batch_size = 24;
  double lambda = 1e-4;
  LrSchedule lr;

  // delays
  DelaySpec delay = DelaySpec::exponential(1.0);

  // experiment
  std::vector<SchemeKind> schemes = {SchemeKind::kProposed, SchemeKind::kUniform,
                                     SchemeKind::kWeighted, SchemeKind::kStatistical,
                                     SchemeKind::kFull};
  std::vector<std::uint64_t> seeds = {1};
  std::string target_mode = "auto";  // auto | absolute
  double target_loss = 0.0;          // absolute mode
  double target_fraction = 0.15;     // auto mode: floor + fraction * (init - floor)
  int target_probe_rounds = 300;     // auto mode probe length
  std::vector<double> fs_fractions = {0.85, 0.70};  // checkpoints as fractions of the gap
  double epsilon0 = 0.0;             // 0 -> (t_N - t_1) / 200
  int round_cap = 0;                 // 0 -> 20x the full-participation crossing
  bool cold_restart = false;
  int threads = 0;                   // 0 -> hardware concurrency
  std::string out_dir = "out";
};

/// Parses `key = value` lines; '#' starts a comment; unknown keys throw.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

/// Applies one `key=value` override on top of a parsed config.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Structural validation (K <= N, fractions in range, ...).
void validate_config(const ExperimentConfig& cfg);

/// Canonical text form of the fully resolved configuration.
std::string resolved_text(const ExperimentConfig& cfg);

SchemeKind scheme_from_name(const std::string& name);

}  // namespace fedsamp
