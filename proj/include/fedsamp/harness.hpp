#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedsamp/config.hpp"
#include "fedsamp/dataset.hpp"
#include "fedsamp/engine.hpp"
#include "fedsamp/optimizer.hpp"

namespace fedsamp {

/// Everything one seed's runs share: dataset, train/holdout split, gathered
/// client blocks, delay profile and the initial model. Schemes compared
/// under the same seed all see identical copies of these.
struct Instance {
  Dataset dataset;
  ClientPartition train;
  std::vector<int> holdout_rows;
  Matrix test_features;
  std::vector<int> test_labels;
  std::vector<ClientData> clients;
  SystemProfile profile;
  ModelParams w0;
  std::uint64_t master_seed = 0;

  RunConfig run_config(const ExperimentConfig& cfg) const;
};

Instance build_instance(const ExperimentConfig& cfg, std::uint64_t seed);

/// Result of the two-baseline estimation pass: the averaged alpha/beta
/// ratio, accumulated G estimates, the model at the deepest checkpoint for
/// warm continuation, and the simulated time the pass consumed.
struct EstimationOutcome {
  double alpha_over_beta = 0.0;
  std::vector<double> per_level;         // valid per-level ratio estimates
  std::vector<int> rounds_uniform;       // rounds to each checkpoint
  std::vector<int> rounds_weighted;
  bool levels_consistent = true;         // valid estimates within 50% of each other
  GEstimates g;
  ModelParams warm_params;
  int warm_round = 0;                    // next absolute round index
  double simulated_time_s = 0.0;         // probe + both baseline segments
  std::vector<RoundRecord> uniform_trace;
  std::vector<RoundRecord> weighted_trace;
};

/// Runs the estimation pass against `instance`: one full-participation probe
/// round (G for every client), then uniform and weighted sampling until the
/// deepest F_s checkpoint, recording per-checkpoint round counts and solving
/// for alpha/beta. Throws EstimationError when a segment misses the deepest
/// checkpoint or no checkpoint yields a valid ratio.
EstimationOutcome run_estimation_phase(const ExperimentConfig& cfg, const Instance& instance,
                                       double target_loss, int round_cap);

struct SchemeOutcome {
  SchemeKind kind = SchemeKind::kUniform;
  bool reached = false;
  int rounds_to_target = 0;           // valid when reached
  double time_to_target_s = 0.0;      // valid when reached
  double elapsed_time_s = 0.0;        // full trajectory time (cap time when NA)
  double estimation_time_s = 0.0;     // zero for baselines
  double total_time_s = 0.0;          // estimation + time to target (or elapsed when NA)
  std::optional<double> accuracy_at_target;
  std::vector<RoundRecord> trace;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  double target_loss = 0.0;
  double initial_loss = 0.0;
  int round_cap = 0;
  std::vector<SchemeOutcome> schemes;
  std::optional<EstimationOutcome> estimation;  // present when 'proposed' ran
  std::optional<SamplingSolution> proposed_solution;
  std::string proposed_failure;  // non-empty when estimation/optimization failed
};

struct ComparisonReport {
  std::vector<SeedOutcome> seeds;
};

/// Per-scheme aggregation over seeds for the report table.
struct SchemeSummary {
  SchemeKind kind = SchemeKind::kUniform;
  int seeds_total = 0;
  int seeds_reached = 0;
  double rounds_mean = 0.0;
  double time_mean_s = 0.0;
  double time_std_s = 0.0;
  double estimation_mean_s = 0.0;
  double total_mean_s = 0.0;
  double total_std_s = 0.0;
  double accuracy_mean = 0.0;
  std::optional<double> ratio_vs_proposed;  // total over proposed total
};

std::vector<SchemeSummary> summarize(const ComparisonReport& report);

/// Runs every configured scheme on every seed. Schemes within a seed share
/// the instance; seeds fan out over `cfg.threads` workers.
ComparisonReport run_comparison(const ExperimentConfig& cfg);

/// Writes rounds.csv, report.csv and config.resolved into `outdir`.
void emit_outputs(const ComparisonReport& report, const ExperimentConfig& cfg,
                  const std::string& outdir);

}  // namespace fedsamp
