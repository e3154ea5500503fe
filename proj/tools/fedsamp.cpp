#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsamp/config.hpp"
#include "fedsamp/harness.hpp"
#include "fedsamp/verify.hpp"

namespace {

int run_experiment(const std::string& config_path, const std::string& seeds,
                   const std::string& schemes, const std::string& out_dir, bool cold_restart) {
  fedsamp::ExperimentConfig cfg = fedsamp::load_config_file(config_path);
  if (!seeds.empty()) fedsamp::apply_override(cfg, "seeds", seeds);
  if (!schemes.empty()) fedsamp::apply_override(cfg, "schemes", schemes);
  if (!out_dir.empty()) fedsamp::apply_override(cfg, "out", out_dir);
  if (cold_restart) fedsamp::apply_override(cfg, "cold_restart", "true");
  fedsamp::validate_config(cfg);

  const fedsamp::ComparisonReport report = fedsamp::run_comparison(cfg);
  fedsamp::emit_outputs(report, cfg, cfg.out_dir);

  std::printf("%-12s %8s %14s %14s %14s %10s\n", "scheme", "reached", "rounds(mean)",
              "time-to-loss", "total-time", "vs-prop");
  for (const auto& row : fedsamp::summarize(report)) {
    if (row.seeds_reached == 0) {
      std::printf("%-12s %4d/%-3d %14s %14s %14s %10s\n",
                  fedsamp::scheme_name(row.kind).c_str(), row.seeds_reached, row.seeds_total,
                  "NA", "NA", "NA", "NA");
      continue;
    }
    char ratio[24] = "NA";
    if (row.ratio_vs_proposed) std::snprintf(ratio, sizeof(ratio), "%.2fx", *row.ratio_vs_proposed);
    std::printf("%-12s %4d/%-3d %14.1f %13.2fs %13.2fs %10s\n",
                fedsamp::scheme_name(row.kind).c_str(), row.seeds_reached, row.seeds_total,
                row.rounds_mean, row.time_mean_s, row.total_mean_s, ratio);
  }
  std::printf("outputs written to %s\n", cfg.out_dir.c_str());
  return 0;
}

int run_verify() {
  const std::vector<fedsamp::CheckResult> results = fedsamp::run_verification_suite();
  for (const auto& r : results)
    std::printf("[%s] %-28s (%.2fs) %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.c_str());
  return fedsamp::all_passed(results) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning client-sampling simulator"};
  app.require_subcommand(1);

  std::string config_path, seeds, schemes, out_dir;
  bool cold_restart = false;
  CLI::App* run = app.add_subcommand("run", "Run the configured experiment");
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_option("--seeds", seeds, "Override: comma-separated master seeds");
  run->add_option("--schemes", schemes, "Override: comma-separated schemes");
  run->add_option("--out", out_dir, "Override: output directory");
  run->add_flag("--cold-restart", cold_restart,
                "Restart the proposed scheme from the initial model instead of continuing");

  CLI::App* verify = app.add_subcommand("verify", "Run the oracle and property suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_experiment(config_path, seeds, schemes, out_dir, cold_restart);
    if (verify->parsed()) return run_verify();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
