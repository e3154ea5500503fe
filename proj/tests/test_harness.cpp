#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fedsamp/config.hpp"
#include "fedsamp/errors.hpp"
#include "fedsamp/harness.hpp"

using namespace fedsamp;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.clients = 8;
  cfg.synthetic_dim = 6;
  cfg.synthetic_classes = 3;
  cfg.synthetic_samples = 600;
  cfg.K = 2;
  cfg.E = 5;
  cfg.batch_size = 8;
  cfg.lr.eta0 = 0.1;
  cfg.delay = DelaySpec::exponential(1.0);
  cfg.seeds = {11, 12};
  cfg.target_mode = "auto";
  cfg.target_fraction = 0.35;
  cfg.target_probe_rounds = 60;
  cfg.holdout = 0.25;
  cfg.threads = 1;
  return cfg;
}

int count_distinct(const std::vector<RoundRecord>& trace) {
  int total = 0;
  for (const auto& rec : trace) total += static_cast<int>(rec.sampled.members.size());
  return total;
}

}  // namespace

TEST_CASE("config parsing, overrides and validation") {
  const std::string text =
      "# comment\n"
      "dataset = synthetic\n"
      "clients = 12\n"
      "K = 3            # inline comment\n"
      "lambda = 5e-4\n"
      "delay.dist = uniform\n"
      "delay.lo = 0.187\n"
      "delay.hi = 7.159\n"
      "schemes = uniform,full\n"
      "seeds = 4,5,6\n"
      "fs.fractions = 0.9,0.6\n";
  ExperimentConfig cfg = parse_config_text(text);
  CHECK(cfg.clients == 12);
  CHECK(cfg.K == 3);
  CHECK(cfg.lambda == 5e-4);
  CHECK(cfg.delay.kind == DelayDistribution::kUniformRange);
  CHECK(cfg.schemes.size() == 2);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(cfg.fs_fractions == std::vector<double>{0.9, 0.6});
  validate_config(cfg);

  apply_override(cfg, "seeds", "9");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{9});

  CHECK_THROWS_AS(parse_config_text("no_such_key = 1\n"), ArgumentError);
  CHECK_THROWS_AS(parse_config_text("clients\n"), ParseError);
  CHECK_THROWS_AS(parse_config_text("clients = soon\n"), ArgumentError);

  ExperimentConfig bad = cfg;
  bad.K = 99;
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);
  bad = cfg;
  bad.fs_fractions = {1.5};
  CHECK_THROWS_AS(validate_config(bad), ArgumentError);
}

TEST_CASE("resolved config text reparses to the same settings") {
  ExperimentConfig cfg = tiny_config();
  cfg.epsilon0 = 0.01;
  cfg.cold_restart = true;
  const ExperimentConfig back = parse_config_text(resolved_text(cfg));
  CHECK(back.clients == cfg.clients);
  CHECK(back.K == cfg.K);
  CHECK(back.epsilon0 == cfg.epsilon0);
  CHECK(back.cold_restart == cfg.cold_restart);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.target_fraction == cfg.target_fraction);
  CHECK(back.delay.kind == cfg.delay.kind);
  CHECK(back.schemes.size() == cfg.schemes.size());
}

TEST_CASE("instances are a pure function of config and seed") {
  const ExperimentConfig cfg = tiny_config();
  const Instance a = build_instance(cfg, 11);
  const Instance b = build_instance(cfg, 11);
  CHECK((a.dataset.features - b.dataset.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.train.assignments == b.train.assignments);
  CHECK((a.profile.sorted_times() - b.profile.sorted_times()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.holdout_rows == b.holdout_rows);

  // Holdout rows never appear in the train partition.
  std::set<int> held(a.holdout_rows.begin(), a.holdout_rows.end());
  for (const auto& rows : a.train.assignments)
    for (int r : rows) CHECK(held.count(r) == 0);
}

TEST_CASE("estimation phase produces a usable ratio and bookkeeping") {
  const ExperimentConfig cfg = tiny_config();
  const Instance inst = build_instance(cfg, 21);
  const RunConfig rc = inst.run_config(cfg);
  const int n = static_cast<int>(inst.clients.size());

  // Pick a mid-trajectory target from a short full-participation run.
  const RunResult probe = run_rounds(SamplingScheme::full(n), StopRule::fixed_rounds(40), rc,
                                     inst.w0, GEstimates(n), 0);
  double floor = probe.trace.back().global_loss;
  for (const auto& rec : probe.trace) floor = std::min(floor, rec.global_loss);
  const double target = floor + 0.3 * (probe.initial_loss - floor);

  const EstimationOutcome est = run_estimation_phase(cfg, inst, target, 2000);
  CHECK(est.alpha_over_beta > 0.0);
  CHECK(est.per_level.size() >= 1);
  CHECK(est.simulated_time_s > 0.0);
  CHECK(est.warm_round == static_cast<int>(est.weighted_trace.size()));

  // Every client was observed by the probe round, then once per distinct
  // sampled appearance in the two segments.
  const long expected = n + count_distinct(est.uniform_trace) + count_distinct(est.weighted_trace);
  CHECK(est.g.total_observations() == expected);
  for (int i = 0; i < n; ++i) CHECK(est.g.counts()[i] >= 1);

  // The warm model made progress toward the deepest checkpoint.
  CHECK(est.weighted_trace.back().global_loss < probe.initial_loss);
}

TEST_CASE("estimation with exactly uniform weights is flagged as degenerate") {
  ExperimentConfig cfg = tiny_config();
  cfg.partition_exponent = 0.0;  // equal client sizes
  cfg.holdout = 0.0;
  cfg.clients = 4;
  cfg.synthetic_samples = 400;

  const Instance inst = build_instance(cfg, 3);
  REQUIRE((inst.train.p - Vector::Constant(4, 0.25)).cwiseAbs().maxCoeff() == 0.0);

  const RunConfig rc = inst.run_config(cfg);
  const RunResult probe = run_rounds(SamplingScheme::full(4), StopRule::fixed_rounds(30), rc,
                                     inst.w0, GEstimates(4), 0);
  double floor = probe.trace.back().global_loss;
  for (const auto& rec : probe.trace) floor = std::min(floor, rec.global_loss);
  const double target = floor + 0.3 * (probe.initial_loss - floor);

  CHECK_THROWS_AS(run_estimation_phase(cfg, inst, target, 2000), EstimationError);
}

TEST_CASE("comparison runs every scheme and emits reproducible outputs") {
  const ExperimentConfig cfg = tiny_config();
  const ComparisonReport report = run_comparison(cfg);
  REQUIRE(report.seeds.size() == 2);

  for (const auto& seed : report.seeds) {
    REQUIRE(seed.schemes.size() == cfg.schemes.size());
    CHECK(seed.target_loss > 0.0);
    CHECK(seed.target_loss < seed.initial_loss);
    for (const auto& scheme : seed.schemes) {
      INFO("scheme ", scheme_name(scheme.kind), " seed ", seed.seed);
      CHECK(scheme.reached);
      CHECK(scheme.trace.size() >= 1);
      // Cumulative time equals the sum of the per-round times.
      double acc = 0.0;
      for (const auto& rec : scheme.trace) {
        acc += rec.round_time_s;
        CHECK(rec.cumulative_time_s == doctest::Approx(acc).epsilon(1e-9));
      }
      if (scheme.kind == SchemeKind::kProposed) {
        CHECK(scheme.estimation_time_s > 0.0);
        CHECK(scheme.total_time_s ==
              doctest::Approx(scheme.estimation_time_s + scheme.time_to_target_s).epsilon(1e-12));
      } else {
        CHECK(scheme.estimation_time_s == 0.0);
      }
    }
    CHECK(seed.proposed_failure.empty());
    CHECK(seed.estimation.has_value());
    CHECK(seed.proposed_solution.has_value());
    CHECK(std::abs(seed.proposed_solution->q.sum() - 1.0) <= 1e-9);
  }

  const auto rows = summarize(report);
  REQUIRE(rows.size() == cfg.schemes.size());
  for (const auto& row : rows) {
    CHECK(row.seeds_reached == 2);
    if (row.kind != SchemeKind::kProposed) CHECK(row.ratio_vs_proposed.has_value());
  }

  // Byte-identical outputs across two emissions of two identical runs.
  namespace fs = std::filesystem;
  const std::string dir_a = (fs::temp_directory_path() / "fedsamp_out_a").string();
  const std::string dir_b = (fs::temp_directory_path() / "fedsamp_out_b").string();
  emit_outputs(report, cfg, dir_a);
  const ComparisonReport again = run_comparison(cfg);
  emit_outputs(again, cfg, dir_b);
  CHECK(slurp(dir_a + "/rounds.csv") == slurp(dir_b + "/rounds.csv"));
  CHECK(slurp(dir_a + "/report.csv") == slurp(dir_b + "/report.csv"));

  // Report times recompute from rounds.csv (plus the estimation breakdown).
  {
    std::istringstream in(slurp(dir_a + "/rounds.csv"));
    std::string line;
    std::getline(in, line);  // header
    std::map<std::pair<std::string, std::string>, double> crossing;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::string cur;
      for (char ch : line) {
        if (ch == ',') {
          f.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(ch);
        }
      }
      f.push_back(cur);
      REQUIRE(f.size() == 8);
      const std::string& seed_s = f[0];
      const std::string& scheme = f[1];
      const double cumulative = std::stod(f[5]);
      const double loss = std::stod(f[6]);
      double target = 0.0;
      for (const auto& seed : report.seeds)
        if (std::to_string(seed.seed) == seed_s) target = seed.target_loss;
      const auto key = std::make_pair(seed_s, scheme);
      if (loss <= target && crossing.find(key) == crossing.end()) crossing[key] = cumulative;
    }
    // Mean total per scheme, estimation charged to the proposed scheme.
    std::map<std::string, double> totals;
    for (const auto& seed : report.seeds) {
      for (const auto& scheme : seed.schemes) {
        double t = crossing.at({std::to_string(seed.seed), scheme_name(scheme.kind)});
        if (scheme.kind == SchemeKind::kProposed) t += scheme.estimation_time_s;
        totals[scheme_name(scheme.kind)] += t / static_cast<double>(report.seeds.size());
      }
    }
    for (const auto& row : rows) {
      if (!row.ratio_vs_proposed) continue;
      const double recomputed = totals.at(scheme_name(row.kind)) / totals.at("proposed");
      CHECK(std::abs(recomputed - *row.ratio_vs_proposed) <= 1e-9);
    }
  }

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("empty report emits header-only files") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "fedsamp_out_empty").string();
  emit_outputs(ComparisonReport{}, tiny_config(), dir);
  const std::string rounds = slurp(dir + "/rounds.csv");
  CHECK(rounds ==
        "seed,scheme,round,sampled_ids,round_time_s,cumulative_time_s,global_loss,test_accuracy\n");
  const std::string report = slurp(dir + "/report.csv");
  CHECK(report.find('\n') == report.size() - 1);  // single header line
  fs::remove_all(dir);
}
