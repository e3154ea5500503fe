#include "fedsamp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "fedsamp/errors.hpp"
#include "fedsamp/rng.hpp"

namespace fedsamp {

RunConfig Instance::run_config(const ExperimentConfig& cfg) const {
  RunConfig rc;
  rc.clients = &clients;
  rc.p = &train.p;
  rc.profile = &profile;
  rc.K = cfg.K;
  rc.E = cfg.E;
  rc.batch_size = cfg.batch_size;
  rc.lambda = cfg.lambda;
  rc.lr = cfg.lr;
  rc.master_seed = master_seed;
  if (test_features.rows() > 0) {
    rc.test_features = &test_features;
    rc.test_labels = &test_labels;
  }
  return rc;
}

Instance build_instance(const ExperimentConfig& cfg, std::uint64_t seed) {
  Instance inst;
  inst.master_seed = seed;

  ClientPartition all;
  if (cfg.dataset_kind == "synthetic") {
    auto [ds, part] = generate_synthetic(cfg.synthetic_alpha, cfg.synthetic_beta, cfg.clients,
                                         cfg.synthetic_dim, cfg.synthetic_classes,
                                         derive_seed(seed, Stream::kData), cfg.synthetic_samples,
                                         cfg.partition_exponent);
    inst.dataset = std::move(ds);
    all = std::move(part);
  } else {
    inst.dataset = load_csv(cfg.csv_path);
    all = partition_power_law(inst.dataset, cfg.clients, cfg.partition_exponent,
                              {cfg.partition_classes_min, cfg.partition_classes_max},
                              derive_seed(seed, Stream::kPartition));
  }

  if (cfg.holdout > 0.0) {
    auto [train, holdout] = split_holdout(all, cfg.holdout, derive_seed(seed, Stream::kHoldout));
    inst.train = std::move(train);
    inst.holdout_rows = std::move(holdout);
    inst.test_features.resize(static_cast<Index>(inst.holdout_rows.size()), inst.dataset.dim());
    inst.test_labels.resize(inst.holdout_rows.size());
    for (size_t i = 0; i < inst.holdout_rows.size(); ++i) {
      inst.test_features.row(static_cast<Index>(i)) = inst.dataset.features.row(inst.holdout_rows[i]);
      inst.test_labels[i] = inst.dataset.labels[static_cast<size_t>(inst.holdout_rows[i])];
    }
  } else {
    inst.train = std::move(all);
  }

  inst.clients = gather_client_data(inst.dataset, inst.train);
  inst.profile = draw_profile(cfg.delay, cfg.clients, derive_seed(seed, Stream::kProfile));
  inst.w0 = ModelParams::zeros(inst.dataset.num_classes, static_cast<int>(inst.dataset.dim()));
  return inst;
}

EstimationOutcome run_estimation_phase(const ExperimentConfig& cfg, const Instance& instance,
                                       double target_loss, int round_cap) {
  const RunConfig rc = instance.run_config(cfg);
  const int n = static_cast<int>(instance.clients.size());

  // One full-participation round seeds every client's G estimate.
  RunResult probe = run_rounds(SamplingScheme::full(n), StopRule::fixed_rounds(1), rc,
                               instance.w0, GEstimates(n), 0);

  const double initial_loss = probe.initial_loss;
  const double gap = initial_loss - target_loss;
  if (!(gap > 0.0))
    throw EstimationError("initial loss is already at or below the target");

  std::vector<double> levels;
  for (double f : cfg.fs_fractions) levels.push_back(target_loss + f * gap);
  const double deepest = *std::min_element(levels.begin(), levels.end());

  RunResult uni = run_rounds(SamplingScheme::uniform(n), StopRule::target(deepest, round_cap),
                             rc, instance.w0, probe.g, 0);
  if (!uni.reached_target) {
    std::ostringstream msg;
    msg << "uniform estimation segment missed checkpoint " << deepest << " within " << round_cap
        << " rounds (loss " << uni.trace.back().global_loss << ")";
    throw EstimationError(msg.str());
  }
  RunResult wei = run_rounds(SamplingScheme::weighted(instance.train.p),
                             StopRule::target(deepest, round_cap), rc, instance.w0, uni.g, 0);
  if (!wei.reached_target) {
    std::ostringstream msg;
    msg << "weighted estimation segment missed checkpoint " << deepest << " within " << round_cap
        << " rounds (loss " << wei.trace.back().global_loss << ")";
    throw EstimationError(msg.str());
  }

  EstimationOutcome out;
  out.g = wei.g;
  const Vector g_values = out.g.values_filled();

  std::string first_error;
  for (double level : levels) {
    const auto r1 = uni.rounds_to_loss(level);
    const auto r2 = wei.rounds_to_loss(level);
    if (!r1 || !r2) continue;  // cannot happen for levels >= deepest, kept defensive
    out.rounds_uniform.push_back(*r1);
    out.rounds_weighted.push_back(*r2);
    try {
      out.per_level.push_back(estimate_alpha_beta(static_cast<double>(*r1),
                                                  static_cast<double>(*r2), instance.train.p,
                                                  g_values));
    } catch (const EstimationError& e) {
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (out.per_level.empty())
    throw EstimationError("no checkpoint produced a usable alpha/beta estimate: " +
                          (first_error.empty() ? std::string("no checkpoints crossed")
                                               : first_error));

  double sum = 0.0;
  for (double x : out.per_level) sum += x;
  out.alpha_over_beta = sum / static_cast<double>(out.per_level.size());
  if (out.per_level.size() > 1) {
    const auto [mn, mx] = std::minmax_element(out.per_level.begin(), out.per_level.end());
    out.levels_consistent = *mx <= 1.5 * *mn;
  }

  out.warm_params = wei.params;
  out.warm_round = static_cast<int>(wei.trace.size());
  out.simulated_time_s = probe.total_time_s + uni.total_time_s + wei.total_time_s;
  out.uniform_trace = std::move(uni.trace);
  out.weighted_trace = std::move(wei.trace);
  return out;
}

namespace {

SchemeOutcome outcome_from_run(SchemeKind kind, const RunResult& run, double target) {
  SchemeOutcome o;
  o.kind = kind;
  o.trace = run.trace;
  o.elapsed_time_s = run.total_time_s;
  const auto rounds = run.rounds_to_loss(target);
  if (rounds) {
    o.reached = true;
    o.rounds_to_target = *rounds;
    o.time_to_target_s = *run.time_to_loss(target);
    const RoundRecord& rec = run.trace[static_cast<size_t>(*rounds - 1)];
    o.accuracy_at_target = rec.test_accuracy;
    o.total_time_s = o.time_to_target_s;
  } else {
    o.total_time_s = o.elapsed_time_s;
    if (!run.trace.empty()) o.accuracy_at_target = run.trace.back().test_accuracy;
  }
  return o;
}

SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Instance inst = build_instance(cfg, seed);
  const RunConfig rc = inst.run_config(cfg);
  const int n = static_cast<int>(inst.clients.size());

  SeedOutcome out;
  out.seed = seed;

  // Resolve the target loss and round cap from a full-participation run.
  RunResult full_run;
  if (cfg.target_mode == "auto") {
    full_run = run_rounds(SamplingScheme::full(n), StopRule::fixed_rounds(cfg.target_probe_rounds),
                          rc, inst.w0, GEstimates(n), 0);
    double floor = full_run.trace.front().global_loss;
    for (const auto& rec : full_run.trace) floor = std::min(floor, rec.global_loss);
    out.target_loss = floor + cfg.target_fraction * (full_run.initial_loss - floor);
    out.initial_loss = full_run.initial_loss;
  } else {
    out.target_loss = cfg.target_loss;
    const int bootstrap_cap = cfg.round_cap > 0 ? cfg.round_cap : 6000;
    full_run = run_rounds(SamplingScheme::full(n), StopRule::target(out.target_loss, bootstrap_cap),
                          rc, inst.w0, GEstimates(n), 0);
    out.initial_loss = full_run.initial_loss;
  }
  const auto full_cross = full_run.rounds_to_loss(out.target_loss);
  if (cfg.round_cap > 0) {
    out.round_cap = cfg.round_cap;
  } else {
    const int base = full_cross ? *full_cross : cfg.target_probe_rounds;
    out.round_cap = std::clamp(20 * base, 600, 6000);
  }

  // Shared one-round probe: G values for the statistical baseline (offline
  // knowledge, so its simulated time is not charged to that scheme).
  RunResult g_probe = run_rounds(SamplingScheme::full(n), StopRule::fixed_rounds(1), rc, inst.w0,
                                 GEstimates(n), 0);

  for (SchemeKind kind : cfg.schemes) {
    switch (kind) {
      case SchemeKind::kFull: {
        out.schemes.push_back(outcome_from_run(kind, full_run, out.target_loss));
        break;
      }
      case SchemeKind::kUniform: {
        RunResult run = run_rounds(SamplingScheme::uniform(n),
                                   StopRule::target(out.target_loss, out.round_cap), rc, inst.w0,
                                   GEstimates(n), 0);
        out.schemes.push_back(outcome_from_run(kind, run, out.target_loss));
        break;
      }
      case SchemeKind::kWeighted: {
        RunResult run = run_rounds(SamplingScheme::weighted(inst.train.p),
                                   StopRule::target(out.target_loss, out.round_cap), rc, inst.w0,
                                   GEstimates(n), 0);
        out.schemes.push_back(outcome_from_run(kind, run, out.target_loss));
        break;
      }
      case SchemeKind::kStatistical: {
        RunResult run = run_rounds(
            SamplingScheme::statistical(inst.train.p, g_probe.g.values_filled()),
            StopRule::target(out.target_loss, out.round_cap), rc, inst.w0, GEstimates(n), 0);
        out.schemes.push_back(outcome_from_run(kind, run, out.target_loss));
        break;
      }
      case SchemeKind::kProposed: {
        SchemeOutcome o;
        o.kind = kind;
        try {
          EstimationOutcome est = run_estimation_phase(cfg, inst, out.target_loss, out.round_cap);
          BoundParams bp;
          bp.alpha_over_beta = est.alpha_over_beta;
          bp.g = est.g.values_filled();
          bp.p = inst.train.p;
          bp.K = cfg.K;
          bp.E = cfg.E;
          SamplingSolution sol = optimize_sampling(bp, inst.profile, cfg.epsilon0);
          out.proposed_solution = sol;

          const SamplingScheme scheme = SamplingScheme::proposed(sol.q);
          RunResult run =
              cfg.cold_restart
                  ? run_rounds(scheme, StopRule::target(out.target_loss, out.round_cap), rc,
                               inst.w0, est.g, 0)
                  : run_rounds(scheme, StopRule::target(out.target_loss, out.round_cap), rc,
                               est.warm_params, est.g, est.warm_round);
          o = outcome_from_run(kind, run, out.target_loss);
          o.estimation_time_s = est.simulated_time_s;
          o.total_time_s += est.simulated_time_s;
          out.estimation = std::move(est);
        } catch (const Error& e) {
          o.reached = false;
          o.total_time_s = 0.0;
          out.proposed_failure = e.what();
        }
        out.schemes.push_back(std::move(o));
        break;
      }
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

ComparisonReport run_comparison(const ExperimentConfig& cfg) {
  validate_config(cfg);

  unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(cfg.seeds.size()));

  ComparisonReport report;
  report.seeds.resize(cfg.seeds.size());

  if (workers <= 1) {
    for (size_t i = 0; i < cfg.seeds.size(); ++i) report.seeds[i] = run_seed(cfg, cfg.seeds[i]);
    return report;
  }

  for (size_t begin = 0; begin < cfg.seeds.size(); begin += workers) {
    const size_t end = std::min(begin + workers, cfg.seeds.size());
    std::vector<std::future<SeedOutcome>> futures;
    for (size_t i = begin; i < end; ++i)
      futures.push_back(std::async(std::launch::async, run_seed, std::cref(cfg), cfg.seeds[i]));
    for (size_t i = begin; i < end; ++i) report.seeds[i] = futures[i - begin].get();
  }
  return report;
}

std::vector<SchemeSummary> summarize(const ComparisonReport& report) {
  std::vector<SchemeSummary> rows;
  if (report.seeds.empty()) return rows;

  std::optional<double> proposed_total;

  for (size_t s = 0; s < report.seeds.front().schemes.size(); ++s) {
    SchemeSummary row;
    row.kind = report.seeds.front().schemes[s].kind;
    std::vector<double> rounds, times, totals, accs, ests;
    for (const auto& seed : report.seeds) {
      const SchemeOutcome& o = seed.schemes[s];
      ++row.seeds_total;
      if (!o.reached) continue;
      ++row.seeds_reached;
      rounds.push_back(static_cast<double>(o.rounds_to_target));
      times.push_back(o.time_to_target_s);
      totals.push_back(o.total_time_s);
      ests.push_back(o.estimation_time_s);
      if (o.accuracy_at_target) accs.push_back(*o.accuracy_at_target);
    }
    row.rounds_mean = mean_of(rounds);
    row.time_mean_s = mean_of(times);
    row.time_std_s = sample_std(times);
    row.estimation_mean_s = mean_of(ests);
    row.total_mean_s = mean_of(totals);
    row.total_std_s = sample_std(totals);
    row.accuracy_mean = mean_of(accs);
    if (row.kind == SchemeKind::kProposed && row.seeds_reached > 0)
      proposed_total = row.total_mean_s;
    rows.push_back(std::move(row));
  }
  for (SchemeSummary& row : rows) {
    if (proposed_total && row.seeds_reached > 0 && *proposed_total > 0.0)
      row.ratio_vs_proposed = row.total_mean_s / *proposed_total;
  }
  return rows;
}

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string multiset_field(const Multiset& ms) {
  std::string out;
  for (const auto& [client, mult] : ms.members)
    for (int i = 0; i < mult; ++i) {
      if (!out.empty()) out.push_back(';');
      out += std::to_string(client);
    }
  return out;
}

}  // namespace

void emit_outputs(const ComparisonReport& report, const ExperimentConfig& cfg,
                  const std::string& outdir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) throw Error("cannot create output directory " + outdir + ": " + ec.message());

  const std::string rounds_path = (fs::path(outdir) / "rounds.csv").string();
  {
    std::ofstream out(rounds_path, std::ios::binary);
    if (!out) throw Error("cannot write " + rounds_path);
    out << "seed,scheme,round,sampled_ids,round_time_s,cumulative_time_s,global_loss,"
           "test_accuracy\n";
    for (const auto& seed : report.seeds) {
      for (const auto& scheme : seed.schemes) {
        for (const auto& rec : scheme.trace) {
          out << seed.seed << ',' << scheme_name(scheme.kind) << ',' << rec.round << ','
              << multiset_field(rec.sampled) << ',' << fmt_g(rec.round_time_s) << ','
              << fmt_g(rec.cumulative_time_s) << ',' << fmt_g(rec.global_loss) << ',';
          if (rec.test_accuracy) out << fmt_g(*rec.test_accuracy);
          out << '\n';
        }
      }
    }
    if (!out) throw Error("write failed for " + rounds_path);
  }

  const std::string report_path = (fs::path(outdir) / "report.csv").string();
  {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw Error("cannot write " + report_path);
    out << "scheme,seeds_total,seeds_reached,rounds_mean,time_to_target_mean_s,"
           "time_to_target_std_s,estimation_time_mean_s,total_time_mean_s,total_time_std_s,"
           "accuracy_mean,ratio_vs_proposed\n";
    for (const auto& row : summarize(report)) {
      out << scheme_name(row.kind) << ',' << row.seeds_total << ',' << row.seeds_reached << ',';
      if (row.seeds_reached == 0) {
        out << "NA,NA,NA,NA,NA,NA,NA,NA\n";
        continue;
      }
      out << fmt_g(row.rounds_mean) << ',' << fmt_g(row.time_mean_s) << ','
          << fmt_g(row.time_std_s) << ',' << fmt_g(row.estimation_mean_s) << ','
          << fmt_g(row.total_mean_s) << ',' << fmt_g(row.total_std_s) << ','
          << fmt_g(row.accuracy_mean) << ',';
      if (row.ratio_vs_proposed)
        out << fmt_g(*row.ratio_vs_proposed);
      else
        out << "NA";
      out << '\n';
    }
    if (!out) throw Error("write failed for " + report_path);
  }

  const std::string config_path = (fs::path(outdir) / "config.resolved").string();
  {
    std::ofstream out(config_path, std::ios::binary);
    if (!out) throw Error("cannot write " + config_path);
    out << resolved_text(cfg);
    for (const auto& seed : report.seeds) {
      out << "# seed " << seed.seed << ": target_loss = " << fmt_g(seed.target_loss)
          << ", initial_loss = " << fmt_g(seed.initial_loss) << ", round_cap = " << seed.round_cap;
      if (!seed.proposed_failure.empty()) out << ", proposed_failure = " << seed.proposed_failure;
      out << "\n";
    }
    if (!out) throw Error("write failed for " + config_path);
  }
}

}  // namespace fedsamp
