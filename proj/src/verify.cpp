#include "fedsamp/verify.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "fedsamp/engine.hpp"
#include "fedsamp/model.hpp"
#include "fedsamp/optimizer.hpp"
#include "fedsamp/rng.hpp"
#include "fedsamp/timing.hpp"

namespace fedsamp {

namespace {

using Clock = std::chrono::steady_clock;

CheckResult timed(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
  CheckResult r;
  r.name = name;
  const auto start = Clock::now();
  try {
    auto [ok, detail] = fn();
    r.passed = ok;
    r.detail = detail;
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

Vector random_simplex(int n, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = unit(rng);
  return v / v.sum();
}

ModelParams random_params(int classes, int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelParams p = ModelParams::zeros(classes, dim);
  for (Index i = 0; i < p.weights.rows(); ++i)
    for (Index j = 0; j < p.weights.cols(); ++j) p.weights(i, j) = normal(rng);
  for (Index i = 0; i < p.bias.size(); ++i) p.bias[i] = normal(rng);
  return p;
}

// Enumerates all ordered K-tuples over N clients, invoking `body` with the
// tuple's probability and its multiset.
void for_each_tuple(const Vector& q, int K,
                    const std::function<void(double, const Multiset&)>& body) {
  const int n = static_cast<int>(q.size());
  std::vector<int> tuple(static_cast<size_t>(K), 0);
  while (true) {
    double prob = 1.0;
    std::map<int, int> counts;
    for (int k = 0; k < K; ++k) {
      prob *= q[tuple[static_cast<size_t>(k)]];
      counts[tuple[static_cast<size_t>(k)]] += 1;
    }
    Multiset ms;
    ms.members.assign(counts.begin(), counts.end());
    ms.total = K;
    body(prob, ms);

    int pos = K - 1;
    while (pos >= 0 && tuple[static_cast<size_t>(pos)] == n - 1) {
      tuple[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++tuple[static_cast<size_t>(pos)];
  }
}

std::pair<bool, std::string> check_unbiased_aggregation() {
  std::ostringstream detail;
  bool ok = true;

  // Exhaustive expectation over every multiset, N=3 K=2.
  {
    Rng rng = make_rng(20240301);
    const int n = 3, classes = 2, dim = 2, K = 2;
    const Vector p = random_simplex(n, rng);
    const Vector q = random_simplex(n, rng);
    const ModelParams server = random_params(classes, dim, rng);
    std::map<int, ModelParams> updates;
    for (int i = 0; i < n; ++i) updates.emplace(i, random_params(classes, dim, rng));

    ModelParams expectation = ModelParams::zeros(classes, dim);
    for_each_tuple(q, K, [&](double prob, const Multiset& ms) {
      const ModelParams agg = aggregate(server, updates, ms, q, K, p);
      expectation.weights += prob * agg.weights;
      expectation.bias += prob * agg.bias;
    });
    const ModelParams full = aggregate_full(updates, p);
    const double err = std::max((expectation.weights - full.weights).cwiseAbs().maxCoeff(),
                                (expectation.bias - full.bias).cwiseAbs().maxCoeff());
    ok = ok && err <= 1e-12;
    detail << "enumeration N=3 K=2 max err " << err;
  }

  // Monte Carlo at N=20, K=5.
  {
    Rng rng = make_rng(20240302);
    const int n = 20, classes = 2, dim = 3, K = 5, draws = 100000;
    const Vector p = random_simplex(n, rng);
    const Vector q = random_simplex(n, rng);
    const ModelParams server = random_params(classes, dim, rng);
    std::map<int, ModelParams> updates;
    for (int i = 0; i < n; ++i) updates.emplace(i, random_params(classes, dim, rng));
    const ModelParams full = aggregate_full(updates, p);

    const Index coords = static_cast<Index>(classes * dim + classes);
    Vector sum = Vector::Zero(coords), sum_sq = Vector::Zero(coords);
    for (int d = 0; d < draws; ++d) {
      const Multiset ms = sample_multiset(q, K, rng);
      const ModelParams agg = aggregate(server, updates, ms, q, K, p);
      Vector flat(coords);
      flat << Eigen::Map<const Vector>(agg.weights.data(), classes * dim), agg.bias;
      sum += flat;
      sum_sq += flat.cwiseProduct(flat);
    }
    Vector flat_full(coords);
    flat_full << Eigen::Map<const Vector>(full.weights.data(), classes * dim), full.bias;

    double worst_sigma = 0.0;
    for (Index c = 0; c < coords; ++c) {
      const double mean = sum[c] / draws;
      const double var = (sum_sq[c] / draws - mean * mean) / draws;
      const double se = std::sqrt(std::max(var, 1e-30));
      worst_sigma = std::max(worst_sigma, std::abs(mean - flat_full[c]) / se);
    }
    ok = ok && worst_sigma <= 3.0;
    detail << "; monte-carlo worst deviation " << worst_sigma << " se";
  }
  return {ok, detail.str()};
}

std::pair<bool, std::string> check_expected_round_time() {
  std::ostringstream detail;
  bool ok = true;
  Rng rng = make_rng(20240303);

  // Closed form vs exhaustive enumeration over every (N <= 5, K <= 3).
  double worst_enum = 0.0;
  for (int n = 1; n <= 5; ++n) {
    for (int K = 1; K <= 3; ++K) {
      for (int rep = 0; rep < 5; ++rep) {
        const Vector q = random_simplex(n, rng);
        std::vector<double> t(static_cast<size_t>(n));
        std::uniform_real_distribution<double> td(0.2, 5.0);
        for (auto& v : t) v = td(rng);
        const SystemProfile profile = SystemProfile::from_times(t);

        double expect = 0.0;
        for_each_tuple(q, K, [&](double prob, const Multiset& ms) {
          double worst = 0.0;
          for (const auto& [client, mult] : ms.members)
            worst = std::max(worst, t[static_cast<size_t>(client)]);
          expect += prob * worst;
        });
        worst_enum = std::max(worst_enum, std::abs(expect - expected_round_time(q, profile, K)));
      }
    }
  }
  ok = ok && worst_enum <= 1e-12;
  detail << "enumeration max err " << worst_enum;

  // Hand-checked three-client value.
  {
    Vector q(3);
    q << 0.2, 0.3, 0.5;
    const SystemProfile profile = SystemProfile::from_times({1.0, 2.0, 3.0});
    const double v = expected_round_time(q, profile, 2);
    ok = ok && std::abs(v - 2.71) <= 1e-12;
    detail << "; three-client value " << v;
  }

  // Monte Carlo at N=100, K=10.
  {
    const int n = 100, K = 10, draws = 1000000;
    const Vector q = random_simplex(n, rng);
    std::vector<double> t(static_cast<size_t>(n));
    std::exponential_distribution<double> td(1.0);
    for (auto& v : t) v = td(rng) + 1e-3;
    const SystemProfile profile = SystemProfile::from_times(t);

    double total = 0.0;
    for (int d = 0; d < draws; ++d)
      total += round_time(sample_multiset(q, K, rng), profile);
    const double mc = total / draws;
    const double closed = expected_round_time(q, profile, K);
    const double rel = std::abs(mc - closed) / closed;
    ok = ok && rel <= 0.005;
    detail << "; monte-carlo rel err " << rel;
  }
  return {ok, detail.str()};
}

std::pair<bool, std::string> check_approximation_exactness() {
  Rng rng = make_rng(20240304);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 2 + rep % 6;
    const Vector q = random_simplex(n, rng);

    // K = 1 with heterogeneous times.
    std::vector<double> t(static_cast<size_t>(n));
    std::uniform_real_distribution<double> td(0.2, 5.0);
    for (auto& v : t) v = td(rng);
    const SystemProfile het = SystemProfile::from_times(t);
    worst = std::max(worst, std::abs(expected_round_time(q, het, 1) -
                                     expected_round_time_approx(q, het)));

    // Homogeneous times with K > 1.
    const SystemProfile hom = SystemProfile::from_times(std::vector<double>(t.size(), 2.5));
    worst = std::max(worst, std::abs(expected_round_time(q, hom, 7) -
                                     expected_round_time_approx(q, hom)));
  }
  std::ostringstream detail;
  detail << "max |exact - approx| " << worst;
  return {worst <= 1e-12, detail.str()};
}

std::pair<bool, std::string> check_solver_reductions() {
  std::ostringstream detail;
  bool ok = true;
  Rng rng = make_rng(20240305);

  // Homogeneous delays: the optimizer must return the gradient-weighted
  // closed form regardless of alpha/beta.
  {
    const int n = 6;
    BoundParams bp;
    bp.p = random_simplex(n, rng);
    bp.g = Vector::Zero(n);
    std::uniform_real_distribution<double> gd(0.2, 3.0);
    for (int i = 0; i < n; ++i) bp.g[i] = gd(rng);
    bp.alpha_over_beta = 7.3;
    const SystemProfile profile = SystemProfile::from_times(std::vector<double>(n, 2.5));
    const SamplingSolution sol = optimize_sampling(bp, profile);
    const Vector expected = statistical_sampling_probs(bp.p, bp.g);
    const double err = (sol.q - expected).cwiseAbs().maxCoeff();
    ok = ok && err <= 1e-6;
    detail << "homogeneous reduction err " << err;
  }

  // beta/alpha -> 0: the optimizer must match the sqrt-delay closed form and
  // its objective must hit the Cauchy-Schwarz value.
  {
    const int n = 8;
    BoundParams bp;
    bp.p = random_simplex(n, rng);
    bp.g = Vector::Zero(n);
    std::uniform_real_distribution<double> gd(0.2, 3.0);
    for (int i = 0; i < n; ++i) bp.g[i] = gd(rng);
    bp.alpha_over_beta = 1e12;
    std::vector<double> t(static_cast<size_t>(n));
    for (size_t i = 0; i < t.size(); ++i) t[i] = 0.5 + 0.55 * static_cast<double>(i);
    const SystemProfile profile = SystemProfile::from_times(t);

    const SamplingSolution sol = optimize_sampling(bp, profile);
    const Vector expected = closed_form_small_beta(bp.p, bp.g, profile);
    const double err = (sol.q - expected).cwiseAbs().maxCoeff();
    ok = ok && err <= 1e-6;
    detail << "; small-beta reduction err " << err;

    double sum_qt = 0.0, sum_aq = 0.0, cs = 0.0;
    for (int i = 0; i < n; ++i) {
      const double a = bp.p[i] * bp.p[i] * bp.g[i] * bp.g[i];
      sum_qt += expected[i] * profile.time_of(i);
      sum_aq += a / expected[i];
      cs += std::sqrt(profile.time_of(i)) * bp.p[i] * bp.g[i];
    }
    const double obj_err = std::abs(sum_qt * sum_aq - cs * cs);
    ok = ok && obj_err <= 1e-9;
    detail << "; objective vs closed form err " << obj_err;
  }
  return {ok, detail.str()};
}

std::pair<bool, std::string> check_solver_vs_brute_force() {
  Rng rng = make_rng(20240306);
  double worst_gap = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    BoundParams bp;
    bp.p = random_simplex(3, rng);
    bp.g = Vector::Zero(3);
    std::uniform_real_distribution<double> gd(0.4, 2.0);
    for (int i = 0; i < 3; ++i) bp.g[i] = gd(rng);
    bp.alpha_over_beta = 1.0;

    // Separated times keep the elimination below well-conditioned.
    std::uniform_real_distribution<double> td(0.3, 1.2);
    double t1 = td(rng);
    double t2 = t1 + 0.4 + td(rng);
    double t3 = t2 + 0.4 + td(rng);
    const SystemProfile profile = SystemProfile::from_times({t1, t2, t3});

    std::uniform_real_distribution<double> md(0.2, 0.8);
    const double M = t1 + md(rng) * (t3 - t1);

    const SamplingSolution sol = solve_for_round_time(M, bp, profile);

    // Brute force: sweep q1 and eliminate q2, q3 through the two equality
    // constraints, so every grid point satisfies them exactly. A second
    // sweep at 1e-6 inside the best coarse cell removes the grid bias.
    const double a1 = bp.p[0] * bp.p[0] * bp.g[0] * bp.g[0];
    const double a2 = bp.p[1] * bp.p[1] * bp.g[1] * bp.g[1];
    const double a3 = bp.p[2] * bp.p[2] * bp.g[2] * bp.g[2];
    auto objective_at = [&](double q1, double* out) {
      const double q3 = (M - t1 * q1 - t2 * (1.0 - q1)) / (t3 - t2);
      const double q2 = 1.0 - q1 - q3;
      if (q1 <= 0.0 || q2 <= 0.0 || q3 <= 0.0) return false;
      *out = a1 / q1 + a2 / q2 + a3 / q3;
      return true;
    };
    double best = std::numeric_limits<double>::infinity();
    double best_q1 = 0.0;
    for (double q1 = 1e-3; q1 < 1.0; q1 += 1e-3) {
      double obj;
      if (objective_at(q1, &obj) && obj < best) {
        best = obj;
        best_q1 = q1;
      }
    }
    for (double q1 = std::max(1e-9, best_q1 - 1e-3); q1 < best_q1 + 1e-3; q1 += 1e-6) {
      double obj;
      if (objective_at(q1, &obj) && obj < best) best = obj;
    }
    worst_gap = std::max(worst_gap, std::abs(sol.variance_sum - best) / best);
  }
  std::ostringstream detail;
  detail << "worst relative gap " << worst_gap << " over 20 instances";
  return {worst_gap <= 1e-4, detail.str()};
}

std::pair<bool, std::string> check_monotonicity() {
  Rng rng = make_rng(20240307);
  int violations = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 3 + rep % 6;
    BoundParams bp;
    bp.p = random_simplex(n, rng);
    bp.g = Vector::Zero(n);
    std::uniform_real_distribution<double> gd(0.1, 3.0);
    for (int i = 0; i < n; ++i) bp.g[i] = gd(rng);
    std::uniform_real_distribution<double> xd(-3.0, 3.0);
    bp.alpha_over_beta = std::pow(10.0, xd(rng));

    std::vector<double> t(static_cast<size_t>(n));
    std::uniform_real_distribution<double> td(0.5, 5.0);
    for (auto& v : t) v = td(rng);
    const SystemProfile profile = SystemProfile::from_times(t);

    const SamplingSolution sol = optimize_sampling(bp, profile);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (profile.time_of(i) <= profile.time_of(j) &&
            bp.p[i] * bp.g[i] >= bp.p[j] * bp.g[j]) {
          const double slack = sol.q[j] - sol.q[i];
          worst = std::max(worst, slack);
          if (slack > 1e-9) ++violations;
        }
      }
    }
  }
  std::ostringstream detail;
  detail << violations << " violations over 1000 instances, worst slack " << worst;
  return {violations == 0, detail.str()};
}

std::pair<bool, std::string> check_gradient_finite_differences() {
  Rng rng = make_rng(20240308);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    std::uniform_int_distribution<int> cd(2, 6), dd(1, 8), nd(1, 12);
    const int classes = cd(rng), dim = dd(rng), n = nd(rng);
    const double lambda = (rep % 3 == 0) ? 0.0 : 1e-2;

    ClientData data;
    data.features.resize(n, dim);
    data.labels.resize(static_cast<size_t>(n));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> ld(0, classes - 1);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < dim; ++j) data.features(i, j) = normal(rng);
      data.labels[static_cast<size_t>(i)] = ld(rng);
    }
    ModelParams params = random_params(classes, dim, rng);

    // Full-batch gradient is deterministic, so the rng draw is irrelevant.
    Rng grad_rng = make_rng(1);
    const StochasticGradient analytic =
        stochastic_gradient(params, data, lambda, n, grad_rng);

    const double h = 1e-5;
    double max_abs_fd = 0.0, max_abs_diff = 0.0;
    auto probe = [&](double* slot, double analytic_value) {
      const double saved = *slot;
      *slot = saved + h;
      const double up = local_loss(params, data, lambda);
      *slot = saved - h;
      const double down = local_loss(params, data, lambda);
      *slot = saved;
      const double fd = (up - down) / (2.0 * h);
      max_abs_fd = std::max(max_abs_fd, std::abs(fd));
      max_abs_diff = std::max(max_abs_diff, std::abs(fd - analytic_value));
    };
    for (Index c = 0; c < classes; ++c)
      for (Index j = 0; j < dim; ++j) probe(&params.weights(c, j), analytic.grad.weights(c, j));
    for (Index c = 0; c < classes; ++c) probe(&params.bias[c], analytic.grad.bias[c]);

    worst = std::max(worst, max_abs_diff / std::max(max_abs_fd, 1e-12));
  }
  std::ostringstream detail;
  detail << "worst relative error " << worst << " over 10 shapes";
  return {worst < 1e-5, detail.str()};
}

std::pair<bool, std::string> check_ratio_inversion_roundtrip() {
  Rng rng = make_rng(20240309);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    std::uniform_int_distribution<int> nd(2, 200);
    const int n = nd(rng);
    std::uniform_real_distribution<double> xd(-3.0, 3.0);
    const double x = std::pow(10.0, xd(rng));
    std::uniform_real_distribution<double> md(0.01, 2.0);
    const double A = md(rng), B = md(rng);
    if (std::abs(static_cast<double>(n) * A - B) < 1e-6) continue;

    const double rho = (x * n * A + 1.0) / (x * B + 1.0);
    const double recovered = invert_round_ratio(rho, A, B, n);
    worst = std::max(worst, std::abs(recovered - x) / x);
  }
  std::ostringstream detail;
  detail << "worst relative error " << worst << " over 100 draws";
  return {worst <= 1e-10, detail.str()};
}

std::pair<bool, std::string> check_nonconvexity_certificate() {
  std::ostringstream detail;
  bool ok = true;

  NonconvexityInstance pinned;
  pinned.p = Vector::Constant(2, 1.0);
  pinned.g = Vector::Constant(2, 1.0);
  pinned.t = Vector(2);
  pinned.t << 1.0, 2.0;
  pinned.q = Vector::Constant(2, 0.5);
  pinned.alpha = 1.0;
  const NonconvexityReport rep = nonconvexity_certificate(pinned);
  ok = ok && std::abs(rep.hessian_det + 16.0) <= 1e-12 && rep.certified && rep.d2_q1 > 0.0;
  detail << "pinned determinant " << rep.hessian_det;

  Rng rng = make_rng(20240310);
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    NonconvexityInstance inst;
    std::uniform_real_distribution<double> ud(0.1, 2.0), qd(0.05, 0.95);
    inst.p = Vector(2);
    inst.g = Vector(2);
    inst.t = Vector(2);
    inst.q = Vector(2);
    inst.p << ud(rng), ud(rng);
    inst.g << ud(rng), ud(rng);
    inst.t << ud(rng), ud(rng);
    inst.q << qd(rng), qd(rng);
    inst.alpha = ud(rng);
    const NonconvexityReport r = nonconvexity_certificate(inst);
    worst = std::max(worst, r.hessian_det);
    if (!(r.d2_q1 > 0.0)) ok = false;
  }
  ok = ok && worst <= 1e-12;
  detail << "; max determinant over 1000 interior points " << worst;
  return {ok, detail.str()};
}

}  // namespace

std::vector<CheckResult> run_verification_suite() {
  std::vector<CheckResult> results;
  results.push_back(timed("unbiased-aggregation", check_unbiased_aggregation));
  results.push_back(timed("expected-round-time", check_expected_round_time));
  results.push_back(timed("approximation-exactness", check_approximation_exactness));
  results.push_back(timed("solver-reductions", check_solver_reductions));
  results.push_back(timed("solver-vs-brute-force", check_solver_vs_brute_force));
  results.push_back(timed("sampling-monotonicity", check_monotonicity));
  results.push_back(timed("gradient-finite-differences", check_gradient_finite_differences));
  results.push_back(timed("ratio-inversion-roundtrip", check_ratio_inversion_roundtrip));
  results.push_back(timed("nonconvexity-certificate", check_nonconvexity_certificate));
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return true;
}

}  // namespace fedsamp
