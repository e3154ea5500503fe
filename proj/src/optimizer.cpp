#include "fedsamp/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedsamp/errors.hpp"

namespace fedsamp {

double bound_rounds(const Vector& q, const BoundParams& bp, double epsilon) {
  if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be positive");
  if (q.size() != bp.p.size() || q.size() != bp.g.size())
    throw ShapeError("q, p and G lengths differ");
  if ((q.array() <= 0.0).any()) throw ArgumentError("round bound requires q_i > 0");
  if (!(bp.alpha_over_beta > 0.0)) throw ArgumentError("alpha/beta must be positive");

  double variance_sum = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    const double pg = bp.p[i] * bp.g[i];
    variance_sum += pg * pg / q[i];
  }
  return (variance_sum + 1.0 / bp.alpha_over_beta) / epsilon;
}

double invert_round_ratio(double rho, double A, double B, int n_clients) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ArgumentError("round ratio must be positive");
  if (!(A > 0.0) || !(B > 0.0)) throw ArgumentError("moments A and B must be positive");
  if (n_clients < 1) throw ArgumentError("n_clients must be >= 1");

  const double num = rho - 1.0;
  const double denom = static_cast<double>(n_clients) * A - rho * B;
  if (num == 0.0)
    throw EstimationError("degenerate measurement: equal round counts give alpha/beta = 0; "
                          "add more loss checkpoints");
  const double x = num / denom;
  if (!(x > 0.0) || !std::isfinite(x))
    throw EstimationError("inconsistent round measurements (negative alpha/beta); "
                          "add more loss checkpoints");
  return x;
}

double estimate_alpha_beta(double rounds_uniform, double rounds_weighted, const Vector& p,
                           const Vector& g) {
  if (!(rounds_uniform > 0.0) || !(rounds_weighted > 0.0))
    throw ArgumentError("round counts must be positive");
  if (p.size() != g.size()) throw ShapeError("p and G lengths differ");
  double A = 0.0, B = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    A += p[i] * p[i] * g[i] * g[i];
    B += p[i] * g[i] * g[i];
  }
  return invert_round_ratio(rounds_uniform / rounds_weighted, A, B,
                            static_cast<int>(p.size()));
}

namespace {

constexpr double kMuCap = 1e30;

// Work arrays for the positive-coefficient clients of the KKT system.
struct KktWork {
  std::vector<int> ids;    // client ids with a_i > 0
  std::vector<double> a;   // p_i^2 G_i^2
  std::vector<double> t;   // per-client round time
  double t_min = 0.0;
  double t_max = 0.0;
  double sqrt_a_sum = 0.0;
  std::vector<int> floored_ids;  // a_i = 0 clients, held at the probability floor
  double floor_q = 0.0;
  double floor_mass = 0.0;       // |floored| * floor_q
  double floor_time = 0.0;       // floor_q * sum of floored t_i
};

KktWork build_work(const BoundParams& bp, const SystemProfile& profile) {
  const int n = profile.num_clients();
  if (bp.p.size() != n || bp.g.size() != n)
    throw ShapeError("bound parameters do not match profile size");

  KktWork w;
  w.floor_q = 1e-6 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    const double pg = bp.p[i] * bp.g[i];
    if (pg > 0.0) {
      w.ids.push_back(i);
      w.a.push_back(pg * pg);
      w.t.push_back(profile.time_of(i));
      w.sqrt_a_sum += pg;
    } else {
      w.floored_ids.push_back(i);
      w.floor_time += w.floor_q * profile.time_of(i);
    }
  }
  if (w.ids.empty()) throw ArgumentError("all p_i G_i are zero");
  w.floor_mass = w.floor_q * static_cast<double>(w.floored_ids.size());
  w.t_min = *std::min_element(w.t.begin(), w.t.end());
  w.t_max = *std::max_element(w.t.begin(), w.t.end());
  return w;
}

// Offsets b_i = mu * t_i - min_j(mu * t_j) >= 0, formed as a product of
// differences so no precision is lost when |mu| is large.
void fill_offsets(const KktWork& w, double mu, std::vector<double>& b) {
  const double t_ref = mu >= 0.0 ? w.t_min : w.t_max;
  b.resize(w.t.size());
  for (size_t i = 0; i < w.t.size(); ++i) b[i] = mu * (w.t[i] - t_ref);
}

// Solves sum_i sqrt(a_i / (c + b_i)) = s for c > 0 (strictly decreasing).
double solve_inner(const KktWork& w, const std::vector<double>& b, double s,
                   long* iterations) {
  auto mass = [&](double c) {
    double total = 0.0;
    for (size_t i = 0; i < w.a.size(); ++i) total += std::sqrt(w.a[i] / (c + b[i]));
    return total;
  };
  // The clients with b_i = 0 alone force c >= (sum of their sqrt(a_i) / s)^2,
  // and all clients together cap it at (sum sqrt(a_i) / s)^2, so the bracket
  // spans a bounded ratio regardless of mu.
  double bind_sum = 0.0;
  for (size_t i = 0; i < b.size(); ++i)
    if (b[i] == 0.0) bind_sum += std::sqrt(w.a[i]);
  double lo = bind_sum / s;
  lo = lo * lo;
  double hi = w.sqrt_a_sum / s;
  hi = hi * hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (mass(mid) > s)
      lo = mid;
    else
      hi = mid;
    ++*iterations;
  }
  return hi;
}

struct InnerSolution {
  double c = 0.0;
  double mean_time = 0.0;  // sum over positive clients of q_i t_i
};

InnerSolution solve_for_mu(const KktWork& w, double mu, double s, long* iterations) {
  std::vector<double> b;
  fill_offsets(w, mu, b);
  InnerSolution sol;
  sol.c = solve_inner(w, b, s, iterations);
  for (size_t i = 0; i < w.a.size(); ++i)
    sol.mean_time += std::sqrt(w.a[i] / (sol.c + b[i])) * w.t[i];
  return sol;
}

}  // namespace

SamplingSolution solve_for_round_time(double M, const BoundParams& bp,
                                      const SystemProfile& profile) {
  const int n = profile.num_clients();
  const double t1 = profile.min_time();
  const double tn = profile.max_time();
  const double span_tol = 1e-12 * std::max(1.0, tn);
  if (M < t1 - span_tol || M > tn + span_tol)
    throw InfeasibleError("M outside [t_1, t_N]");

  KktWork w = build_work(bp, profile);
  const double s = 1.0 - w.floor_mass;
  const double m_rest = M - w.floor_time;
  const double lo_feas = s * w.t_min;
  const double hi_feas = s * w.t_max;
  if (m_rest < lo_feas - span_tol || m_rest > hi_feas + span_tol)
    throw InfeasibleError("M infeasible once zero-gradient clients take the probability floor");

  SamplingSolution sol;
  sol.q = Vector::Zero(n);
  for (int i : w.floored_ids) sol.q[i] = w.floor_q;

  SolverDiagnostics diag;
  const bool homogeneous = (w.t_max - w.t_min) <= span_tol;

  double mu = 0.0;
  InnerSolution inner;
  if (homogeneous) {
    // Round time is fixed; the time constraint vanishes and the solution is
    // the gradient-weighted closed form.
    inner = solve_for_mu(w, 0.0, s, &diag.inner_iterations);
  } else {
    const double target = std::clamp(m_rest, lo_feas, hi_feas);
    const double time_tol = 1e-13 * std::max(1.0, target);
    inner = solve_for_mu(w, 0.0, s, &diag.inner_iterations);
    if (std::abs(inner.mean_time - target) > time_tol) {
      // Bracket the time constraint: mean_time is strictly decreasing in mu.
      // If the target sits at an edge of [t_1, t_N], mean_time approaches it
      // only in the limit; the capped multiplier pins q there to fp accuracy.
      bool at_edge = false;
      double lo_mu = 0.0, hi_mu = 0.0;
      if (inner.mean_time > target) {
        lo_mu = 0.0;
        hi_mu = 1.0;
        while (true) {
          ++diag.outer_iterations;
          inner = solve_for_mu(w, hi_mu, s, &diag.inner_iterations);
          if (inner.mean_time <= target) break;
          if (hi_mu >= kMuCap) {
            at_edge = true;
            mu = hi_mu;
            break;
          }
          lo_mu = hi_mu;
          hi_mu *= 2.0;
        }
      } else {
        // mean_time(0) < target, so the multiplier is negative.
        double trial = -1.0;
        double prev = 0.0;
        while (true) {
          ++diag.outer_iterations;
          inner = solve_for_mu(w, trial, s, &diag.inner_iterations);
          if (inner.mean_time > target) {
            lo_mu = trial;
            hi_mu = prev;
            break;
          }
          if (trial <= -kMuCap) {
            at_edge = true;
            mu = trial;
            break;
          }
          prev = trial;
          trial *= 2.0;
        }
      }
      if (!at_edge) {
        for (int it = 0; it < 240; ++it) {
          const double mid = 0.5 * (lo_mu + hi_mu);
          if (mid == lo_mu || mid == hi_mu) break;
          ++diag.outer_iterations;
          inner = solve_for_mu(w, mid, s, &diag.inner_iterations);
          mu = mid;
          if (std::abs(inner.mean_time - target) <= time_tol) break;
          if (inner.mean_time > target)
            lo_mu = mid;
          else
            hi_mu = mid;
        }
        inner = solve_for_mu(w, mu, s, &diag.inner_iterations);
      }
    }
  }

  std::vector<double> b;
  fill_offsets(w, mu, b);
  double stationarity = 0.0;
  for (size_t i = 0; i < w.ids.size(); ++i) {
    const double denom = inner.c + b[i];
    const double qi = std::sqrt(w.a[i] / denom);
    sol.q[w.ids[i]] = qi;
    stationarity = std::max(stationarity, std::abs(qi * qi * denom - w.a[i]) / w.a[i]);
  }

  sol.variance_sum = 0.0;
  double sum_q = 0.0;
  double sum_qt = 0.0;
  for (int i = 0; i < n; ++i) {
    sum_q += sol.q[i];
    sum_qt += sol.q[i] * profile.time_of(i);
    const double pg = bp.p[i] * bp.g[i];
    if (pg > 0.0) sol.variance_sum += pg * pg / sol.q[i];
  }
  sol.M = M;
  if (!(bp.alpha_over_beta > 0.0)) throw ArgumentError("alpha/beta must be positive");
  sol.objective_value = sum_qt * (sol.variance_sum + 1.0 / bp.alpha_over_beta);
  diag.sum_q_residual = std::abs(sum_q - 1.0);
  diag.time_residual = std::abs(sum_qt - M);
  diag.stationarity_residual = stationarity;
  sol.diagnostics = diag;
  return sol;
}

SamplingSolution optimize_sampling(const BoundParams& bp, const SystemProfile& profile,
                                   double epsilon0) {
  KktWork w = build_work(bp, profile);
  const double t1 = profile.min_time();
  const double tn = profile.max_time();
  const double span = tn - t1;
  const double span_tol = 1e-12 * std::max(1.0, tn);

  if (span <= span_tol) {
    SamplingSolution sol = solve_for_round_time(t1, bp, profile);
    sol.diagnostics.grid_points = 1;
    return sol;
  }

  // Feasible M window once zero-gradient clients hold the floor.
  const double s = 1.0 - w.floor_mass;
  const double lo_feas = w.floor_time + s * w.t_min + span_tol;
  const double hi_feas = w.floor_time + s * w.t_max - span_tol;

  const double eps0 = epsilon0 > 0.0 ? epsilon0 : span / 200.0;
  std::vector<double> grid;
  for (double m = t1; m < tn; m += eps0) grid.push_back(m);
  grid.push_back(tn);
  for (double& m : grid) m = std::clamp(m, lo_feas, hi_feas);
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  SamplingSolution best;
  best.objective_value = std::numeric_limits<double>::infinity();
  for (double m : grid) {
    SamplingSolution sol = solve_for_round_time(m, bp, profile);
    if (sol.objective_value < best.objective_value) best = sol;
  }
  const int grid_points = static_cast<int>(grid.size());

  // Golden-section refinement inside the winning grid cell; the grid argmin
  // alone moves q by O(eps0 / span), far coarser than the solver itself.
  double lo = std::clamp(best.M - eps0, lo_feas, hi_feas);
  double hi = std::clamp(best.M + eps0, lo_feas, hi_feas);
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  SamplingSolution f1 = solve_for_round_time(x1, bp, profile);
  SamplingSolution f2 = solve_for_round_time(x2, bp, profile);
  int refinements = 0;
  for (int it = 0; it < 120 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    ++refinements;
    if (f1.objective_value <= f2.objective_value) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = solve_for_round_time(x1, bp, profile);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = solve_for_round_time(x2, bp, profile);
    }
  }
  const SamplingSolution& refined = f1.objective_value <= f2.objective_value ? f1 : f2;
  if (refined.objective_value < best.objective_value) best = refined;

  best.diagnostics.grid_points = grid_points;
  best.diagnostics.refine_iterations = refinements;
  return best;
}

Vector closed_form_small_beta(const Vector& p, const Vector& g, const SystemProfile& profile) {
  if (p.size() != g.size() || p.size() != profile.num_clients())
    throw ShapeError("p, G and profile sizes differ");
  Vector weights(p.size());
  for (Index i = 0; i < p.size(); ++i)
    weights[i] = p[i] * g[i] / std::sqrt(profile.time_of(static_cast<int>(i)));
  const double total = weights.sum();
  if (!(total > 0.0)) throw ArgumentError("all p_i G_i are zero");
  return weights / total;
}

NonconvexityReport nonconvexity_certificate(const NonconvexityInstance& instance) {
  if (instance.p.size() != 2 || instance.g.size() != 2 || instance.t.size() != 2 ||
      instance.q.size() != 2)
    throw ArgumentError("certificate instance must have exactly two clients");
  if (!(instance.alpha > 0.0)) throw ArgumentError("alpha must be positive");
  if ((instance.q.array() <= 0.0).any()) throw ArgumentError("q must be interior");

  const double a1 = instance.p[0] * instance.p[0] * instance.g[0] * instance.g[0];
  const double a2 = instance.p[1] * instance.p[1] * instance.g[1] * instance.g[1];
  const double q1 = instance.q[0], q2 = instance.q[1];
  const double t1 = instance.t[0], t2 = instance.t[1];
  const double alpha = instance.alpha;

  NonconvexityReport rep;
  rep.d2_q1 = 2.0 * alpha * a1 * q2 * t2 / (q1 * q1 * q1);
  rep.d2_q2 = 2.0 * alpha * a2 * q1 * t1 / (q2 * q2 * q2);
  rep.cross = -alpha * (t1 * a2 / (q2 * q2) + t2 * a1 / (q1 * q1));
  rep.hessian_det = rep.d2_q1 * rep.d2_q2 - rep.cross * rep.cross;
  rep.certified = rep.hessian_det < 0.0;
  return rep;
}

}  // namespace fedsamp
