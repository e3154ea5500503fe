#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "fedsamp/timing.hpp"
#include "fedsamp/types.hpp"

namespace fedsamp {

/// Everything the round-count bound needs, in ratio form: only alpha/beta is
/// identifiable from round measurements, and the optimizer only ever uses
/// the ratio.
struct BoundParams {
  double alpha_over_beta = 1.0;
  Vector g;  // per-client gradient-norm bound estimates
  Vector p;  // client weights
  int K = 1;
  int E = 1;
  std::optional<std::pair<double, double>> analytic_alpha_beta;  // synthetic checks only
};

struct SolverDiagnostics {
  int outer_iterations = 0;
  long inner_iterations = 0;
  int grid_points = 0;
  int refine_iterations = 0;
  double sum_q_residual = 0.0;
  double time_residual = 0.0;
  double stationarity_residual = 0.0;
};

/// A solved sampling distribution with its mean-round-time control value
/// M = sum_i q_i t_i and the bound objective in ratio form
/// M * (sum_i p_i^2 G_i^2 / q_i + beta/alpha).
struct SamplingSolution {
  Vector q;
  double M = 0.0;
  double objective_value = 0.0;
  double variance_sum = 0.0;  // sum_i p_i^2 G_i^2 / q_i
  SolverDiagnostics diagnostics;
};

/// Round-count bound in ratio form: (sum_i p_i^2 G_i^2 / q_i + beta/alpha)
/// divided by epsilon. Proportional to the true bound, which is all any
/// comparison needs.
double bound_rounds(const Vector& q, const BoundParams& bp, double epsilon);

/// Solves rho = (x N A + 1) / (x B + 1) for x = alpha/beta, where rho is the
/// ratio of rounds-to-checkpoint under uniform vs weighted sampling and
/// A = sum p_i^2 G_i^2, B = sum p_i G_i^2.
double invert_round_ratio(double rho, double A, double B, int n_clients);

/// As above, with the moments computed from (p, G) and rho = r_uniform /
/// r_weighted.
double estimate_alpha_beta(double rounds_uniform, double rounds_weighted, const Vector& p,
                           const Vector& g);

/// Minimizes sum_i a_i / q_i (a_i = p_i^2 G_i^2) subject to sum q = 1,
/// sum q_i t_i = M, q_i > 0, via the stationarity form
/// q_i = sqrt(a_i / (lambda + mu t_i)) with nested bisection on the two
/// multipliers. Clients with a_i = 0 receive the floor probability 1e-6/N.
SamplingSolution solve_for_round_time(double M, const BoundParams& bp,
                                      const SystemProfile& profile);

/// Line search over M on the grid {t_1, t_1+eps0, ..., t_N} (eps0 <= 0 means
/// (t_N - t_1)/200), followed by a local refinement of the best grid point.
SamplingSolution optimize_sampling(const BoundParams& bp, const SystemProfile& profile,
                                   double epsilon0 = 0.0);

/// Closed form for the beta/alpha -> 0 limit: q_i proportional to
/// p_i G_i / sqrt(t_i).
Vector closed_form_small_beta(const Vector& p, const Vector& g, const SystemProfile& profile);

/// Two-client instance for the non-convexity certificate of the
/// time-times-bound objective.
struct NonconvexityInstance {
  Vector p;  // length 2
  Vector g;  // length 2
  Vector t;  // length 2
  Vector q;  // interior evaluation point, length 2
  double alpha = 1.0;
};

struct NonconvexityReport {
  double d2_q1 = 0.0;        // second partial in q1, positive at interior points
  double d2_q2 = 0.0;
  double cross = 0.0;        // mixed partial
  double hessian_det = 0.0;  // d2_q1 * d2_q2 - cross^2
  bool certified = false;    // det < 0: indefinite Hessian at this point
};

/// Evaluates the Hessian of (q1 t1 + q2 t2) * alpha * (a1/q1 + a2/q2) at the
/// given interior point and reports whether its determinant is negative.
NonconvexityReport nonconvexity_certificate(const NonconvexityInstance& instance);

}  // namespace fedsamp
