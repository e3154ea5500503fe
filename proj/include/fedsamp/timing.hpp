#pragma once

#include <cstdint>
#include <vector>

#include "fedsamp/types.hpp"

namespace fedsamp {

struct Multiset;  // engine.hpp

enum class DelayDistribution { kUniformRange, kExponential, kFixed, kExplicit };

/// Distribution parameters for draw_profile. Field use depends on `kind`:
/// uniform_range -> [lo, hi]; exponential -> rate; fixed -> value;
/// explicit -> values (one per client).
struct DelaySpec {
  DelayDistribution kind = DelayDistribution::kFixed;
  double lo = 0.0;
  double hi = 0.0;
  double rate = 1.0;
  double value = 1.0;
  std::vector<double> values;

  static DelaySpec uniform_range(double lo, double hi);
  static DelaySpec exponential(double rate);
  static DelaySpec fixed(double value);
  static DelaySpec explicit_times(std::vector<double> values);
};

/// Per-client round times (compute + communication), stored sorted ascending
/// with the client-id permutation retained, so delay rank and data
/// heterogeneity stay independent.
class SystemProfile {
 public:
  /// `per_client` is indexed by client id; sorted internally (stable, so ties
  /// keep ascending client ids).
  static SystemProfile from_times(const std::vector<double>& per_client,
                                  DelayDistribution tag = DelayDistribution::kExplicit,
                                  std::uint64_t seed = 0);

  int num_clients() const { return static_cast<int>(sorted_.size()); }
  double time_of(int client) const { return sorted_[rank_of_client_[static_cast<size_t>(client)]]; }
  /// Ascending times; entry r belongs to client_of_rank(r).
  const Vector& sorted_times() const { return sorted_; }
  int client_of_rank(int rank) const { return client_of_rank_[static_cast<size_t>(rank)]; }
  int rank_of_client(int client) const { return rank_of_client_[static_cast<size_t>(client)]; }
  double min_time() const { return sorted_[0]; }
  double max_time() const { return sorted_[sorted_.size() - 1]; }
  DelayDistribution tag() const { return tag_; }
  std::uint64_t seed() const { return seed_; }

  /// Reorders a client-indexed vector into rank (ascending-time) order.
  Vector to_rank_order(const Vector& by_client) const;

 private:
  Vector sorted_;
  std::vector<int> client_of_rank_;
  std::vector<int> rank_of_client_;
  DelayDistribution tag_ = DelayDistribution::kExplicit;
  std::uint64_t seed_ = 0;
};

/// Draws N positive per-client round times from the given distribution.
SystemProfile draw_profile(const DelaySpec& spec, int n_clients, std::uint64_t seed);

/// Synchronous round duration: the slowest sampled client.
double round_time(const Multiset& sampled, const SystemProfile& profile);

/// P(rank r is the slowest of K categorical draws) for q given in rank
/// order: (sum_{j<=r} q_j)^K - (sum_{j<=r-1} q_j)^K.
Vector straggler_pmf(const Vector& q_ranked, int K);

/// Exact expected round duration under K draws with replacement from q
/// (q indexed by client id).
double expected_round_time(const Vector& q, const SystemProfile& profile, int K);

/// Linear approximation sum_i q_i t_i; exact when K = 1 or all t_i equal.
double expected_round_time_approx(const Vector& q, const SystemProfile& profile);

}  // namespace fedsamp
