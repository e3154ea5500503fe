#include "fedsamp/timing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsamp/engine.hpp"
#include "fedsamp/errors.hpp"
#include "fedsamp/rng.hpp"

namespace fedsamp {

DelaySpec DelaySpec::uniform_range(double lo, double hi) {
  DelaySpec s;
  s.kind = DelayDistribution::kUniformRange;
  s.lo = lo;
  s.hi = hi;
  return s;
}

DelaySpec DelaySpec::exponential(double rate) {
  DelaySpec s;
  s.kind = DelayDistribution::kExponential;
  s.rate = rate;
  return s;
}

DelaySpec DelaySpec::fixed(double value) {
  DelaySpec s;
  s.kind = DelayDistribution::kFixed;
  s.value = value;
  return s;
}

DelaySpec DelaySpec::explicit_times(std::vector<double> values) {
  DelaySpec s;
  s.kind = DelayDistribution::kExplicit;
  s.values = std::move(values);
  return s;
}

SystemProfile SystemProfile::from_times(const std::vector<double>& per_client,
                                        DelayDistribution tag, std::uint64_t seed) {
  if (per_client.empty()) throw ArgumentError("profile needs at least one client");
  for (double t : per_client)
    if (!(t > 0.0) || !std::isfinite(t)) throw ArgumentError("round times must be positive");

  SystemProfile p;
  const int n = static_cast<int>(per_client.size());
  p.client_of_rank_.resize(static_cast<size_t>(n));
  std::iota(p.client_of_rank_.begin(), p.client_of_rank_.end(), 0);
  std::stable_sort(p.client_of_rank_.begin(), p.client_of_rank_.end(), [&](int a, int b) {
    return per_client[static_cast<size_t>(a)] < per_client[static_cast<size_t>(b)];
  });
  p.sorted_.resize(n);
  p.rank_of_client_.resize(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    p.sorted_[r] = per_client[static_cast<size_t>(p.client_of_rank_[static_cast<size_t>(r)])];
    p.rank_of_client_[static_cast<size_t>(p.client_of_rank_[static_cast<size_t>(r)])] = r;
  }
  p.tag_ = tag;
  p.seed_ = seed;
  return p;
}

Vector SystemProfile::to_rank_order(const Vector& by_client) const {
  if (by_client.size() != num_clients()) throw ShapeError("vector length does not match profile");
  Vector out(by_client.size());
  for (int r = 0; r < num_clients(); ++r) out[r] = by_client[client_of_rank_[static_cast<size_t>(r)]];
  return out;
}

SystemProfile draw_profile(const DelaySpec& spec, int n_clients, std::uint64_t seed) {
  if (n_clients < 1) throw ArgumentError("n_clients must be >= 1");
  std::vector<double> t(static_cast<size_t>(n_clients));
  Rng rng = make_rng(derive_seed(seed, Stream::kProfile));

  switch (spec.kind) {
    case DelayDistribution::kUniformRange: {
      if (!(spec.lo > 0.0) || spec.hi < spec.lo)
        throw ArgumentError("uniform delay range needs 0 < lo <= hi");
      std::uniform_real_distribution<double> d(spec.lo, spec.hi);
      for (auto& v : t) v = d(rng);
      break;
    }
    case DelayDistribution::kExponential: {
      if (!(spec.rate > 0.0)) throw ArgumentError("exponential rate must be positive");
      std::exponential_distribution<double> d(spec.rate);
      for (auto& v : t) {
        do {
          v = d(rng);
        } while (!(v > 0.0));
      }
      break;
    }
    case DelayDistribution::kFixed: {
      if (!(spec.value > 0.0)) throw ArgumentError("fixed delay must be positive");
      std::fill(t.begin(), t.end(), spec.value);
      break;
    }
    case DelayDistribution::kExplicit: {
      if (static_cast<int>(spec.values.size()) != n_clients)
        throw ArgumentError("explicit delays must list one time per client");
      t = spec.values;
      break;
    }
  }
  return SystemProfile::from_times(t, spec.kind, seed);
}

double round_time(const Multiset& sampled, const SystemProfile& profile) {
  if (sampled.members.empty()) throw ArgumentError("round has no sampled clients");
  double worst = 0.0;
  for (const auto& [client, mult] : sampled.members)
    worst = std::max(worst, profile.time_of(client));
  return worst;
}

Vector straggler_pmf(const Vector& q_ranked, int K) {
  if (K < 1) throw ArgumentError("K must be >= 1");
  const Index n = q_ranked.size();
  Vector pmf(n);
  double prev_cum = 0.0;
  double prev_pow = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double cum = prev_cum + q_ranked[i];
    const double cur_pow = std::pow(cum, K);
    pmf[i] = cur_pow - prev_pow;
    prev_cum = cum;
    prev_pow = cur_pow;
  }
  return pmf;
}

double expected_round_time(const Vector& q, const SystemProfile& profile, int K) {
  if (q.size() != profile.num_clients()) throw ShapeError("q length does not match profile");
  const Vector pmf = straggler_pmf(profile.to_rank_order(q), K);
  return pmf.dot(profile.sorted_times());
}

double expected_round_time_approx(const Vector& q, const SystemProfile& profile) {
  if (q.size() != profile.num_clients()) throw ShapeError("q length does not match profile");
  double total = 0.0;
  for (int i = 0; i < profile.num_clients(); ++i) total += q[i] * profile.time_of(i);
  return total;
}

}  // namespace fedsamp
