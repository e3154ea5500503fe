#include "fedsamp/engine.hpp"

#include <algorithm>
#include <cmath>

#include "fedsamp/errors.hpp"

namespace fedsamp {

std::string scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kProposed: return "proposed";
    case SchemeKind::kUniform: return "uniform";
    case SchemeKind::kWeighted: return "weighted";
    case SchemeKind::kStatistical: return "statistical";
    case SchemeKind::kFull: return "full";
  }
  return "unknown";
}

void check_scheme_probs(const Vector& q) {
  if (q.size() < 1) throw SchemeError("empty probability vector");
  if (!q.allFinite()) throw SchemeError("probabilities must be finite");
  if ((q.array() <= 0.0).any()) throw SchemeError("every probability must be positive");
  if (std::abs(q.sum() - 1.0) > 1e-9) throw SchemeError("probabilities must sum to 1");
}

SamplingScheme SamplingScheme::uniform(int n) {
  if (n < 1) throw ArgumentError("need at least one client");
  return {Vector::Constant(n, 1.0 / n), SchemeKind::kUniform};
}

SamplingScheme SamplingScheme::weighted(const Vector& p) {
  check_scheme_probs(p);
  return {p, SchemeKind::kWeighted};
}

SamplingScheme SamplingScheme::statistical(const Vector& p, const Vector& g) {
  return {statistical_sampling_probs(p, g), SchemeKind::kStatistical};
}

SamplingScheme SamplingScheme::proposed(const Vector& q) {
  check_scheme_probs(q);
  return {q, SchemeKind::kProposed};
}

SamplingScheme SamplingScheme::full(int n) {
  if (n < 1) throw ArgumentError("need at least one client");
  return {Vector::Constant(n, 1.0 / n), SchemeKind::kFull};
}

Vector statistical_sampling_probs(const Vector& p, const Vector& g) {
  if (p.size() != g.size()) throw ShapeError("p and G lengths differ");
  if ((g.array() < 0.0).any()) throw ArgumentError("G values must be nonnegative");
  Vector w = p.cwiseProduct(g);
  const double total = w.sum();
  if (!(total > 0.0)) throw ArgumentError("all p_i G_i are zero");
  return w / total;
}

bool Multiset::contains(int client) const {
  for (const auto& [id, mult] : members)
    if (id == client) return true;
  return false;
}

Multiset sample_multiset(const Vector& q, int K, Rng& rng) {
  check_scheme_probs(q);
  if (K < 1) throw ArgumentError("K must be >= 1");

  Vector cum(q.size());
  double acc = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    acc += q[i];
    cum[i] = acc;
  }
  cum[q.size() - 1] = 1.0;

  std::map<int, int> counts;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < K; ++k) {
    const double u = unit(rng);
    const double* begin = cum.data();
    const double* end = begin + cum.size();
    const Index idx = std::upper_bound(begin, end, u) - begin;
    counts[static_cast<int>(std::min<Index>(idx, q.size() - 1))] += 1;
  }

  Multiset ms;
  ms.members.assign(counts.begin(), counts.end());
  ms.total = K;
  return ms;
}

Multiset full_multiset(int n) {
  Multiset ms;
  ms.members.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ms.members.emplace_back(i, 1);
  ms.total = n;
  return ms;
}

void GEstimates::record(int client, double mean_sq_norm) {
  if (client < 0 || client >= num_clients()) throw ArgumentError("client id out of range");
  if (!(mean_sq_norm >= 0.0)) throw ArgumentError("squared norm must be nonnegative");
  const double c = static_cast<double>(counts_[client]);
  mean_sq_[client] = (mean_sq_[client] * c + mean_sq_norm) / (c + 1.0);
  counts_[client] += 1;
}

double GEstimates::value(int client) const {
  return counts_[client] > 0 ? std::sqrt(mean_sq_[client]) : 0.0;
}

Vector GEstimates::values_filled() const {
  Vector out(mean_sq_.size());
  double sum = 0.0;
  int observed = 0;
  for (int i = 0; i < num_clients(); ++i) {
    out[i] = value(i);
    if (counts_[i] > 0) {
      sum += out[i];
      ++observed;
    }
  }
  if (observed > 0 && observed < num_clients()) {
    const double fill = sum / static_cast<double>(observed);
    for (int i = 0; i < num_clients(); ++i)
      if (counts_[i] == 0) out[i] = fill;
  }
  return out;
}

namespace {

void check_update_shapes(const ModelParams& a, const ModelParams& b) {
  if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() ||
      a.bias.size() != b.bias.size())
    throw ShapeError("update shape does not match server model");
}

}  // namespace

ModelParams aggregate(const ModelParams& server, const std::map<int, ModelParams>& updates,
                      const Multiset& sampled, const Vector& q, int K, const Vector& p) {
  check_scheme_probs(q);
  if (p.size() != q.size()) throw ShapeError("p and q lengths differ");
  if (K < 1) throw ArgumentError("K must be >= 1");

  ModelParams out = server;
  for (const auto& [client, mult] : sampled.members) {
    auto it = updates.find(client);
    if (it == updates.end())
      throw ProtocolError("sampled client " + std::to_string(client) + " has no update");
    check_update_shapes(server, it->second);
    const double w = static_cast<double>(mult) * p[client] / (static_cast<double>(K) * q[client]);
    out.weights += w * (it->second.weights - server.weights);
    out.bias += w * (it->second.bias - server.bias);
  }
  return out;
}

ModelParams aggregate_full(const std::map<int, ModelParams>& updates, const Vector& p) {
  if (updates.empty()) throw ProtocolError("no updates to aggregate");
  if (static_cast<Index>(updates.size()) != p.size())
    throw ProtocolError("full aggregation requires an update from every client");

  const ModelParams& first = updates.begin()->second;
  ModelParams out = ModelParams::zeros(static_cast<int>(first.num_classes()),
                                       static_cast<int>(first.dim()));
  for (const auto& [client, update] : updates) {
    if (client < 0 || client >= p.size()) throw ProtocolError("update from unknown client");
    check_update_shapes(first, update);
    out.weights += p[client] * update.weights;
    out.bias += p[client] * update.bias;
  }
  return out;
}

StopRule StopRule::fixed_rounds(int r) {
  if (r < 1) throw ArgumentError("round count must be >= 1");
  StopRule s;
  s.kind = Kind::kFixedRounds;
  s.rounds = r;
  s.cap = r;
  return s;
}

StopRule StopRule::target(double loss, int cap) {
  if (!(loss > 0.0)) throw ArgumentError("target loss must be positive");
  if (cap < 1) throw ArgumentError("round cap must be >= 1");
  StopRule s;
  s.kind = Kind::kTargetLoss;
  s.target_loss = loss;
  s.cap = cap;
  return s;
}

StopRule StopRule::time_budget(double seconds, int cap) {
  if (!(seconds > 0.0)) throw ArgumentError("time budget must be positive");
  if (cap < 1) throw ArgumentError("round cap must be >= 1");
  StopRule s;
  s.kind = Kind::kTimeBudget;
  s.budget_s = seconds;
  s.cap = cap;
  return s;
}

double LrSchedule::at(int round) const {
  switch (kind) {
    case Kind::kHarmonic: return eta0 / (1.0 + static_cast<double>(round));
    case Kind::kTheory: return 2.0 / (mu * (gamma + static_cast<double>(round)));
    case Kind::kConstant: return eta0;
  }
  return eta0;
}

std::optional<int> RunResult::rounds_to_loss(double level) const {
  for (size_t i = 0; i < trace.size(); ++i)
    if (trace[i].global_loss <= level) return static_cast<int>(i) + 1;
  return std::nullopt;
}

std::optional<double> RunResult::time_to_loss(double level) const {
  for (const auto& rec : trace)
    if (rec.global_loss <= level) return rec.cumulative_time_s;
  return std::nullopt;
}

RunResult run_rounds(const SamplingScheme& scheme, const StopRule& stop, const RunConfig& cfg,
                     const ModelParams& init, GEstimates g, int start_round) {
  if (cfg.clients == nullptr || cfg.p == nullptr || cfg.profile == nullptr)
    throw ArgumentError("run config is missing clients, weights or profile");
  const int n = static_cast<int>(cfg.clients->size());
  if (cfg.p->size() != n || cfg.profile->num_clients() != n)
    throw ShapeError("client count mismatch between data, weights and profile");
  if (scheme.kind != SchemeKind::kFull && scheme.q.size() != n)
    throw ShapeError("scheme probability length does not match client count");
  if (cfg.K < 1 || cfg.K > 100000) throw ArgumentError("invalid K");
  if (g.num_clients() == 0) g = GEstimates(n);
  if (g.num_clients() != n) throw ShapeError("G estimate length does not match client count");

  RunResult out;
  out.params = init;
  out.initial_loss = global_loss(init, *cfg.clients, *cfg.p, cfg.lambda);
  if (!std::isfinite(out.initial_loss))
    throw DivergenceError("initial loss is not finite", start_round, -1);

  double cumulative = 0.0;
  bool stopped_early = false;
  const int max_rounds = stop.kind == StopRule::Kind::kFixedRounds ? stop.rounds : stop.cap;

  for (int k = 0; k < max_rounds; ++k) {
    const int round = start_round + k;

    Multiset sampled;
    if (scheme.kind == SchemeKind::kFull) {
      sampled = full_multiset(n);
    } else {
      Rng rng = make_rng(derive_seed(cfg.master_seed, Stream::kSampling,
                                     {static_cast<std::uint64_t>(round)}));
      sampled = sample_multiset(scheme.q, cfg.K, rng);
    }

    // A client sampled with multiplicity m trains once; its delta is
    // weighted by m in the aggregation.
    std::map<int, ModelParams> updates;
    const double lr = cfg.lr.at(round);
    for (const auto& [client, mult] : sampled.members) {
      Rng rng = make_rng(derive_seed(cfg.master_seed, Stream::kLocalSgd,
                                     {static_cast<std::uint64_t>(round),
                                      static_cast<std::uint64_t>(client)}));
      LocalSgdOptions opt{cfg.E, lr, cfg.batch_size, cfg.lambda};
      LocalUpdateResult res;
      try {
        res = local_sgd(out.params, (*cfg.clients)[static_cast<size_t>(client)], opt, rng);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " (client " + std::to_string(client) + ")",
                              round, e.step);
      }
      g.record(client, res.grad_norm_stats);
      updates.emplace(client, std::move(res.params));
    }

    ModelParams next = scheme.kind == SchemeKind::kFull
                           ? aggregate_full(updates, *cfg.p)
                           : aggregate(out.params, updates, sampled, scheme.q, cfg.K, *cfg.p);

    const double rt = round_time(sampled, *cfg.profile);
    cumulative += rt;
    const double loss = global_loss(next, *cfg.clients, *cfg.p, cfg.lambda);
    if (!std::isfinite(loss)) {
      out.trace.push_back({round, sampled, rt, loss, std::nullopt, cumulative});
      throw DivergenceError("global loss diverged", round, -1);
    }

    RoundRecord rec{round, std::move(sampled), rt, loss, std::nullopt, cumulative};
    if (cfg.test_features != nullptr && cfg.test_labels != nullptr)
      rec.test_accuracy = accuracy(next, *cfg.test_features, *cfg.test_labels);
    out.trace.push_back(std::move(rec));
    out.params = std::move(next);

    if (stop.kind == StopRule::Kind::kTargetLoss && loss <= stop.target_loss) {
      out.reached_target = true;
      out.reason = StopReason::kTargetReached;
      stopped_early = true;
      break;
    }
    if (stop.kind == StopRule::Kind::kTimeBudget && cumulative >= stop.budget_s) {
      out.reason = StopReason::kBudgetSpent;
      stopped_early = true;
      break;
    }
  }

  if (!stopped_early) {
    out.reason = stop.kind == StopRule::Kind::kFixedRounds ? StopReason::kRoundsDone
                                                           : StopReason::kCapHit;
  }
  out.g = std::move(g);
  out.total_time_s = cumulative;
  return out;
}

}  // namespace fedsamp
