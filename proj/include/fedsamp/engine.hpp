#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedsamp/model.hpp"
#include "fedsamp/rng.hpp"
#include "fedsamp/timing.hpp"
#include "fedsamp/types.hpp"

namespace fedsamp {

enum class SchemeKind { kProposed, kUniform, kWeighted, kStatistical, kFull };

std::string scheme_name(SchemeKind kind);

/// Client sampling probabilities plus the scheme they came from. `full`
/// carries no probabilities (every client participates each round).
struct SamplingScheme {
  Vector q;
  SchemeKind kind = SchemeKind::kUniform;

  static SamplingScheme uniform(int n);
  static SamplingScheme weighted(const Vector& p);
  static SamplingScheme statistical(const Vector& p, const Vector& g);
  static SamplingScheme proposed(const Vector& q);
  static SamplingScheme full(int n);
};

/// q_i = p_i G_i / sum_j p_j G_j.
Vector statistical_sampling_probs(const Vector& p, const Vector& g);

/// K categorical draws with replacement, collapsed to (client, multiplicity)
/// pairs sorted by client id.
struct Multiset {
  std::vector<std::pair<int, int>> members;
  int total = 0;

  bool contains(int client) const;
};

Multiset sample_multiset(const Vector& q, int K, Rng& rng);
Multiset full_multiset(int n);

/// Validates a probability vector: finite, q_i > 0, sums to 1 within 1e-9.
void check_scheme_probs(const Vector& q);

/// One synchronous round's outcome.
struct RoundRecord {
  int round = 0;
  Multiset sampled;
  double round_time_s = 0.0;
  double global_loss = 0.0;
  std::optional<double> test_accuracy;
  double cumulative_time_s = 0.0;
};

/// Per-client running estimates of the expected squared stochastic-gradient
/// norm; value(i) is the square root of the running mean. Unobserved clients
/// keep value 0 and count 0.
class GEstimates {
 public:
  GEstimates() = default;
  explicit GEstimates(int n_clients)
      : mean_sq_(Vector::Zero(n_clients)), counts_(IntVector::Zero(n_clients)) {}

  void record(int client, double mean_sq_norm);
  double value(int client) const;
  /// Unobserved clients filled with the mean value of observed ones.
  Vector values_filled() const;
  const IntVector& counts() const { return counts_; }
  int num_clients() const { return static_cast<int>(mean_sq_.size()); }
  long total_observations() const { return counts_.cast<long>().sum(); }

 private:
  Vector mean_sq_;
  IntVector counts_;
};

/// Inverse-probability aggregation: w + sum over sampled of
/// m_i * p_i/(K q_i) * (update_i - w).
ModelParams aggregate(const ModelParams& server, const std::map<int, ModelParams>& updates,
                      const Multiset& sampled, const Vector& q, int K, const Vector& p);

/// Full-participation weighted mean sum_i p_i update_i.
ModelParams aggregate_full(const std::map<int, ModelParams>& updates, const Vector& p);

struct StopRule {
  enum class Kind { kFixedRounds, kTargetLoss, kTimeBudget };
  Kind kind = Kind::kFixedRounds;
  int rounds = 1;           // kFixedRounds
  double target_loss = 0.0; // kTargetLoss
  double budget_s = 0.0;    // kTimeBudget
  int cap = 100000;         // safety cap for target/budget modes

  static StopRule fixed_rounds(int r);
  static StopRule target(double loss, int cap);
  static StopRule time_budget(double seconds, int cap);
};

enum class StopReason { kRoundsDone, kTargetReached, kBudgetSpent, kCapHit };

struct LrSchedule {
  enum class Kind { kHarmonic, kTheory, kConstant };
  Kind kind = Kind::kHarmonic;
  double eta0 = 0.1;   // harmonic: eta0 / (1 + r); constant: eta0
  double mu = 1e-4;    // theory: 2 / (mu * (gamma + r))
  double gamma = 1.0;

  double at(int round) const;
};

struct RunConfig {
  const std::vector<ClientData>* clients = nullptr;
  const Vector* p = nullptr;
  const SystemProfile* profile = nullptr;
  int K = 10;
  int E = 50;
  int batch_size = 24;
  double lambda = 1e-4;
  LrSchedule lr;
  std::uint64_t master_seed = 0;
  const Matrix* test_features = nullptr;        // optional
  const std::vector<int>* test_labels = nullptr;
};

struct RunResult {
  std::vector<RoundRecord> trace;
  GEstimates g;
  ModelParams params;
  StopReason reason = StopReason::kRoundsDone;
  bool reached_target = false;
  double initial_loss = 0.0;
  double total_time_s = 0.0;

  /// First 1-based round count at which the loss dropped to `level`, if any.
  std::optional<int> rounds_to_loss(double level) const;
  /// Cumulative time at that crossing.
  std::optional<double> time_to_loss(double level) const;
};

/// Runs the sampled FedAvg loop: sample a K-multiset by q, local SGD on the
/// distinct sampled clients, inverse-probability aggregation, loss tracking
/// and G updates. Resumable: pass the previous run's params/G and the next
/// round index to continue a trajectory (learning-rate schedule and rng
/// streams key off the absolute round).
RunResult run_rounds(const SamplingScheme& scheme, const StopRule& stop, const RunConfig& cfg,
                     const ModelParams& init, GEstimates g = {}, int start_round = 0);

}  // namespace fedsamp
