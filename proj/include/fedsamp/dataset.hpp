#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedsamp/types.hpp"

namespace fedsamp {

/// A labelled feature matrix. Rows are samples.
struct Dataset {
  Matrix features;          // num_samples x dim
  std::vector<int> labels;  // values in [0, num_classes)
  int num_classes = 0;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
};

/// Disjoint assignment of dataset rows to clients, with the derived
/// sample-count weights p_i = n_i / n_tot.
struct ClientPartition {
  std::vector<std::vector<int>> assignments;  // per-client row indices
  Vector p;                                   // per-client weight, sums to 1

  int num_clients() const { return static_cast<int>(assignments.size()); }
  int count(int client) const { return static_cast<int>(assignments[client].size()); }
  int total_samples() const;
};

/// Validates labels, finiteness and partition structure; throws on violation.
void validate(const Dataset& ds);
void validate(const ClientPartition& part, const Dataset& ds);

/// Generates the heterogeneous synthetic classification set: each client k
/// draws its own softmax model (entries ~ N(u_k, 1), u_k ~ N(0, alpha)) and
/// its own feature distribution (x ~ N(v_k, diag(j^-1.2)), v_k[j] ~ N(B_k, 1),
/// B_k ~ N(0, beta)); labels are the argmax of the client model's logits.
/// Client sizes follow a power law over ranks (see power_law_sizes).
std::pair<Dataset, ClientPartition> generate_synthetic(
    double alpha, double beta, int n_clients, int dim, int num_classes,
    std::uint64_t seed, int total_samples = 20509, double power_exponent = 1.5);

/// Deterministic unbalanced sizes: raw_i proportional to rank^-exponent,
/// scaled to `total` with largest-remainder rounding, every size >= 1.
std::vector<int> power_law_sizes(int n_clients, int total, double exponent);

/// Splits an existing dataset across clients with power-law sizes and a
/// per-client class count drawn uniformly from classes_per_client (label
/// skew). Sizes and class counts are randomly matched.
ClientPartition partition_power_law(const Dataset& dataset, int n_clients,
                                    double power_exponent,
                                    std::pair<int, int> classes_per_client,
                                    std::uint64_t seed);

/// Moves a fraction of every client's rows into a pooled holdout set and
/// rebuilds the train partition (weights recomputed on the remainder).
std::pair<ClientPartition, std::vector<int>> split_holdout(
    const ClientPartition& part, double fraction, std::uint64_t seed);

/// CSV with header f0,...,f{dim-1},label. Errors carry the 1-based line.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

}  // namespace fedsamp
