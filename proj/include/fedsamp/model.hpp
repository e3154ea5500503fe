#pragma once

#include <vector>

#include "fedsamp/dataset.hpp"
#include "fedsamp/rng.hpp"
#include "fedsamp/types.hpp"

namespace fedsamp {

/// Multinomial logistic regression parameters.
struct ModelParams {
  Matrix weights;  // num_classes x dim
  Vector bias;     // num_classes

  static ModelParams zeros(int num_classes, int dim) {
    return {Matrix::Zero(num_classes, dim), Vector::Zero(num_classes)};
  }
  double squared_norm() const { return weights.squaredNorm() + bias.squaredNorm(); }
  bool all_finite() const { return weights.allFinite() && bias.allFinite(); }
  Index num_classes() const { return weights.rows(); }
  Index dim() const { return weights.cols(); }
};

/// One client's rows gathered into a dense block for fast repeated access.
struct ClientData {
  Matrix features;          // n_i x dim
  std::vector<int> labels;  // n_i
  Index size() const { return features.rows(); }
};

std::vector<ClientData> gather_client_data(const Dataset& ds, const ClientPartition& part);

struct LocalSgdOptions {
  int steps = 1;        // E
  double lr = 0.1;
  int batch_size = 24;  // clamped to the client's sample count by the caller
  double lambda = 1e-4;
};

struct LocalUpdateResult {
  ModelParams params;
  double grad_norm_stats = 0.0;  // mean squared gradient norm over the steps
  int steps_taken = 0;
};

struct StochasticGradient {
  ModelParams grad;
  double sq_norm = 0.0;
};

/// Mean cross-entropy over the given block plus (lambda/2)*||params||^2.
double local_loss(const ModelParams& params, const ClientData& data, double lambda);

/// Weighted sum of per-client losses, weights p_i.
double global_loss(const ModelParams& params, const std::vector<ClientData>& clients,
                   const Vector& p, double lambda);

/// Fraction of rows whose argmax logit matches the label.
double accuracy(const ModelParams& params, const Matrix& features, const std::vector<int>& labels);

/// Gradient of the mini-batch loss at `params`; the batch is `batch_size`
/// distinct rows drawn uniformly. sq_norm is the squared Euclidean norm of
/// the full flattened gradient.
StochasticGradient stochastic_gradient(const ModelParams& params, const ClientData& data,
                                       double lambda, int batch_size, Rng& rng);

/// E sequential mini-batch SGD steps at a fixed learning rate.
LocalUpdateResult local_sgd(const ModelParams& start, const ClientData& data,
                            const LocalSgdOptions& opt, Rng& rng);

}  // namespace fedsamp
