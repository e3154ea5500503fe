#include "fedsamp/model.hpp"

#include <cmath>
#include <numeric>

#include "fedsamp/errors.hpp"

namespace fedsamp {

std::vector<ClientData> gather_client_data(const Dataset& ds, const ClientPartition& part) {
  std::vector<ClientData> out(static_cast<size_t>(part.num_clients()));
  for (int k = 0; k < part.num_clients(); ++k) {
    const auto& rows = part.assignments[static_cast<size_t>(k)];
    ClientData& cd = out[static_cast<size_t>(k)];
    cd.features.resize(static_cast<Index>(rows.size()), ds.dim());
    cd.labels.resize(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      cd.features.row(static_cast<Index>(i)) = ds.features.row(rows[i]);
      cd.labels[i] = ds.labels[static_cast<size_t>(rows[i])];
    }
  }
  return out;
}

namespace {

void check_shapes(const ModelParams& params, const ClientData& data) {
  if (params.weights.cols() != data.features.cols())
    throw ShapeError("model dim does not match data dim");
  if (params.bias.size() != params.weights.rows())
    throw ShapeError("bias length does not match class count");
}

// logits: n x C. Returns sum over rows of (logsumexp(z_i) - z_i[y_i]).
double cross_entropy_sum(const Matrix& logits, const std::vector<int>& labels) {
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const double zmax = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) sum += std::exp(logits(i, c) - zmax);
    total += zmax + std::log(sum) - logits(i, static_cast<Index>(labels[static_cast<size_t>(i)]));
  }
  return total;
}

// In-place softmax of each row, computed against the row max.
void softmax_rows(Matrix& logits) {
  for (Index i = 0; i < logits.rows(); ++i) {
    const double zmax = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - zmax).exp();
    logits.row(i) /= logits.row(i).sum();
  }
}

}  // namespace

double local_loss(const ModelParams& params, const ClientData& data, double lambda) {
  check_shapes(params, data);
  if (data.size() < 1) throw ArgumentError("client has no samples");
  Matrix logits = data.features * params.weights.transpose();
  logits.rowwise() += params.bias.transpose();
  const double ce = cross_entropy_sum(logits, data.labels) / static_cast<double>(data.size());
  return ce + 0.5 * lambda * params.squared_norm();
}

double global_loss(const ModelParams& params, const std::vector<ClientData>& clients,
                   const Vector& p, double lambda) {
  if (static_cast<Index>(clients.size()) != p.size())
    throw ShapeError("client count does not match weight vector");
  double total = 0.0;
  for (size_t k = 0; k < clients.size(); ++k)
    total += p[static_cast<Index>(k)] * local_loss(params, clients[k], lambda);
  return total;
}

double accuracy(const ModelParams& params, const Matrix& features,
                const std::vector<int>& labels) {
  if (features.rows() == 0) return 0.0;
  Matrix logits = features * params.weights.transpose();
  logits.rowwise() += params.bias.transpose();
  Index hits = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index argmax = 0;
    logits.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == labels[static_cast<size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

namespace {

// Reused buffers for the SGD inner loop; one instance per local_sgd call.
struct SgdScratch {
  std::vector<int> pool;   // partial Fisher-Yates state over the client's rows
  Matrix batch_features;   // b x dim
  std::vector<int> batch_labels;
  Matrix logits;           // b x C
  Matrix grad_w;           // C x dim
  Vector grad_b;           // C

  SgdScratch(Index n, Index dim, Index classes, int batch) {
    pool.resize(static_cast<size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    batch_features.resize(batch, dim);
    batch_labels.resize(static_cast<size_t>(batch));
    logits.resize(batch, classes);
    grad_w.resize(classes, dim);
    grad_b.resize(classes);
  }

  // Draws `b` distinct row indices into pool[0..b) uniformly at random.
  void draw_batch(int b, Rng& rng) {
    const int n = static_cast<int>(pool.size());
    for (int j = 0; j < b; ++j) {
      std::uniform_int_distribution<int> pick(j, n - 1);
      std::swap(pool[static_cast<size_t>(j)], pool[static_cast<size_t>(pick(rng))]);
    }
  }
};

// Computes the mini-batch gradient into scratch.grad_w / grad_b using the
// rows listed in scratch.pool[0..b). Returns the squared gradient norm.
double batch_gradient(const ModelParams& params, const ClientData& data, double lambda,
                      int b, SgdScratch& s) {
  for (int i = 0; i < b; ++i) {
    const int row = s.pool[static_cast<size_t>(i)];
    s.batch_features.row(i) = data.features.row(row);
    s.batch_labels[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(row)];
  }
  auto xb = s.batch_features.topRows(b);
  auto zb = s.logits.topRows(b);
  zb.noalias() = xb * params.weights.transpose();
  zb.rowwise() += params.bias.transpose();
  for (Index i = 0; i < b; ++i) {
    const double zmax = zb.row(i).maxCoeff();
    zb.row(i) = (zb.row(i).array() - zmax).exp();
    zb.row(i) /= zb.row(i).sum();
    zb(i, static_cast<Index>(s.batch_labels[static_cast<size_t>(i)])) -= 1.0;
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  s.grad_w.noalias() = inv_b * (zb.transpose() * xb);
  s.grad_w += lambda * params.weights;
  s.grad_b.noalias() = inv_b * zb.colwise().sum().transpose();
  s.grad_b += lambda * params.bias;
  return s.grad_w.squaredNorm() + s.grad_b.squaredNorm();
}

}  // namespace

StochasticGradient stochastic_gradient(const ModelParams& params, const ClientData& data,
                                       double lambda, int batch_size, Rng& rng) {
  check_shapes(params, data);
  if (data.size() < 1) throw ArgumentError("client has no samples");
  if (batch_size < 1 || batch_size > data.size())
    throw ArgumentError("batch_size outside [1, n_i]");

  SgdScratch scratch(data.size(), params.dim(), params.num_classes(), batch_size);
  scratch.draw_batch(batch_size, rng);
  const double sq = batch_gradient(params, data, lambda, batch_size, scratch);
  return {{std::move(scratch.grad_w), std::move(scratch.grad_b)}, sq};
}

LocalUpdateResult local_sgd(const ModelParams& start, const ClientData& data,
                            const LocalSgdOptions& opt, Rng& rng) {
  check_shapes(start, data);
  if (opt.steps < 1) throw ArgumentError("steps must be >= 1");
  if (opt.lr < 0.0) throw ArgumentError("learning rate must be >= 0");
  const int b = std::min<int>(opt.batch_size, static_cast<int>(data.size()));
  if (b < 1) throw ArgumentError("client has no samples");

  LocalUpdateResult out;
  out.params = start;
  SgdScratch scratch(data.size(), start.dim(), start.num_classes(), b);

  double sq_sum = 0.0;
  for (int step = 0; step < opt.steps; ++step) {
    scratch.draw_batch(b, rng);
    const double sq = batch_gradient(out.params, data, opt.lambda, b, scratch);
    if (!std::isfinite(sq))
      throw DivergenceError("non-finite gradient during local update", -1, step);
    sq_sum += sq;
    out.params.weights -= opt.lr * scratch.grad_w;
    out.params.bias -= opt.lr * scratch.grad_b;
  }
  out.grad_norm_stats = sq_sum / static_cast<double>(opt.steps);
  out.steps_taken = opt.steps;
  return out;
}

}  // namespace fedsamp
