#include "fedsamp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedsamp/errors.hpp"
#include "fedsamp/rng.hpp"

namespace fedsamp {

int ClientPartition::total_samples() const {
  int n = 0;
  for (const auto& a : assignments) n += static_cast<int>(a.size());
  return n;
}

void validate(const Dataset& ds) {
  if (ds.size() < 1) throw SchemaError("dataset is empty");
  if (ds.dim() < 1) throw SchemaError("dataset has no feature columns");
  if (ds.num_classes < 1) throw SchemaError("dataset has no classes");
  if (static_cast<Index>(ds.labels.size()) != ds.size())
    throw ShapeError("label count does not match feature rows");
  if (!ds.features.allFinite()) throw SchemaError("dataset contains non-finite features");
  for (int y : ds.labels)
    if (y < 0 || y >= ds.num_classes)
      throw SchemaError("label outside [0, num_classes)");
}

void validate(const ClientPartition& part, const Dataset& ds) {
  if (part.num_clients() < 1) throw ArgumentError("partition has no clients");
  if (part.p.size() != part.num_clients())
    throw ShapeError("weight vector length does not match client count");
  std::vector<char> seen(static_cast<size_t>(ds.size()), 0);
  long total = 0;
  for (const auto& a : part.assignments) {
    if (a.empty()) throw PartitionError("partition contains an empty client");
    for (int idx : a) {
      if (idx < 0 || idx >= ds.size()) throw PartitionError("partition index out of range");
      if (seen[static_cast<size_t>(idx)]++) throw PartitionError("partition index assigned twice");
    }
    total += static_cast<long>(a.size());
  }
  for (int i = 0; i < part.num_clients(); ++i) {
    double expected = static_cast<double>(part.assignments[i].size()) / static_cast<double>(total);
    if (std::abs(part.p[i] - expected) > 1e-12)
      throw PartitionError("weights p_i are not n_i / n_tot");
  }
  if (std::abs(part.p.sum() - 1.0) > 1e-12)
    throw PartitionError("weights do not sum to 1");
}

std::vector<int> power_law_sizes(int n_clients, int total, double exponent) {
  if (n_clients < 1) throw ArgumentError("n_clients must be >= 1");
  if (total < n_clients) throw ArgumentError("total samples below one per client");

  std::vector<double> raw(static_cast<size_t>(n_clients));
  double sum = 0.0;
  for (int i = 0; i < n_clients; ++i) {
    raw[static_cast<size_t>(i)] = std::pow(static_cast<double>(i + 1), -exponent);
    sum += raw[static_cast<size_t>(i)];
  }

  // Largest-remainder rounding keeps the exact total.
  std::vector<int> sizes(static_cast<size_t>(n_clients));
  std::vector<std::pair<double, int>> fractional;
  int assigned = 0;
  for (int i = 0; i < n_clients; ++i) {
    double share = raw[static_cast<size_t>(i)] / sum * total;
    sizes[static_cast<size_t>(i)] = static_cast<int>(std::floor(share));
    assigned += sizes[static_cast<size_t>(i)];
    fractional.emplace_back(share - std::floor(share), i);
  }
  std::sort(fractional.begin(), fractional.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int k = 0; k < total - assigned; ++k)
    sizes[static_cast<size_t>(fractional[static_cast<size_t>(k)].second)] += 1;

  // Every client keeps at least one sample; deficit comes out of the largest.
  for (int i = n_clients - 1; i >= 0; --i) {
    while (sizes[static_cast<size_t>(i)] < 1) {
      auto largest = std::max_element(sizes.begin(), sizes.end());
      if (*largest <= 1) throw PartitionError("cannot give every client one sample");
      --*largest;
      ++sizes[static_cast<size_t>(i)];
    }
  }
  return sizes;
}

std::pair<Dataset, ClientPartition> generate_synthetic(double alpha, double beta,
                                                       int n_clients, int dim,
                                                       int num_classes,
                                                       std::uint64_t seed,
                                                       int total_samples,
                                                       double power_exponent) {
  if (n_clients < 1) throw ArgumentError("n_clients must be >= 1");
  if (dim < 1) throw ArgumentError("dim must be >= 1");
  if (num_classes < 2) throw ArgumentError("num_classes must be >= 2");
  if (total_samples < n_clients) throw ArgumentError("total_samples below one per client");

  std::vector<int> sizes = power_law_sizes(n_clients, total_samples, power_exponent);

  Dataset ds;
  ds.features.resize(total_samples, dim);
  ds.labels.resize(static_cast<size_t>(total_samples));
  ds.num_classes = num_classes;

  Vector feature_std(dim);
  for (int j = 0; j < dim; ++j) feature_std[j] = std::pow(static_cast<double>(j + 1), -0.6);

  ClientPartition part;
  part.assignments.resize(static_cast<size_t>(n_clients));
  part.p.resize(n_clients);

  int offset = 0;
  for (int k = 0; k < n_clients; ++k) {
    Rng rng = make_rng(derive_seed(seed, Stream::kData, {static_cast<std::uint64_t>(k)}));
    std::normal_distribution<double> unit(0.0, 1.0);

    double u_k = unit(rng) * std::sqrt(alpha);
    double b_mean = unit(rng) * std::sqrt(beta);

    Matrix w_k(num_classes, dim);
    Vector bias_k(num_classes);
    for (int c = 0; c < num_classes; ++c) {
      for (int j = 0; j < dim; ++j) w_k(c, j) = u_k + unit(rng);
      bias_k[c] = u_k + unit(rng);
    }
    Vector v_k(dim);
    for (int j = 0; j < dim; ++j) v_k[j] = b_mean + unit(rng);

    const int n_k = sizes[static_cast<size_t>(k)];
    part.assignments[static_cast<size_t>(k)].resize(static_cast<size_t>(n_k));
    for (int s = 0; s < n_k; ++s) {
      const int row = offset + s;
      Vector x(dim);
      for (int j = 0; j < dim; ++j) x[j] = v_k[j] + feature_std[j] * unit(rng);
      ds.features.row(row) = x.transpose();
      Vector logits = w_k * x + bias_k;
      Index argmax = 0;
      logits.maxCoeff(&argmax);
      ds.labels[static_cast<size_t>(row)] = static_cast<int>(argmax);
      part.assignments[static_cast<size_t>(k)][static_cast<size_t>(s)] = row;
    }
    part.p[k] = static_cast<double>(n_k) / static_cast<double>(total_samples);
    offset += n_k;
  }
  return {std::move(ds), std::move(part)};
}

ClientPartition partition_power_law(const Dataset& dataset, int n_clients,
                                    double power_exponent,
                                    std::pair<int, int> classes_per_client,
                                    std::uint64_t seed) {
  const int n = static_cast<int>(dataset.size());
  const int num_classes = dataset.num_classes;
  if (n_clients > n) throw ArgumentError("more clients than samples");
  auto [cls_lo, cls_hi] = classes_per_client;
  if (cls_lo < 1 || cls_hi < cls_lo || cls_hi > num_classes)
    throw ArgumentError("classes_per_client range outside [1, num_classes]");

  std::vector<int> sizes = power_law_sizes(n_clients, n, power_exponent);

  Rng rng = make_rng(derive_seed(seed, Stream::kPartition));

  // Per-class index pools, shuffled once; allocation draws from the back.
  std::vector<std::vector<int>> pools(static_cast<size_t>(num_classes));
  for (int i = 0; i < n; ++i)
    pools[static_cast<size_t>(dataset.labels[static_cast<size_t>(i)])].push_back(i);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);

  // Class counts are drawn independently of the size ranks ("randomly
  // matched": large clients are not biased toward more classes).
  std::uniform_int_distribution<int> cls_count(cls_lo, cls_hi);
  std::vector<int> wanted_classes(static_cast<size_t>(n_clients));
  for (int k = 0; k < n_clients; ++k) wanted_classes[static_cast<size_t>(k)] = cls_count(rng);

  ClientPartition part;
  part.assignments.resize(static_cast<size_t>(n_clients));
  part.p.resize(n_clients);

  // Largest clients first; each takes its classes from the fullest pools so
  // late small clients still find samples.
  std::vector<int> order(static_cast<size_t>(n_clients));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return sizes[static_cast<size_t>(a)] > sizes[static_cast<size_t>(b)];
  });

  for (int k : order) {
    const int need = sizes[static_cast<size_t>(k)];
    const int n_cls = std::min(wanted_classes[static_cast<size_t>(k)], num_classes);

    std::vector<int> by_remaining(static_cast<size_t>(num_classes));
    std::iota(by_remaining.begin(), by_remaining.end(), 0);
    std::stable_sort(by_remaining.begin(), by_remaining.end(), [&](int a, int b) {
      return pools[static_cast<size_t>(a)].size() > pools[static_cast<size_t>(b)].size();
    });
    std::vector<int> chosen(by_remaining.begin(), by_remaining.begin() + n_cls);

    long available = 0;
    for (int c : chosen) available += static_cast<long>(pools[static_cast<size_t>(c)].size());
    if (available < need) {
      std::ostringstream msg;
      msg << "infeasible class/size combination: client " << k << " needs " << need
          << " samples from " << n_cls << " classes with only " << available << " remaining";
      throw PartitionError(msg.str());
    }

    auto& rows = part.assignments[static_cast<size_t>(k)];
    rows.reserve(static_cast<size_t>(need));
    int taken = 0;
    // Round-robin across the chosen classes for an even split, skipping
    // exhausted pools.
    size_t turn = 0;
    while (taken < need) {
      auto& pool = pools[static_cast<size_t>(chosen[turn % chosen.size()])];
      if (!pool.empty()) {
        rows.push_back(pool.back());
        pool.pop_back();
        ++taken;
      }
      ++turn;
      if (turn > chosen.size() * static_cast<size_t>(need + 1) + 16)
        throw PartitionError("class pools exhausted while filling client");
    }
    std::sort(rows.begin(), rows.end());
  }

  for (int k = 0; k < n_clients; ++k)
    part.p[k] = static_cast<double>(sizes[static_cast<size_t>(k)]) / static_cast<double>(n);
  return part;
}

std::pair<ClientPartition, std::vector<int>> split_holdout(const ClientPartition& part,
                                                           double fraction,
                                                           std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw ArgumentError("holdout fraction outside [0, 1)");

  ClientPartition train;
  train.assignments.resize(part.assignments.size());
  train.p.resize(part.num_clients());
  std::vector<int> holdout;

  long total_train = 0;
  for (int k = 0; k < part.num_clients(); ++k) {
    std::vector<int> rows = part.assignments[static_cast<size_t>(k)];
    Rng rng = make_rng(derive_seed(seed, Stream::kHoldout, {static_cast<std::uint64_t>(k)}));
    std::shuffle(rows.begin(), rows.end(), rng);
    int n_hold = static_cast<int>(std::floor(fraction * static_cast<double>(rows.size())));
    n_hold = std::min<int>(n_hold, static_cast<int>(rows.size()) - 1);  // keep >= 1 train sample
    for (int i = 0; i < n_hold; ++i) holdout.push_back(rows[static_cast<size_t>(i)]);
    auto& keep = train.assignments[static_cast<size_t>(k)];
    keep.assign(rows.begin() + n_hold, rows.end());
    std::sort(keep.begin(), keep.end());
    total_train += static_cast<long>(keep.size());
  }
  for (int k = 0; k < part.num_clients(); ++k)
    train.p[k] = static_cast<double>(train.assignments[static_cast<size_t>(k)].size()) /
                 static_cast<double>(total_train);
  std::sort(holdout.begin(), holdout.end());
  return {std::move(train), std::move(holdout)};
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
  std::vector<std::string> header = split_fields(line);
  if (header.size() < 2 || header.back() != "label")
    throw SchemaError(path + ": header must be f0,...,f{dim-1},label");
  const int dim = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < dim; ++j) {
    if (header[static_cast<size_t>(j)] != "f" + std::to_string(j))
      throw SchemaError(path + ": feature column " + std::to_string(j) + " must be named f" +
                        std::to_string(j));
  }

  std::vector<double> values;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_fields(line);
    if (static_cast<int>(fields.size()) != dim + 1)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(dim + 1) + " fields, got " + std::to_string(fields.size()));
    for (int j = 0; j < dim; ++j) {
      size_t pos = 0;
      double v;
      try {
        v = std::stod(fields[static_cast<size_t>(j)], &pos);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric feature");
      }
      if (pos != fields[static_cast<size_t>(j)].size() || !std::isfinite(v))
        throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric feature");
      values.push_back(v);
    }
    const std::string& lf = fields[static_cast<size_t>(dim)];
    size_t pos = 0;
    long y;
    try {
      y = std::stol(lf, &pos);
    } catch (const std::exception&) {
      throw SchemaError(path + ":" + std::to_string(line_no) + ": label must be an integer");
    }
    if (pos != lf.size() || y < 0)
      throw SchemaError(path + ":" + std::to_string(line_no) + ": label must be a nonnegative integer");
    labels.push_back(static_cast<int>(y));
  }
  if (labels.empty()) throw SchemaError(path + ": no data rows");

  Dataset ds;
  const Index rows = static_cast<Index>(labels.size());
  ds.features.resize(rows, dim);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < dim; ++j)
      ds.features(i, j) = values[static_cast<size_t>(i * dim + j)];
  ds.labels = std::move(labels);
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  validate(ds);
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  for (Index j = 0; j < ds.dim(); ++j) out << "f" << j << ",";
  out << "label\n";
  char buf[40];
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
      out << buf << ",";
    }
    out << ds.labels[static_cast<size_t>(i)] << "\n";
  }
  if (!out) throw ParseError("write failed for " + path);
}

}  // namespace fedsamp
