#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fedsamp/dataset.hpp"
#include "fedsamp/errors.hpp"

using namespace fedsamp;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

double size_variance(const ClientPartition& part) {
  double mean = 0.0;
  for (const auto& a : part.assignments) mean += static_cast<double>(a.size());
  mean /= part.num_clients();
  double var = 0.0;
  for (const auto& a : part.assignments) {
    const double d = static_cast<double>(a.size()) - mean;
    var += d * d;
  }
  return var / part.num_clients();
}

}  // namespace

TEST_CASE("power_law_sizes keeps the exact total with unbalanced shares") {
  const auto sizes = power_law_sizes(100, 20509, 1.5);
  long total = 0;
  for (int s : sizes) {
    CHECK(s >= 1);
    total += s;
  }
  CHECK(total == 20509);
  CHECK(sizes.front() > sizes.back());

  const auto flat = power_law_sizes(10, 1000, 0.0);
  for (int s : flat) CHECK(s == 100);
}

TEST_CASE("generate_synthetic produces the configured shape") {
  auto [ds, part] = generate_synthetic(1.0, 1.0, 100, 60, 10, 42);
  CHECK(ds.size() == 20509);
  CHECK(ds.dim() == 60);
  CHECK(ds.num_classes == 10);
  CHECK(part.num_clients() == 100);
  CHECK(std::abs(part.p.sum() - 1.0) <= 1e-12);
  CHECK(part.count(0) > part.count(99));  // unbalanced power-law sizes
  validate(ds);
  validate(part, ds);

  // Labels cover more than one class.
  std::set<int> seen(ds.labels.begin(), ds.labels.end());
  CHECK(seen.size() > 1);
}

TEST_CASE("generate_synthetic single client holds everything") {
  auto [ds, part] = generate_synthetic(1.0, 1.0, 1, 60, 10, 7, 500);
  CHECK(part.num_clients() == 1);
  CHECK(part.p[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(part.count(0) == 500);
  CHECK(ds.size() == 500);
}

TEST_CASE("generate_synthetic is deterministic in the seed") {
  auto [a_ds, a_part] = generate_synthetic(0.5, 0.5, 12, 8, 4, 1234, 600);
  auto [b_ds, b_part] = generate_synthetic(0.5, 0.5, 12, 8, 4, 1234, 600);
  CHECK((a_ds.features - b_ds.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a_ds.labels == b_ds.labels);
  CHECK(a_part.assignments == b_part.assignments);

  auto [c_ds, c_part] = generate_synthetic(0.5, 0.5, 12, 8, 4, 1235, 600);
  CHECK((a_ds.features - c_ds.features).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("generate_synthetic rejects invalid sizes") {
  CHECK_THROWS_AS(generate_synthetic(1, 1, 0, 60, 10, 1), ArgumentError);
  CHECK_THROWS_AS(generate_synthetic(1, 1, 10, 0, 10, 1), ArgumentError);
  CHECK_THROWS_AS(generate_synthetic(1, 1, 10, 60, 1, 1), ArgumentError);
  CHECK_THROWS_AS(generate_synthetic(1, 1, 10, 60, 10, 1, 5), ArgumentError);
}

TEST_CASE("partition_power_law splits an existing dataset") {
  auto [ds, ignored] = generate_synthetic(1.0, 1.0, 10, 6, 10, 77, 2000);

  SUBCASE("valid partition with class skew") {
    const ClientPartition part = partition_power_law(ds, 100, 1.5, {1, 10}, 5);
    CHECK(part.num_clients() == 100);
    CHECK(std::abs(part.p.sum() - 1.0) <= 1e-12);
    validate(part, ds);
  }

  SUBCASE("saturation: one sample per client") {
    const ClientPartition part = partition_power_law(ds, static_cast<int>(ds.size()), 1.0,
                                                     {1, ds.num_classes}, 5);
    for (const auto& a : part.assignments) CHECK(a.size() == 1);
  }

  SUBCASE("single-class clients when the range is (1,1)") {
    const ClientPartition part = partition_power_law(ds, 20, 1.2, {1, 1}, 5);
    for (const auto& rows : part.assignments) {
      std::set<int> classes;
      for (int r : rows) classes.insert(ds.labels[static_cast<size_t>(r)]);
      CHECK(classes.size() == 1);
    }
  }

  SUBCASE("flat exponent with the full class range is closer to i.i.d.") {
    // Sizes are what is compared; giving every client the whole class set
    // keeps each split feasible for any size draw.
    double flat_var = 0.0, skew_var = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
      flat_var += size_variance(
          partition_power_law(ds, 25, 0.0, {ds.num_classes, ds.num_classes}, seed));
      skew_var += size_variance(
          partition_power_law(ds, 25, 1.5, {ds.num_classes, ds.num_classes}, seed));
    }
    CHECK(flat_var < skew_var);
  }

  SUBCASE("range outside the class set is rejected") {
    CHECK_THROWS_AS(partition_power_law(ds, 10, 1.5, {0, 3}, 5), ArgumentError);
    CHECK_THROWS_AS(partition_power_law(ds, 10, 1.5, {1, 99}, 5), ArgumentError);
    CHECK_THROWS_AS(partition_power_law(ds, static_cast<int>(ds.size()) + 1, 1.5, {1, 3}, 5),
                    ArgumentError);
  }
}

TEST_CASE("partition_power_law reports infeasible class/size combinations") {
  // Two classes split 99/1; two equally sized clients both restricted to a
  // single class cannot be filled.
  Dataset ds;
  ds.features = Matrix::Random(100, 2);
  ds.labels.assign(100, 0);
  ds.labels[99] = 1;
  ds.num_classes = 2;
  CHECK_THROWS_AS(partition_power_law(ds, 2, 0.0, {1, 1}, 3), PartitionError);
  try {
    partition_power_law(ds, 2, 0.0, {1, 1}, 3);
  } catch (const PartitionError& e) {
    CHECK(std::string(e.what()).find("infeasible") != std::string::npos);
  }
}

TEST_CASE("split_holdout keeps partitions disjoint and reweighted") {
  auto [ds, part] = generate_synthetic(1.0, 1.0, 10, 6, 4, 11, 800);
  auto [train, holdout] = split_holdout(part, 0.25, 99);

  CHECK(std::abs(train.p.sum() - 1.0) <= 1e-12);
  std::set<int> held(holdout.begin(), holdout.end());
  CHECK(held.size() == holdout.size());
  int train_total = 0;
  for (const auto& rows : train.assignments) {
    CHECK(!rows.empty());
    train_total += static_cast<int>(rows.size());
    for (int r : rows) CHECK(held.count(r) == 0);
  }
  CHECK(train_total + static_cast<int>(holdout.size()) == 800);
  CHECK(static_cast<double>(holdout.size()) / 800.0 == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("csv round trip and error reporting") {
  SUBCASE("small direct parse") {
    const std::string path = temp_path("fedsamp_small.csv");
    std::ofstream out(path);
    out << "f0,f1,label\n0.5,1.25,0\n-1,2,1\n3,4,1\n";
    out.close();
    const Dataset ds = load_csv(path);
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.features(0, 1) == 1.25);
    std::filesystem::remove(path);
  }

  SUBCASE("empty file is a schema error") {
    const std::string path = temp_path("fedsamp_empty.csv");
    std::ofstream(path).close();
    CHECK_THROWS_AS(load_csv(path), SchemaError);
    std::filesystem::remove(path);
  }

  SUBCASE("header-only file is a schema error") {
    const std::string path = temp_path("fedsamp_header.csv");
    std::ofstream(path) << "f0,f1,label\n";
    CHECK_THROWS_AS(load_csv(path), SchemaError);
    std::filesystem::remove(path);
  }

  SUBCASE("malformed row names the line") {
    const std::string path = temp_path("fedsamp_bad.csv");
    std::ofstream(path) << "f0,f1,label\n1,2,0\n1,zap,1\n";
    try {
      load_csv(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    std::filesystem::remove(path);
  }

  SUBCASE("non-integer label is a schema error") {
    const std::string path = temp_path("fedsamp_label.csv");
    std::ofstream(path) << "f0,f1,label\n1,2,0.5\n";
    CHECK_THROWS_AS(load_csv(path), SchemaError);
    std::filesystem::remove(path);
  }

  SUBCASE("generated set round-trips through disk") {
    auto [ds, part] = generate_synthetic(1.0, 1.0, 5, 7, 4, 21, 300);
    const std::string path = temp_path("fedsamp_roundtrip.csv");
    save_csv(ds, path);
    const Dataset back = load_csv(path);
    CHECK(back.size() == ds.size());
    CHECK(back.dim() == ds.dim());
    CHECK(back.num_classes == ds.num_classes);
    CHECK((back.features - ds.features).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(back.labels == ds.labels);
    std::filesystem::remove(path);
  }
}
