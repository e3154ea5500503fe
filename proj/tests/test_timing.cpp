#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fedsamp/engine.hpp"
#include "fedsamp/errors.hpp"
#include "fedsamp/rng.hpp"
#include "fedsamp/timing.hpp"

using namespace fedsamp;

TEST_CASE("draw_profile uniform range matches its mean") {
  double total = 0.0;
  int count = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const SystemProfile p = draw_profile(DelaySpec::uniform_range(0.187, 7.159), 40, seed);
    total += p.sorted_times().sum();
    count += p.num_clients();
    CHECK(p.min_time() >= 0.187);
    CHECK(p.max_time() <= 7.159);
  }
  CHECK(std::abs(total / count - 3.673) < 0.5);
}

TEST_CASE("draw_profile fixed gives identical entries") {
  const SystemProfile p = draw_profile(DelaySpec::fixed(2.5), 7, 9);
  for (int i = 0; i < 7; ++i) CHECK(p.time_of(i) == 2.5);
}

TEST_CASE("draw_profile exponential moments") {
  const SystemProfile p = draw_profile(DelaySpec::exponential(1.0), 100000, 3);
  const double mean = p.sorted_times().mean();
  const double sq = p.sorted_times().squaredNorm() / p.num_clients();
  const double stddev = std::sqrt(sq - mean * mean);
  CHECK(std::abs(mean - 1.0) < 0.02);
  CHECK(std::abs(stddev - 1.0) < 0.02);
}

TEST_CASE("draw_profile rejects bad parameters") {
  CHECK_THROWS_AS(draw_profile(DelaySpec::uniform_range(0.0, 1.0), 4, 1), ArgumentError);
  CHECK_THROWS_AS(draw_profile(DelaySpec::exponential(-1.0), 4, 1), ArgumentError);
  CHECK_THROWS_AS(draw_profile(DelaySpec::fixed(0.0), 4, 1), ArgumentError);
  CHECK_THROWS_AS(draw_profile(DelaySpec::explicit_times({1.0, 2.0}), 3, 1), ArgumentError);
  CHECK_THROWS_AS(SystemProfile::from_times({1.0, -2.0}), ArgumentError);
}

TEST_CASE("profile keeps the client permutation") {
  const SystemProfile p = SystemProfile::from_times({3.0, 1.0, 2.0});
  CHECK(p.time_of(0) == 3.0);
  CHECK(p.time_of(1) == 1.0);
  CHECK(p.time_of(2) == 2.0);
  CHECK(p.sorted_times()[0] == 1.0);
  CHECK(p.client_of_rank(0) == 1);
  CHECK(p.client_of_rank(2) == 0);
  CHECK(p.rank_of_client(0) == 2);
}

TEST_CASE("round_time is the slowest sampled client") {
  const SystemProfile p = SystemProfile::from_times({4.0, 1.5, 2.0, 0.7});

  Multiset single;
  single.members = {{2, 1}};
  single.total = 1;
  CHECK(round_time(single, p) == 2.0);

  Multiset with_slowest;
  with_slowest.members = {{0, 1}, {3, 2}};
  with_slowest.total = 3;
  CHECK(round_time(with_slowest, p) == 4.0);

  Rng rng = make_rng(17);
  Vector q = Vector::Constant(4, 0.25);
  for (int rep = 0; rep < 50; ++rep) {
    const Multiset ms = sample_multiset(q, 3, rng);
    double naive = 0.0;
    const std::vector<double> raw = {4.0, 1.5, 2.0, 0.7};
    for (const auto& [client, mult] : ms.members)
      naive = std::max(naive, raw[static_cast<size_t>(client)]);
    CHECK(round_time(ms, p) == naive);
  }

  Multiset empty;
  CHECK_THROWS_AS(round_time(empty, p), ArgumentError);
}

TEST_CASE("expected_round_time closed form") {
  SUBCASE("homogeneous times collapse to t0") {
    const SystemProfile p = SystemProfile::from_times({2.5, 2.5, 2.5});
    Vector q(3);
    q << 0.1, 0.2, 0.7;
    for (int K : {1, 2, 5})
      CHECK(expected_round_time(q, p, K) == doctest::Approx(2.5).epsilon(1e-14));
  }
  SUBCASE("K = 1 reduces to the dot product") {
    const SystemProfile p = SystemProfile::from_times({1.0, 2.0, 3.0});
    Vector q(3);
    q << 0.2, 0.3, 0.5;
    CHECK(std::abs(expected_round_time(q, p, 1) - 2.3) < 1e-14);
  }
  SUBCASE("hand-enumerated pair value") {
    const SystemProfile p = SystemProfile::from_times({1.0, 2.0, 3.0});
    Vector q(3);
    q << 0.2, 0.3, 0.5;
    CHECK(std::abs(expected_round_time(q, p, 2) - 2.71) < 1e-13);
  }
  SUBCASE("client permutation does not change the value") {
    const SystemProfile p = SystemProfile::from_times({3.0, 1.0, 2.0});
    Vector q(3);
    q << 0.5, 0.2, 0.3;  // same probability attached to the same time as above
    CHECK(std::abs(expected_round_time(q, p, 2) - 2.71) < 1e-13);
  }
}

TEST_CASE("approximation is exact in the two degenerate cases") {
  Rng rng = make_rng(5);
  std::uniform_real_distribution<double> unit(0.05, 1.0);

  Vector q(100);
  for (int i = 0; i < 100; ++i) q[i] = unit(rng);
  q /= q.sum();

  std::vector<double> t(100);
  std::exponential_distribution<double> expd(1.0);
  for (auto& v : t) v = expd(rng) + 1e-3;
  const SystemProfile het = SystemProfile::from_times(t);

  CHECK(std::abs(expected_round_time(q, het, 1) - expected_round_time_approx(q, het)) < 1e-12);

  const SystemProfile hom = SystemProfile::from_times(std::vector<double>(100, 1.7));
  CHECK(std::abs(expected_round_time(q, hom, 10) - expected_round_time_approx(q, hom)) < 1e-12);

  // With K = 10 the straggler makes the exact value strictly larger.
  const Vector uniform_q = Vector::Constant(100, 0.01);
  const double approx = expected_round_time_approx(uniform_q, het);
  const double exact = expected_round_time(uniform_q, het, 10);
  CHECK(approx <= exact);
  MESSAGE("approx ", approx, " exact ", exact, " gap ", exact - approx);
}

TEST_CASE("straggler_pmf values and telescoping") {
  SUBCASE("two clients, two draws") {
    Vector q(2);
    q << 0.5, 0.5;
    const Vector pmf = straggler_pmf(q, 2);
    CHECK(pmf[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(pmf[1] == doctest::Approx(0.75).epsilon(1e-14));
  }
  SUBCASE("K = 1 returns q") {
    Vector q(4);
    q << 0.1, 0.2, 0.3, 0.4;
    const Vector pmf = straggler_pmf(q, 1);
    CHECK((pmf - q).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("random inputs stay a distribution") {
    Rng rng = make_rng(99);
    std::uniform_real_distribution<double> unit(0.01, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
      const int n = 1 + rep % 30;
      Vector q(n);
      for (int i = 0; i < n; ++i) q[i] = unit(rng);
      q /= q.sum();
      const Vector pmf = straggler_pmf(q, 1 + rep % 7);
      CHECK((pmf.array() >= 0.0).all());
      CHECK(std::abs(pmf.sum() - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("expected_round_time is monotone under mass transfer toward slower clients") {
  Rng rng = make_rng(123);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 3 + rep % 8;
    Vector q(n);
    for (int i = 0; i < n; ++i) q[i] = unit(rng);
    q /= q.sum();
    std::vector<double> t(static_cast<size_t>(n));
    for (auto& v : t) v = unit(rng) * 5.0;
    const SystemProfile p = SystemProfile::from_times(t);
    const int K = 1 + rep % 5;

    std::uniform_int_distribution<int> pick(0, n - 1);
    int a = pick(rng), b = pick(rng);
    if (p.time_of(a) > p.time_of(b)) std::swap(a, b);
    if (a == b) continue;
    const double base = expected_round_time(q, p, K);
    Vector shifted = q;
    const double delta = 0.5 * q[a];
    shifted[a] -= delta;
    shifted[b] += delta;
    CHECK(expected_round_time(shifted, p, K) >= base - 1e-12);
  }
}
