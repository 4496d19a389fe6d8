#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "fedhet/random.hpp"

using namespace fedhet;

TEST_CASE("same seed gives the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42), d(42);
  for (int i = 0; i < 50; ++i) CHECK(c.normal() == d.normal());
}

TEST_CASE("uniform01 stays in [0, 1)") {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("index is bounded and roughly uniform") {
  Rng r(3);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = r.index(7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  for (int c : counts) CHECK(std::abs(c - n / 7) < n / 7 / 10);
}

TEST_CASE("normal and gamma moments") {
  Rng r(5);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);

  for (double shape : {0.1, 0.5, 1.0, 4.0}) {
    double g = 0;
    const int m = 100000;
    for (int i = 0; i < m; ++i) {
      const double x = r.gamma(shape);
      REQUIRE(x >= 0.0);
      g += x;
    }
    CHECK(std::abs(g / m - shape) < 0.05 * std::max(1.0, shape));
  }
}

TEST_CASE("shuffle yields a permutation") {
  Rng r(9);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
  CHECK(!std::is_sorted(v.begin(), v.end()));
  CHECK(shuffled_indices(10, 4) == shuffled_indices(10, 4));
}

TEST_CASE("derived seeds differ across tags") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(derive_seed(7, {a, b}));
  CHECK(seen.size() == 400);
  CHECK(derive_seed(7, {1, 2}) != derive_seed(7, {2, 1}));
  CHECK(derive_seed(7, {1}) != derive_seed(8, {1}));
}
