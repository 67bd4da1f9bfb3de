#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "slqr/parallel.hpp"
#include "slqr/rng.hpp"

namespace {

using namespace slqr;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(42), d(43);
  EXPECT_NE(c.next_u64(), d.next_u64());
}

TEST(Rng, Mt19937ReferenceValue) {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng r(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = r.next_u64();
  EXPECT_EQ(v, 9981545732273789042ull);
}

TEST(Rng, SplitIgnoresParentConsumption) {
  Rng a(7), b(7);
  for (int i = 0; i < 17; ++i) (void)b.uniform();
  Rng sa = a.split(3), sb = b.split(3);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(sa.next_u64(), sb.next_u64());
  EXPECT_NE(a.split(3).next_u64(), a.split(4).next_u64());
  EXPECT_NE(a.split(0).seed(), a.seed());
}

TEST(Rng, UniformMoments) {
  Rng r(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0, lo = 1.0, hi = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    s += u;
    s2 += u * u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(s / n, 0.5, 5e-3);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 2e-3);
  Rng q(12);
  for (int i = 0; i < 1000; ++i) {
    const double u = q.uniform(-0.4, 0.4);
    ASSERT_GE(u, -0.4);
    ASSERT_LT(u, 0.4);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(13);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    ASSERT_TRUE(std::isfinite(z));
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 1e-2);
  EXPECT_NEAR(s2 / n, 1.0, 1.5e-2);
}

TEST(Rng, MatrixDrawOrderIsRowMajor) {
  Rng a(21), b(21);
  const Mat m = a.normal_matrix(3, 4, 2.0);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 4; ++j) EXPECT_EQ(m(i, j), 2.0 * b.normal());
  }
  Rng c(22), d(22);
  const Mat u = c.uniform_matrix(2, 3, 1.0, 3.0);
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 3; ++j) EXPECT_EQ(u(i, j), d.uniform(1.0, 3.0));
  }
}

TEST(Splitmix, DistinctOutputs) {
  EXPECT_NE(splitmix64(0), splitmix64(1));
  EXPECT_EQ(splitmix64(123), splitmix64(123));
}

double wiggle(int i) { return std::sin(0.37 * i) * std::exp(-1e-3 * i); }

TEST(Parallel, IndexedMaxSerialEqualsParallel) {
  for (int count : {0, 1, 7, 1000}) {
    const IndexedMax s = indexed_max_serial(count, wiggle);
    const IndexedMax p = indexed_max_parallel(count, wiggle);
    EXPECT_EQ(s.index, p.index);
    if (count > 0) EXPECT_EQ(s.value, p.value);
  }
  EXPECT_EQ(indexed_max_serial(0, wiggle).index, -1);
}

TEST(Parallel, TiesGoToLowestIndexAndNanLoses) {
  const auto fn = [](int i) { return i == 2 ? std::numeric_limits<double>::quiet_NaN() : (i % 3 == 1 ? 5.0 : 0.0); };
  for (Execution ex : {Execution::serial, Execution::parallel}) {
    const IndexedMax r = indexed_max(ex, 10, fn);
    EXPECT_EQ(r.index, 1);
    EXPECT_EQ(r.value, 5.0);
  }
  const auto nan_first = [](int i) { return i == 0 ? std::numeric_limits<double>::quiet_NaN() : -1.0 * i; };
  EXPECT_EQ(indexed_max_serial(4, nan_first).index, 1);
  EXPECT_EQ(indexed_max_parallel(4, nan_first).index, 1);
}

TEST(Parallel, MapIndicesMatchesSerial) {
  const auto fn = std::function<double(int)>([](int i) {
    Rng r = Rng(99).split(static_cast<std::uint64_t>(i));
    return r.normal();
  });
  const auto s = map_indices<double>(Execution::serial, 500, fn);
  const auto p = map_indices<double>(Execution::parallel, 500, fn);
  EXPECT_EQ(s, p);
  std::vector<int> hits(64, 0);
  for_each_index_parallel(64, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
  EXPECT_EQ(std::accumulate(hits.begin(), hits.end(), 0), 64);
  EXPECT_GE(available_threads(), 1);
}

}  // namespace
