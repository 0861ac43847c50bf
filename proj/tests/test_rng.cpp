#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "baae/rng.hpp"

using baae::Rng;

namespace {

// Textbook stateful SplitMix64.
struct ReferenceSplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

}  // namespace

TEST(Rng, MatchesStatefulSplitMix64) {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xDEADBEEFULL, ~0ULL}) {
    Rng rng(seed);
    ReferenceSplitMix ref{seed};
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(rng.next_u64(), ref.next()) << "seed " << seed << " draw " << i;
  }
}

TEST(Rng, KnownFirstOutputForSeedZero) { EXPECT_EQ(Rng(0).next_u64(), 0xE220A8397B1DCDAFULL); }

TEST(Rng, SplitIsIndependentOfParentPosition) {
  Rng a(99);
  const Rng b(99);
  for (int i = 0; i < 17; ++i) a.next_u64();
  Rng sa = a.split(5), sb = b.split(5);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sa.next_u64(), sb.next_u64());
}

TEST(Rng, DistinctStreamsDiffer) {
  const Rng root(3);
  Rng s1 = root.split(1), s2 = root.split(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += s1.next_u64() == s2.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(Rng, UniformRangeAndMoments) {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMomentsAndTwoDrawsEach) {
  Rng rng(12);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    ASSERT_TRUE(std::isfinite(z));
    sum += z;
    sq += z * z;
  }
  EXPECT_EQ(rng.counter(), 2u * n);
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(13);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = rng.below(7);
    ASSERT_LT(k, 7u);
    ++hits[k];
  }
  for (int h : hits) EXPECT_NEAR(h, 10000, 500);
}

TEST(Rng, ShuffleIsDeterministicPermutation) {
  std::vector<int> a(100), b(100);
  std::iota(a.begin(), a.end(), 0);
  b = a;
  Rng r1(5), r2(5);
  baae::shuffle(a.begin(), a.end(), r1);
  baae::shuffle(b.begin(), b.end(), r2);
  EXPECT_EQ(a, b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  std::vector<int> ident(100);
  std::iota(ident.begin(), ident.end(), 0);
  EXPECT_NE(a, ident);
}
