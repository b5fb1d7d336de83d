#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "zen/tensor.hpp"

namespace {

using zen::SparseTensor;

SparseTensor make(uint64_t m, std::vector<uint64_t> idx, std::vector<float> val) {
  return SparseTensor(m, std::move(idx), std::move(val));
}

SparseTensor random_tensor(uint64_t m, uint64_t nnz, std::mt19937_64& rng) {
  std::vector<uint64_t> pool(m);
  for (uint64_t i = 0; i < m; ++i) pool[i] = i;
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(nnz);
  std::uniform_int_distribution<int> value(1, 9);
  std::vector<std::pair<uint64_t, float>> pairs;
  for (uint64_t i : pool) pairs.emplace_back(i, float(value(rng)));
  return SparseTensor::from_pairs(m, std::move(pairs));
}

// Independent oracle: aggregate through a dense array.
SparseTensor dense_sum(const std::vector<SparseTensor>& ts) {
  const uint64_t m = ts.front().universe();
  std::vector<float> acc(m, 0.0f);
  std::vector<bool> present(m, false);
  for (const auto& t : ts) {
    for (size_t i = 0; i < t.nnz(); ++i) {
      acc[t.indices()[i]] += t.values()[i];
      present[t.indices()[i]] = true;
    }
  }
  std::vector<uint64_t> idx;
  std::vector<float> val;
  for (uint64_t i = 0; i < m; ++i) {
    if (present[i]) {
      idx.push_back(i);
      val.push_back(acc[i]);
    }
  }
  return SparseTensor(m, std::move(idx), std::move(val));
}

TEST(Density, EmptyTensorIsZero) {
  EXPECT_DOUBLE_EQ(zen::density(make(100, {}, {})), 0.0);
}

TEST(Density, TwoOfFifteen) {
  EXPECT_DOUBLE_EQ(zen::density(make(15, {5, 7}, {1, 1})), 2.0 / 15.0);
}

TEST(Density, LstmEmbeddingScale) {
  // 4,587,800 non-zeros out of a 406M-element embedding is about 1.13% dense
  const uint64_t m = 406'000'000;
  const uint64_t nnz = 4'587'800;
  std::vector<uint64_t> idx(nnz);
  for (uint64_t i = 0; i < nnz; ++i) idx[i] = i * 88;  // spread, still < m
  SparseTensor t(m, std::move(idx), std::vector<float>(nnz, 1.0f));
  EXPECT_NEAR(zen::density(t), 0.0113, 5e-4);
}

TEST(OverlapRatio, IdenticalSetsGiveOne) {
  auto a = make(10, {1, 2, 3}, {1, 2, 3});
  EXPECT_DOUBLE_EQ(zen::overlap_ratio(a, a), 1.0);
}

TEST(OverlapRatio, DisjointSetsGiveZero) {
  auto a = make(10, {1, 2}, {1, 1});
  auto b = make(10, {3, 4}, {1, 1});
  EXPECT_DOUBLE_EQ(zen::overlap_ratio(a, b), 0.0);
}

TEST(OverlapRatio, HandComputedIntersection) {
  auto a = make(10, {1, 2, 3, 4}, {1, 1, 1, 1});
  auto b = make(10, {3, 4, 5}, {1, 1, 1});
  EXPECT_DOUBLE_EQ(zen::overlap_ratio(a, b), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(zen::overlap_ratio(b, a), 2.0 / 3.0);
}

TEST(OverlapRatio, ContainmentGivesOne) {
  auto a = make(10, {1, 2, 3, 4, 5}, {1, 1, 1, 1, 1});
  auto b = make(10, {2, 4}, {1, 1});
  EXPECT_DOUBLE_EQ(zen::overlap_ratio(a, b), 1.0);
}

TEST(OverlapRatio, EmptyTensorThrows) {
  auto a = make(10, {1}, {1});
  auto b = make(10, {}, {});
  EXPECT_THROW(zen::overlap_ratio(a, b), zen::EmptyTensor);
}

TEST(Aggregate, SingleTensorIsIdentity) {
  auto a = make(10, {1, 5}, {2, 3});
  EXPECT_EQ(zen::aggregate({a}), a);
}

TEST(Aggregate, SharedIndexSumsValues) {
  auto a = make(10, {3}, {1.5f});
  auto b = make(10, {3}, {3.2f});
  auto sum = zen::aggregate({a, b});
  ASSERT_EQ(sum.nnz(), 1u);
  EXPECT_EQ(sum.indices()[0], 3u);
  EXPECT_FLOAT_EQ(sum.values()[0], 4.7f);
}

TEST(Aggregate, MatchesDenseSumOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SparseTensor> ts;
    for (int i = 0; i < 4; ++i) ts.push_back(random_tensor(64, 16, rng));
    EXPECT_EQ(zen::aggregate(ts), dense_sum(ts));
  }
}

TEST(Aggregate, UniverseMismatchThrows) {
  auto a = make(10, {1}, {1});
  auto b = make(11, {1}, {1});
  EXPECT_THROW(zen::aggregate({a, b}), zen::UniverseMismatch);
}

TEST(Aggregate, IndexSetIsUnionOfInputs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SparseTensor> ts;
    for (int i = 0; i < 3; ++i) ts.push_back(random_tensor(50, 10, rng));
    auto sum = zen::aggregate(ts);
    std::vector<bool> expected(50, false);
    for (const auto& t : ts)
      for (uint64_t i : t.indices()) expected[i] = true;
    std::vector<bool> got(50, false);
    for (uint64_t i : sum.indices()) got[i] = true;
    EXPECT_EQ(expected, got);
  }
}

TEST(Aggregate, PermutationInvariantWithIntegerValues) {
  std::mt19937_64 rng(11);
  std::vector<SparseTensor> ts;
  for (int i = 0; i < 5; ++i) ts.push_back(random_tensor(40, 12, rng));
  auto reference = zen::aggregate(ts);
  for (int shuffle = 0; shuffle < 5; ++shuffle) {
    std::shuffle(ts.begin(), ts.end(), rng);
    EXPECT_EQ(zen::aggregate(ts), reference);
  }
}

TEST(Aggregate, DensityBoundedBySumOfDensities) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SparseTensor> ts;
    for (int i = 0; i < 4; ++i) ts.push_back(random_tensor(30, 1 + trial % 10, rng));
    double sum_d = 0;
    for (const auto& t : ts) sum_d += zen::density(t);
    EXPECT_LE(zen::density(zen::aggregate(ts)), std::min(1.0, sum_d) + 1e-12);
  }
}

TEST(DensificationRatio, IdenticalTensorsGiveOne) {
  auto a = make(20, {2, 4, 6}, {1, 1, 1});
  EXPECT_DOUBLE_EQ(zen::densification_ratio({a, a, a}), 1.0);
}

TEST(DensificationRatio, DisjointTensorsGiveN) {
  auto a = make(20, {0, 1}, {1, 1});
  auto b = make(20, {2, 3}, {1, 1});
  auto c = make(20, {4, 5}, {1, 1});
  EXPECT_DOUBLE_EQ(zen::densification_ratio({a, b, c}), 3.0);
}

TEST(DensificationRatio, MatchesBruteForceQuotient) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<SparseTensor> ts;
    for (int i = 0; i < 4; ++i) ts.push_back(random_tensor(100, 20, rng));
    double mean_d = 0;
    for (const auto& t : ts) mean_d += zen::density(t) / 4.0;
    const double expected = zen::density(dense_sum(ts)) / mean_d;
    EXPECT_NEAR(zen::densification_ratio(ts), expected, 1e-12);
  }
}

TEST(SkewnessRatio, SinglePartitionIsOne) {
  auto t = make(40, {1, 9, 17, 33}, {1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(zen::skewness_ratio(t, 1), 1.0);
}

TEST(SkewnessRatio, AllNonzerosInOneOfThreePartitions) {
  auto t = make(15, {5, 7}, {1, 1});
  EXPECT_DOUBLE_EQ(zen::skewness_ratio(t, 3), 3.0);
}

TEST(SkewnessRatio, ShortLastPartitionUsesItsOwnLength) {
  // M=10, n=3: ranges [0,4), [4,8), [8,10)
  auto t = make(10, {8, 9}, {1, 1});
  EXPECT_DOUBLE_EQ(zen::skewness_ratio(t, 3), (2.0 / 2.0) / (2.0 / 10.0));
}

TEST(SkewnessRatio, EmptyTensorThrows) {
  EXPECT_THROW(zen::skewness_ratio(make(10, {}, {}), 2), zen::EmptyTensor);
}

TEST(SkewnessRatio, MorePartitionsThanElements) {
  // M=3, n=8: only three unit-length partitions exist
  auto t = make(3, {1}, {1});
  EXPECT_DOUBLE_EQ(zen::skewness_ratio(t, 8), 3.0);
}

TEST(OverlapRatio, UniverseMismatchThrows) {
  EXPECT_THROW(zen::overlap_ratio(make(10, {1}, {1}), make(12, {1}, {1})),
               zen::UniverseMismatch);
}

TEST(SparseTensor, EqualityIgnoresConstructionOrder) {
  auto a = SparseTensor::from_pairs(10, {{5, 2.0f}, {1, 1.0f}});
  auto b = SparseTensor::from_pairs(10, {{1, 1.0f}, {5, 2.0f}});
  EXPECT_EQ(a, b);
}

TEST(SparseTensor, RejectsDuplicatesAndOutOfRange) {
  EXPECT_THROW(make(10, {3, 3}, {1, 1}), zen::Error);
  EXPECT_THROW(make(10, {10}, {1}), zen::Error);
}

TEST(SparsityProfile, ValidatesInvariants) {
  zen::SparsityProfile p;
  p.d = 0.01;
  p.gamma = {{1, 1.0}, {2, 1.5}, {4, 2.5}};
  p.skew = {{8, 4.0}};
  EXPECT_NO_THROW(p.validate());
  p.gamma[1] = 1.2;
  EXPECT_THROW(p.validate(), zen::Error);
  p.gamma[1] = 1.0;
  p.gamma[2] = 3.0;  // exceeds k
  EXPECT_THROW(p.validate(), zen::Error);
  p.gamma[2] = 1.5;
  p.d = 0.9;  // d * gamma[2] > 1
  EXPECT_THROW(p.validate(), zen::Error);
}

TEST(Serialization, RoundTripsThroughStream) {
  std::mt19937_64 rng(31);
  auto t = random_tensor(200, 37, rng);
  std::stringstream ss;
  zen::write_sparse(ss, t);
  EXPECT_EQ(zen::read_sparse(ss), t);
}

TEST(Serialization, RejectsBadMagic) {
  std::stringstream ss;
  ss << "JUNKJUNKJUNK";
  EXPECT_THROW(zen::read_sparse(ss), zen::MalformedPayload);
}

}  // namespace
