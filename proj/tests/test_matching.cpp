#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "rwt/descriptor.hpp"
#include "rwt/matching.hpp"
#include "rwt/rng.hpp"
#include "support/oracles.hpp"

namespace rwt {
namespace {

using testing::basis;
using testing::random_descriptors;
using testing::random_unit;

TEST(ScoreMatrix, IdenticalAndOrthogonal) {
  const std::vector<HierarchicalDescriptor> a{basis(0)};
  EXPECT_EQ(score_matrix(a, a)(0, 0), 1.0);
  const std::vector<HierarchicalDescriptor> b{basis(1)};
  EXPECT_EQ(score_matrix(a, b)(0, 0), 0.0);
}

TEST(ScoreMatrix, LinksToEuclideanDistance) {
  Rng rng(1);
  const auto A = random_descriptors(rng, 30, true);
  const auto B = random_descriptors(rng, 40, true);
  const auto S = score_matrix(A, B);
  ASSERT_EQ(S.rows(), 30);
  ASSERT_EQ(S.cols(), 40);
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 40; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < kDescriptorDim; ++k) {
        const double d = static_cast<double>(A[i].values[k]) - B[j].values[k];
        sq += d * d;
      }
      ASSERT_NEAR(2.0 - 2.0 * S(i, j), sq, 1e-5);
      ASSERT_LE(std::abs(S(i, j)), 1.0 + 1e-6);
    }
  }
}

TEST(Knn, PerfectMatch) {
  Rng rng(2);
  const auto d = random_unit(rng);
  auto far = d;
  for (auto& v : far.values) v = -v;
  const std::vector<HierarchicalDescriptor> A{d};
  const std::vector<HierarchicalDescriptor> B{d, far};
  const auto m = knn_match(A, B);
  ASSERT_EQ(m.size(), 1U);
  EXPECT_EQ(m[0].index_a, 0U);
  EXPECT_EQ(m[0].index_b, 0U);
  EXPECT_EQ(m[0].distance, 0.0);
  EXPECT_NEAR(m[0].ratio, 0.0, 1e-12);
}

TEST(Knn, EquidistantDuplicatesRejected) {
  Rng rng(3);
  int rejected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto d = random_unit(rng);
    const std::size_t i = rng.index(kDescriptorDim);
    std::size_t j = rng.index(kDescriptorDim - 1);
    if (j >= i) ++j;
    const float eps = static_cast<float>(rng.uniform(0.01, 0.5));
    auto b1 = d;
    auto b2 = d;
    b1.values[i] += eps;
    b2.values[j] += eps;
    const double d1 = distance(d, b1);
    const double d2 = distance(d, b2);
    if (d1 != d2) continue;  // float rounding made them unequal; not an equidistant instance
    const std::vector<HierarchicalDescriptor> A{d};
    const std::vector<HierarchicalDescriptor> B{b1, b2};
    ASSERT_TRUE(knn_match(A, B).empty());
    ++rejected;
  }
  EXPECT_GT(rejected, 100);
}

TEST(Knn, RecoversShuffledPermutation) {
  Rng rng(4);
  const auto A = random_descriptors(rng, 100, true);
  std::vector<std::size_t> perm(100);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  std::vector<HierarchicalDescriptor> B(100);
  for (std::size_t i = 0; i < 100; ++i) B[perm[i]] = A[i];
  const auto m = knn_match(A, B);
  ASSERT_EQ(m.size(), 100U);
  for (const auto& x : m) EXPECT_EQ(x.index_b, perm[x.index_a]);
}

TEST(Knn, TooFewCandidates) {
  Rng rng(5);
  const auto A = random_descriptors(rng, 3, true);
  const auto B = random_descriptors(rng, 1, true);
  try {
    knn_match(A, B);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewCandidates);
  }
  KnnParams no_ratio;
  no_ratio.ratio_test = false;
  no_ratio.k = 1;
  EXPECT_EQ(knn_match(A, B, no_ratio).size(), 3U);
}

TEST(Knn, TieGoesToLowerIndex) {
  Rng rng(6);
  const auto d = random_unit(rng);
  const std::vector<HierarchicalDescriptor> A{d};
  const std::vector<HierarchicalDescriptor> B{random_unit(rng), d, d};
  KnnParams p;
  p.ratio_test = false;
  const auto m = knn_match(A, B, p);
  ASSERT_EQ(m.size(), 1U);
  EXPECT_EQ(m[0].index_b, 1U);
}

TEST(Knn, DegenerateNeverMatches) {
  HierarchicalDescriptor zero;
  zero.degenerate = true;
  Rng rng(7);
  const auto B = random_descriptors(rng, 5, true);
  const std::vector<HierarchicalDescriptor> A{zero};
  KnnParams p;
  p.ratio_test = false;
  EXPECT_TRUE(knn_match(A, B, p).empty());
  std::vector<HierarchicalDescriptor> B2{zero, B[0], B[1]};
  const std::vector<HierarchicalDescriptor> A2{B[0]};
  const auto m = knn_match(A2, B2);
  ASSERT_EQ(m.size(), 1U);
  EXPECT_EQ(m[0].index_b, 1U);
}

TEST(Knn, EqualsExhaustiveOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t na = 1 + rng.index(200);
    const std::size_t nb = 2 + rng.index(199);
    // Clustered corpora so that both accepted and rejected queries occur.
    auto B = random_descriptors(rng, nb, true);
    std::vector<HierarchicalDescriptor> A;
    for (std::size_t i = 0; i < na; ++i) {
      auto d = B[rng.index(nb)];
      const double noise = rng.uniform(0.0, 0.08);
      for (auto& v : d.values) v = static_cast<float>(v + noise * rng.normal());
      A.push_back(d);
    }
    KnnParams p;
    p.ratio = rng.uniform(0.5, 0.95);
    const auto got = knn_match(A, B, p);
    const auto expected = testing::exhaustive_knn(A, B, p.ratio, true);
    ASSERT_EQ(got.size(), expected.size()) << "trial " << trial;
    for (std::size_t k = 0; k < got.size(); ++k) {
      ASSERT_EQ(got[k].index_a, expected[k].first);
      ASSERT_EQ(got[k].index_b, expected[k].second);
      ASSERT_LT(got[k].ratio, p.ratio);
    }
    // Plain nearest neighbours with the ratio test off.
    KnnParams nn;
    nn.ratio_test = false;
    nn.k = 1;
    const auto all = knn_match(A, B, nn);
    const auto expected_nn = testing::exhaustive_knn(A, B, 1.0, false);
    ASSERT_EQ(all.size(), expected_nn.size());
    for (std::size_t k = 0; k < all.size(); ++k) ASSERT_EQ(all[k].index_b, expected_nn[k].second);
  }
}

TEST(Knn, OutputUniquePerQueryAndRatioHolds) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto A = random_descriptors(rng, 50, true);
    const auto B = random_descriptors(rng, 60, true);
    const auto m = knn_match(A, B, {2, 0.99, true});
    for (std::size_t k = 1; k < m.size(); ++k) ASSERT_LT(m[k - 1].index_a, m[k].index_a);
    for (const auto& x : m) {
      ASSERT_GE(x.distance, 0.0);
      ASSERT_GE(x.ratio, 0.0);
      ASSERT_LT(x.ratio, 0.99);
    }
  }
}

std::vector<std::pair<std::size_t, std::size_t>> pairs_of(const std::vector<Match>& m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& x : m) out.emplace_back(x.index_a, x.index_b);
  return out;
}

TEST(Knn, ScaleInvarianceOfSelection) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto B = random_descriptors(rng, 40, false);
    std::vector<HierarchicalDescriptor> A;
    for (int i = 0; i < 30; ++i) {
      auto d = B[rng.index(B.size())];
      for (auto& v : d.values) v = static_cast<float>(v + 0.3 * rng.normal());
      A.push_back(d);
    }
    const double c = std::exp(rng.uniform(-3.0, 3.0));
    const auto base = pairs_of(knn_match(A, B));

    auto As = A;
    auto Bs = B;
    for (auto& d : As) {
      for (auto& v : d.values) v = static_cast<float>(c * v);
    }
    for (auto& d : Bs) {
      for (auto& v : d.values) v = static_cast<float>(c * v);
    }
    ASSERT_EQ(pairs_of(knn_match(As, Bs)), base) << "trial " << trial;

    // After the pipeline's normalization, scaling only B is invisible as well.
    auto An = A;
    auto Bn = B;
    auto Bsn = Bs;
    for (auto* set : {&An, &Bn, &Bsn}) {
      for (auto& d : *set) apply_slices(d, {});
    }
    ASSERT_EQ(pairs_of(knn_match(An, Bsn)), pairs_of(knn_match(An, Bn))) << "trial " << trial;
  }
}

TEST(Mutual, Examples) {
  const std::vector<Match> ab{{0, 1, 0.1, 0.2}};
  EXPECT_EQ(mutual_filter(ab, std::vector<Match>{{1, 0, 0.1, 0.2}}).size(), 1U);
  EXPECT_TRUE(mutual_filter(ab, std::vector<Match>{{1, 2, 0.1, 0.2}}).empty());
  EXPECT_TRUE(mutual_filter(std::vector<Match>{}, std::vector<Match>{}).empty());
}

TEST(Mutual, SymmetricConsistency) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Match> ab;
    std::vector<Match> ba;
    for (int k = 0; k < 30; ++k) ab.push_back({rng.index(10), rng.index(10), 0.0, 0.0});
    for (int k = 0; k < 30; ++k) ba.push_back({rng.index(10), rng.index(10), 0.0, 0.0});
    auto forward = pairs_of(mutual_filter(ab, ba));
    auto backward = pairs_of(mutual_filter(ba, ab));
    for (auto& [i, j] : backward) std::swap(i, j);
    std::sort(forward.begin(), forward.end());
    forward.erase(std::unique(forward.begin(), forward.end()), forward.end());
    std::sort(backward.begin(), backward.end());
    backward.erase(std::unique(backward.begin(), backward.end()), backward.end());
    ASSERT_EQ(forward, backward);
  }
}

TEST(Mutual, CrossCheckedMatchingIsSubset) {
  Rng rng(12);
  const auto A = random_descriptors(rng, 40, true);
  const auto B = random_descriptors(rng, 40, true);
  const auto plain = pairs_of(match_descriptors(A, B, {}, false));
  const auto mutual = pairs_of(match_descriptors(A, B, {}, true));
  for (const auto& p : mutual) EXPECT_NE(std::find(plain.begin(), plain.end(), p), plain.end());
}

}  // namespace
}  // namespace rwt
