#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rwt/error.hpp"
#include "rwt/types.hpp"

namespace rwt {

/// Inner products between two descriptor sets, accumulated in double precision.
using ScoreMatrix = Eigen::MatrixXd;

inline double dot(const HierarchicalDescriptor& a, const HierarchicalDescriptor& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < kDescriptorDim; ++k) s += static_cast<double>(a.values[k]) * b.values[k];
  return s;
}

/// Squared Euclidean distance; +inf if either side is degenerate.
inline double squared_distance(const HierarchicalDescriptor& a, const HierarchicalDescriptor& b) {
  if (a.degenerate || b.degenerate) return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (std::size_t k = 0; k < kDescriptorDim; ++k) {
    const double d = static_cast<double>(a.values[k]) - b.values[k];
    s += d * d;
  }
  return s;
}

inline double distance(const HierarchicalDescriptor& a, const HierarchicalDescriptor& b) {
  return std::sqrt(squared_distance(a, b));
}

inline ScoreMatrix score_matrix(std::span<const HierarchicalDescriptor> A,
                                std::span<const HierarchicalDescriptor> B) {
  ScoreMatrix S(static_cast<Eigen::Index>(A.size()), static_cast<Eigen::Index>(B.size()));
  for (std::size_t i = 0; i < A.size(); ++i) {
    for (std::size_t j = 0; j < B.size(); ++j) {
      S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dot(A[i], B[j]);
    }
  }
  return S;
}

struct Match {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  double distance = 0.0;
  double ratio = 0.0;  // best / second-best distance, 0 when there is no finite second-best

  friend bool operator==(const Match&, const Match&) = default;
};

struct KnnParams {
  std::size_t k = 2;
  double ratio = 0.8;
  bool ratio_test = true;
};

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = std::numeric_limits<double>::infinity();
};

/// Exhaustive k nearest neighbors of one query, ascending by distance, lower index first on ties.
inline std::vector<Neighbor> nearest_neighbors(const HierarchicalDescriptor& query,
                                               std::span<const HierarchicalDescriptor> B, std::size_t k) {
  std::vector<Neighbor> best;
  best.reserve(k + 1);
  for (std::size_t j = 0; j < B.size(); ++j) {
    const double d = squared_distance(query, B[j]);
    if (best.size() == k && !(d < best.back().squared_distance)) continue;
    auto pos = std::upper_bound(best.begin(), best.end(), d,
                                [](double v, const Neighbor& n) { return v < n.squared_distance; });
    best.insert(pos, Neighbor{j, d});
    if (best.size() > k) best.pop_back();
  }
  return best;
}

/// Brute-force KNN search with Lowe's ratio test. Output is sorted by index_a.
inline std::vector<Match> knn_match(std::span<const HierarchicalDescriptor> A,
                                    std::span<const HierarchicalDescriptor> B, const KnnParams& params = {}) {
  const std::size_t k = params.ratio_test ? std::max<std::size_t>(params.k, 2) : std::max<std::size_t>(params.k, 1);
  if (B.size() < k) {
    throw Error(Errc::TooFewCandidates,
                "need at least " + std::to_string(k) + " candidates, got " + std::to_string(B.size()));
  }
  std::vector<Match> matches;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const auto nn = nearest_neighbors(A[i], B, k);
    if (nn.empty() || !std::isfinite(nn[0].squared_distance)) continue;
    const double best = std::sqrt(nn[0].squared_distance);
    const double second = nn.size() > 1 ? std::sqrt(nn[1].squared_distance)
                                        : std::numeric_limits<double>::infinity();
    if (params.ratio_test && !(best < params.ratio * second)) continue;
    const double ratio = std::isfinite(second) && second > 0.0 ? best / second : 0.0;
    matches.push_back({i, nn[0].index, best, ratio});
  }
  return matches;
}

/// Keeps (i, j) from ab only if (j, i) is present in ba.
inline std::vector<Match> mutual_filter(std::span<const Match> ab, std::span<const Match> ba) {
  std::vector<std::pair<std::size_t, std::size_t>> reverse;
  reverse.reserve(ba.size());
  for (const auto& m : ba) reverse.emplace_back(m.index_b, m.index_a);
  std::sort(reverse.begin(), reverse.end());
  std::vector<Match> out;
  for (const auto& m : ab) {
    if (std::binary_search(reverse.begin(), reverse.end(), std::make_pair(m.index_a, m.index_b))) {
      out.push_back(m);
    }
  }
  return out;
}

/// knn_match, optionally cross-checked against the reverse direction.
inline std::vector<Match> match_descriptors(std::span<const HierarchicalDescriptor> A,
                                            std::span<const HierarchicalDescriptor> B,
                                            const KnnParams& params, bool mutual_check) {
  auto ab = knn_match(A, B, params);
  if (!mutual_check) return ab;
  if (A.size() < (params.ratio_test ? 2U : 1U)) return {};
  const auto ba = knn_match(B, A, params);
  return mutual_filter(ab, ba);
}

}  // namespace rwt
