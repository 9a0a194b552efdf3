#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

namespace rwt {

/// Greedy timestamp association in the style of the TUM tools: all pairs with |dt| <= max_dt are
/// ranked by |dt| (ties toward the earlier timestamps) and accepted while both sides are unused.
/// Both inputs must be sorted ascending. Returns index pairs sorted by the first index.
inline std::vector<std::pair<std::size_t, std::size_t>> associate_timestamps(std::span<const double> a,
                                                                             std::span<const double> b,
                                                                             double max_dt) {
  struct Candidate {
    double dt;
    double lo;
    double hi;
    std::size_t ia;
    std::size_t ib;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto it = std::lower_bound(b.begin(), b.end(), a[i] - max_dt);
    for (; it != b.end() && *it <= a[i] + max_dt; ++it) {
      const double dt = std::abs(a[i] - *it);
      if (dt > max_dt) continue;
      candidates.push_back({dt, std::min(a[i], *it), std::max(a[i], *it), i,
                            static_cast<std::size_t>(it - b.begin())});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    return std::tie(x.dt, x.lo, x.hi) < std::tie(y.dt, y.lo, y.hi);
  });
  std::vector<bool> used_a(a.size(), false);
  std::vector<bool> used_b(b.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& c : candidates) {
    if (used_a[c.ia] || used_b[c.ib]) continue;
    used_a[c.ia] = true;
    used_b[c.ib] = true;
    pairs.emplace_back(c.ia, c.ib);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

}  // namespace rwt
