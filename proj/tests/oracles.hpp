#pragma once

// Literal brute-force references for peak picking and onset matching.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace testing {

// Conditions (a)-(c) evaluated literally on each frame.
inline std::vector<std::size_t> oracle_peaks(const std::vector<double>& x, long w1, long w2, long w3, long w4,
                                             long w5, double delta) {
  const long n = static_cast<long>(x.size());
  auto lo = [](long v) { return std::max(0L, v); };
  auto hi = [n](long v) { return std::min(n - 1, v); };
  std::vector<std::size_t> out;
  long last = -1;
  for (long t = 0; t < n; ++t) {
    const bool first_of_plateau = t == 0 || x[t - 1] != x[t];
    const double m = *std::max_element(x.begin() + lo(t - w1), x.begin() + hi(t + w2) + 1);
    const bool a = x[t] == m && first_of_plateau;
    const long b0 = lo(t - w3), b1 = hi(t + w4);
    const double mean = std::accumulate(x.begin() + b0, x.begin() + b1 + 1, 0.0) / static_cast<double>(b1 - b0 + 1);
    const bool b = x[t] >= mean + delta;
    const bool c = last < 0 || t - last > w5;
    if (a && b && c) {
      out.push_back(static_cast<std::size_t>(t));
      last = t;
    }
  }
  return out;
}

// Maximum bipartite matching by exhaustive search over reference subsets.
inline std::size_t oracle_tp(const std::vector<double>& pred, const std::vector<double>& ref, double tol) {
  std::vector<int> memo(pred.size() << ref.size(), -1);
  std::function<int(std::size_t, unsigned)> best = [&](std::size_t i, unsigned used) -> int {
    if (i == pred.size()) return 0;
    int& m = memo[(i << ref.size()) | used];
    if (m >= 0) return m;
    m = best(i + 1, used);
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (!(used & (1u << j)) && std::abs(pred[i] - ref[j]) <= tol) m = std::max(m, 1 + best(i + 1, used | (1u << j)));
    return m;
  };
  return static_cast<std::size_t>(best(0, 0));
}

}  // namespace onsetsurv::testing
