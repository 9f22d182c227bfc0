#pragma once

// Brute-force reference implementations, written independently of the
// library versions they check.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace mtmd::test {

/// Pearson via raw moment sums in extended precision.
inline std::optional<double> pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (n < 2 || sxx == 0 || syy == 0) return std::nullopt;
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

/// Rank of each entry by counting: 1 + (#smaller) + (#equal − 1) / 2.
inline std::vector<double> rank_oracle(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = 1.0 + static_cast<double>(less) + (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return r;
}

inline std::optional<double> spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson_oracle(rank_oracle(x), rank_oracle(y));
}

/// Stock i is in the top n when fewer than n stocks outrank it (higher
/// prediction, or equal with a lower index).
inline double precision_oracle(const std::vector<double>& pred, const std::vector<bool>& positive, std::size_t n) {
  const std::size_t k = n < pred.size() ? n : pred.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::size_t above = 0;
    for (std::size_t j = 0; j < pred.size(); ++j) above += pred[j] > pred[i] || (pred[j] == pred[i] && j < i);
    if (above < k && positive[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace mtmd::test
