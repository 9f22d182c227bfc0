#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mtmd/errors.hpp"
#include "mtmd/numerics/tensor.hpp"

namespace mtmd {

inline constexpr std::array<std::size_t, 4> kPrecisionCutoffs{3, 5, 10, 30};

struct DailyScore {
  std::string date;
  std::optional<double> ic;       // empty when either side has no variance
  std::optional<double> rank_ic;
  std::array<double, kPrecisionCutoffs.size()> precision{};  // percentages
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

struct MetricReport {
  MetricSummary ic, rank_ic;
  std::array<MetricSummary, kPrecisionCutoffs.size()> precision{};
  std::vector<DailyScore> daily;
};

/// Pearson correlation, or nothing when either vector has zero variance or
/// fewer than two entries.
inline std::optional<double> ic(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw DimensionError("ic: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) +
                         " labels");
  const std::size_t n = pred.size();
  if (n < 2) return std::nullopt;
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(n);
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pred[i] - mp, dy = truth[i] - mt;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman correlation: Pearson on average ranks.
inline std::optional<double> rank_ic(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionError("rank_ic: length mismatch");
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  return ic(rp, rt);
}

/// Percentage of positive outcomes among the n highest predictions (ties
/// to the lower index); n is clamped to the number of stocks.
inline double precision_at_n(std::span<const double> pred, const std::vector<bool>& positive, std::size_t n) {
  if (n < 1) throw ContractError("precision_at_n: n must be >= 1");
  if (pred.size() != positive.size()) throw DimensionError("precision_at_n: length mismatch");
  if (pred.empty()) throw ContractError("precision_at_n: empty cross-section");
  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pred[a] > pred[b]; });
  const std::size_t k = std::min(n, pred.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += positive[order[i]] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(k);
}

/// All daily metrics. `raw_truth` carries unnormalized change rates, used
/// for the correlations (ranking is unaffected by the per-date z-score) and
/// for the positivity test.
inline DailyScore score_day(const std::string& date, std::span<const double> pred, std::span<const double> raw_truth) {
  DailyScore s;
  s.date = date;
  s.ic = ic(pred, raw_truth);
  s.rank_ic = rank_ic(pred, raw_truth);
  std::vector<bool> positive(raw_truth.size());
  for (std::size_t i = 0; i < raw_truth.size(); ++i) positive[i] = raw_truth[i] > 0.0;
  for (std::size_t k = 0; k < kPrecisionCutoffs.size(); ++k) s.precision[k] = precision_at_n(pred, positive, kPrecisionCutoffs[k]);
  return s;
}

inline MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary m;
  m.count = xs.size();
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(var / static_cast<double>(xs.size()));
  return m;
}

/// Mean and population std per metric across days. Days with a degenerate
/// correlation are left out of that metric's average.
inline MetricReport aggregate(const std::vector<DailyScore>& daily) {
  if (daily.empty()) throw ContractError("aggregate: no daily scores");
  MetricReport r;
  r.daily = daily;
  std::vector<double> ics, rics;
  std::array<std::vector<double>, kPrecisionCutoffs.size()> prec;
  for (const auto& d : daily) {
    if (d.ic) ics.push_back(*d.ic);
    if (d.rank_ic) rics.push_back(*d.rank_ic);
    for (std::size_t k = 0; k < prec.size(); ++k) prec[k].push_back(d.precision[k]);
  }
  r.ic = summarize(ics);
  r.rank_ic = summarize(rics);
  for (std::size_t k = 0; k < prec.size(); ++k) r.precision[k] = summarize(prec[k]);
  return r;
}

/// `date,ic,rank_ic,p3,p5,p10,p30`; degenerate correlations are left blank.
inline std::string report_csv(const MetricReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "date,ic,rank_ic,p3,p5,p10,p30\n";
  for (const auto& d : r.daily) {
    os << d.date << ',';
    if (d.ic) os << *d.ic;
    os << ',';
    if (d.rank_ic) os << *d.rank_ic;
    for (double p : d.precision) os << ',' << p;
    os << '\n';
  }
  return os.str();
}

inline std::string report_header() {
  return "Methods    | IC        | Rank IC   | Precision@3 | Precision@5 | Precision@10 | Precision@30\n";
}

/// Two table lines: means, then standard deviations in parentheses.
inline std::string report_rows(const std::string& label, double ic_mean, double ic_std, double ric_mean,
                               double ric_std, const std::array<MetricSummary, kPrecisionCutoffs.size()>& precision,
                               const std::string& suffix = "") {
  auto paren = [](double v, const char* fmt) {
    char b[32];
    std::snprintf(b, sizeof(b), fmt, v);
    return std::string(b);
  };
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%-10s | %9.4f | %9.4f | %11.2f | %11.2f | %12.2f | %12.2f%s\n", label.c_str(),
                ic_mean, ric_mean, precision[0].mean, precision[1].mean, precision[2].mean, precision[3].mean,
                suffix.c_str());
  std::string out = buf;
  std::snprintf(buf, sizeof(buf), "%-10s | %9s | %9s | %11s | %11s | %12s | %12s\n", "",
                paren(ic_std, "(%.1e)").c_str(), paren(ric_std, "(%.1e)").c_str(),
                paren(precision[0].std, "(%.2f)").c_str(), paren(precision[1].std, "(%.2f)").c_str(),
                paren(precision[2].std, "(%.2f)").c_str(), paren(precision[3].std, "(%.2f)").c_str());
  return out + buf;
}

/// Summary in the IC / Rank IC / Precision@N table layout, with standard
/// deviations across days.
inline std::string report_table(const MetricReport& r, const std::string& label = "MTMD") {
  return report_header() + report_rows(label, r.ic.mean, r.ic.std, r.rank_ic.mean, r.rank_ic.std, r.precision);
}

}  // namespace mtmd
