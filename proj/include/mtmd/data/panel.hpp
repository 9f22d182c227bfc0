#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtmd/errors.hpp"
#include "mtmd/numerics/tensor.hpp"

namespace mtmd {

inline constexpr std::size_t kLookbackDays = 60;
inline constexpr std::size_t kFieldsPerDay = 6;  // open, close, high, low, vwap, volume
inline constexpr std::size_t kFeatureWidth = kLookbackDays * kFieldsPerDay;

/// One trading date's cross-section.
///
/// features row i holds stock i's lookback as 60 steps × 6 fields, oldest
/// step first: f[s*6 + k] is field k on step s. labels are the per-date
/// z-scored change rates; raw_labels keep the unnormalized rates (their sign
/// decides Precision@N). The last date of a panel has no next-day price and
/// therefore no labels.
struct DateSlice {
  std::string date;
  std::vector<std::string> stock_ids;
  Tensor features;     // [N_s × 360]
  Tensor market_caps;  // [N_s], > 0
  Tensor prices;       // [N_s]
  Tensor raw_labels;   // [N_s] when has_labels
  Tensor labels;       // [N_s] when has_labels
  bool has_labels = false;

  std::size_t num_stocks() const { return stock_ids.size(); }
};

struct FeaturePanel {
  std::vector<DateSlice> dates;

  std::size_t num_labeled() const {
    std::size_t n = 0;
    for (const auto& d : dates) n += d.has_labels ? 1 : 0;
    return n;
  }
};

/// Stock↔concept links. Concept ids are shared by every date; links are
/// kept per date and index into that date's stock list.
struct ConceptGraph {
  using Link = std::pair<std::size_t, std::size_t>;  // (stock index, concept index)

  std::vector<std::string> concept_ids;
  std::vector<std::vector<Link>> links;  // aligned with FeaturePanel::dates

  std::size_t num_concepts() const { return concept_ids.size(); }
};

/// (price_next − price_t) / price_t
inline double change_rate(double price_t, double price_next) {
  if (!(price_t > 0.0)) throw DataError("change_rate: price must be positive, got " + std::to_string(price_t));
  return (price_next - price_t) / price_t;
}

/// Per-date z-score with population std. Degenerate inputs (a single stock,
/// or std below eps) map to zeros.
inline Tensor normalize_labels_per_date(const Tensor& raw, double eps = 1e-12) {
  const std::size_t n = raw.size();
  Tensor out(raw.shape(), 0.0);
  if (n <= 1) return out;
  double mu = 0.0;
  for (double v : raw.data()) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : raw.data()) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd < eps) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = (raw[i] - mu) / sd;
  return out;
}

/// Column-wise cross-sectional z-score of a [N_s × W] feature matrix, used
/// as model input preprocessing. Constant columns become zero.
inline Tensor normalize_features_per_date(const Tensor& features, double eps = 1e-12) {
  features.require_rank(2);
  const std::size_t rows = features.rows(), cols = features.cols();
  Tensor out(features.shape(), 0.0);
  if (rows <= 1) return out;
  for (std::size_t c = 0; c < cols; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mu += features(r, c);
    mu /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) var += (features(r, c) - mu) * (features(r, c) - mu);
    const double sd = std::sqrt(var / static_cast<double>(rows));
    if (sd < eps) continue;
    for (std::size_t r = 0; r < rows; ++r) out(r, c) = (features(r, c) - mu) / sd;
  }
  return out;
}

/// Per-stock concept membership mask [N_s × N_c] for one date.
inline std::vector<std::uint8_t> link_mask(const ConceptGraph& graph, std::size_t date_index, std::size_t num_stocks) {
  const std::size_t nc = graph.num_concepts();
  std::vector<std::uint8_t> mask(num_stocks * nc, 0);
  if (date_index >= graph.links.size()) return mask;
  for (const auto& [s, c] : graph.links[date_index]) {
    if (s >= num_stocks || c >= nc)
      throw DataError("concept link (" + std::to_string(s) + "," + std::to_string(c) + ") out of range");
    mask[s * nc + c] = 1;
  }
  return mask;
}

}  // namespace mtmd
