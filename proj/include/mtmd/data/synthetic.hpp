#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mtmd/data/csv.hpp"
#include "mtmd/data/panel.hpp"
#include "mtmd/errors.hpp"

namespace mtmd {

/// Planted-factor market. Each concept carries an AR(1) factor path; a
/// stock's daily return is the mean of its concepts' factors plus Gaussian
/// idiosyncratic noise.
struct SyntheticSpec {
  std::size_t n_stocks = 20;
  std::size_t n_concepts = 4;
  std::size_t n_dates = 300;
  double membership_density = 0.4;
  double factor_persistence = 0.9;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
  /// Stationary std of every concept factor.
  double factor_sigma = 0.06;
  /// Probability that a true membership is left out of the predefined graph
  /// handed to the model (the ground-truth sidecar keeps it).
  double link_dropout = 0.0;
  std::string start_date = "2007-01-01";

  void validate() const {
    if (n_stocks < 1 || n_concepts < 1 || n_dates < 1) throw DataError("synthetic spec: counts must be >= 1");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(membership_density) || !prob(link_dropout)) throw DataError("synthetic spec: probabilities must be in [0,1]");
    if (!(factor_persistence >= 0.0 && factor_persistence < 1.0))
      throw DataError("synthetic spec: factor_persistence must be in [0,1)");
    if (!(noise_sigma >= 0.0) || !(factor_sigma >= 0.0)) throw DataError("synthetic spec: sigmas must be >= 0");
    if (!csv::is_iso_date(start_date)) throw DataError("synthetic spec: start_date must be YYYY-MM-DD");
  }
};

struct SyntheticTruth {
  std::vector<std::string> stock_ids;
  std::vector<std::string> concept_ids;
  std::vector<std::uint8_t> membership;  // [n_stocks × n_concepts]
  std::vector<std::string> days;         // every simulated day, including the warm-up
  Tensor factors;                        // [n_days × n_concepts]
  Tensor returns;                        // [n_days × n_stocks]; row 0 is zero

  bool member(std::size_t stock, std::size_t concept_index) const {
    return membership[stock * concept_ids.size() + concept_index] != 0;
  }
};

struct SyntheticMarket {
  FeaturePanel panel;
  ConceptGraph graph;
  SyntheticTruth truth;
};

namespace detail {

inline std::string add_days(const std::string& iso, int days) {
  using namespace std::chrono;
  const int y = std::stoi(iso.substr(0, 4));
  const unsigned m = static_cast<unsigned>(std::stoi(iso.substr(5, 2)));
  const unsigned d = static_cast<unsigned>(std::stoi(iso.substr(8, 2)));
  const year_month_day ymd{sys_days{year{y} / month{m} / day{d}} + std::chrono::days{days}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::string indexed_id(char prefix, std::size_t i, int width) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, i);
  return buf;
}

}  // namespace detail

/// Simulates `n_dates` days. Panel dates start on the first day whose whole
/// 60-day window has a previous close (day 60); every panel date except the
/// final one is labeled, so n_dates − 61 labeled dates come out.
///
/// Features follow the usual lookback layout: prices divided by the latest
/// close, volume divided by the latest volume.
inline SyntheticMarket generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const std::size_t ns = spec.n_stocks, nc = spec.n_concepts, nd = spec.n_dates;
  SyntheticMarket out;
  SyntheticTruth& truth = out.truth;
  for (std::size_t i = 0; i < ns; ++i) truth.stock_ids.push_back(detail::indexed_id('S', i, 3));
  for (std::size_t c = 0; c < nc; ++c) truth.concept_ids.push_back(detail::indexed_id('C', c, 2));

  truth.membership.assign(ns * nc, 0);
  for (std::size_t i = 0; i < ns; ++i) {
    bool any = false;
    for (std::size_t c = 0; c < nc; ++c) {
      if (unif(rng) < spec.membership_density) {
        truth.membership[i * nc + c] = 1;
        any = true;
      }
    }
    if (!any) truth.membership[i * nc + std::uniform_int_distribution<std::size_t>(0, nc - 1)(rng)] = 1;
  }

  std::vector<std::uint8_t> predefined = truth.membership;
  for (auto& m : predefined)
    if (m && unif(rng) < spec.link_dropout) m = 0;

  std::vector<double> caps(ns), base_volume(ns);
  for (std::size_t i = 0; i < ns; ++i) caps[i] = std::exp(gauss(rng));
  for (std::size_t i = 0; i < ns; ++i) base_volume[i] = 1e6 * std::exp(gauss(rng));

  // Factor paths, started from the stationary distribution.
  const double innovation = spec.factor_sigma * std::sqrt(1.0 - spec.factor_persistence * spec.factor_persistence);
  truth.factors = Tensor(Shape{nd, nc});
  for (std::size_t c = 0; c < nc; ++c) truth.factors(0, c) = spec.factor_sigma * gauss(rng);
  for (std::size_t t = 1; t < nd; ++t)
    for (std::size_t c = 0; c < nc; ++c)
      truth.factors(t, c) = spec.factor_persistence * truth.factors(t - 1, c) + innovation * gauss(rng);

  for (std::size_t t = 0; t < nd; ++t) truth.days.push_back(detail::add_days(spec.start_date, static_cast<int>(t)));

  // Returns and OHLCV bars.
  truth.returns = Tensor(Shape{nd, ns});
  std::vector<std::vector<double>> open(nd, std::vector<double>(ns)), close = open, high = open, low = open,
                                                                       vwap = open, volume = open;
  for (std::size_t i = 0; i < ns; ++i) {
    close[0][i] = open[0][i] = high[0][i] = low[0][i] = vwap[0][i] = 100.0;
    volume[0][i] = base_volume[i];
  }
  for (std::size_t t = 1; t < nd; ++t) {
    for (std::size_t i = 0; i < ns; ++i) {
      double f = 0.0;
      std::size_t k = 0;
      for (std::size_t c = 0; c < nc; ++c) {
        if (!truth.member(i, c)) continue;
        f += truth.factors(t, c);
        ++k;
      }
      // Clamp keeps prices positive under extreme sigma settings.
      const double r = std::max(f / static_cast<double>(k) + spec.noise_sigma * gauss(rng), -0.95);
      truth.returns(t, i) = r;
      close[t][i] = close[t - 1][i] * (1.0 + r);
    }
    for (std::size_t i = 0; i < ns; ++i) {
      const double o = close[t - 1][i] * std::exp(0.002 * gauss(rng));
      const double c = close[t][i];
      const double h = std::max(o, c) * (1.0 + std::abs(0.005 * gauss(rng)));
      const double l = std::min(o, c) * (1.0 - std::abs(0.005 * gauss(rng)));
      open[t][i] = o;
      high[t][i] = h;
      low[t][i] = l;
      vwap[t][i] = (h + l + c) / 3.0;
      volume[t][i] = base_volume[i] * std::exp(0.3 * gauss(rng));
    }
  }

  // Panel dates: day t with t-59 >= 1.
  const std::size_t first = kLookbackDays;
  for (std::size_t t = first; t < nd; ++t) {
    DateSlice slice;
    slice.date = truth.days[t];
    slice.stock_ids = truth.stock_ids;
    slice.features = Tensor(Shape{ns, kFeatureWidth});
    slice.market_caps = Tensor(Shape{ns});
    slice.prices = Tensor(Shape{ns});
    slice.has_labels = t + 1 < nd;
    if (slice.has_labels) slice.raw_labels = Tensor(Shape{ns});
    for (std::size_t i = 0; i < ns; ++i) {
      slice.market_caps[i] = caps[i];
      slice.prices[i] = close[t][i];
      const double ref_price = close[t][i];
      const double ref_volume = volume[t][i];
      auto row = slice.features.row(i);
      for (std::size_t s = 0; s < kLookbackDays; ++s) {
        const std::size_t day = t + 1 - kLookbackDays + s;
        double* f = row.data() + s * kFieldsPerDay;
        f[0] = open[day][i] / ref_price;
        f[1] = close[day][i] / ref_price;
        f[2] = high[day][i] / ref_price;
        f[3] = low[day][i] / ref_price;
        f[4] = vwap[day][i] / ref_price;
        f[5] = volume[day][i] / ref_volume;
      }
      if (slice.has_labels) slice.raw_labels[i] = change_rate(close[t][i], close[t + 1][i]);
    }
    if (slice.has_labels) slice.labels = normalize_labels_per_date(slice.raw_labels);
    out.panel.dates.push_back(std::move(slice));
  }

  out.graph.concept_ids = truth.concept_ids;
  std::vector<ConceptGraph::Link> links;
  for (std::size_t i = 0; i < ns; ++i)
    for (std::size_t c = 0; c < nc; ++c)
      if (predefined[i * nc + c]) links.emplace_back(i, c);
  out.graph.links.assign(out.panel.dates.size(), links);
  return out;
}

/// Writes panel.csv, concepts.csv, membership.csv and factors.csv into `dir`.
inline void write_synthetic(const std::filesystem::path& dir, const SyntheticMarket& market) {
  std::filesystem::create_directories(dir);
  write_panel(dir / "panel.csv", market.panel);
  if (!market.panel.dates.empty()) {
    write_static_concepts(dir / "concepts.csv", market.graph, market.panel.dates.front(), 0);
  } else {
    std::ofstream(dir / "concepts.csv") << "concept_id,stock_id\n";
  }
  const SyntheticTruth& t = market.truth;
  {
    std::ofstream out = csv::open_out(dir / "membership.csv");
    out << "concept_id,stock_id\n";
    for (std::size_t c = 0; c < t.concept_ids.size(); ++c)
      for (std::size_t i = 0; i < t.stock_ids.size(); ++i)
        if (t.member(i, c)) out << t.concept_ids[c] << ',' << t.stock_ids[i] << '\n';
  }
  {
    std::ofstream out = csv::open_out(dir / "factors.csv");
    out << "date,concept_id,value\n";
    for (std::size_t d = 0; d < t.days.size(); ++d)
      for (std::size_t c = 0; c < t.concept_ids.size(); ++c)
        out << t.days[d] << ',' << t.concept_ids[c] << ',' << csv::format_double(t.factors(d, c)) << '\n';
  }
}

}  // namespace mtmd
