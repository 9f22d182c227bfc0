#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "mtmd/data/panel.hpp"
#include "mtmd/errors.hpp"

namespace mtmd {

namespace csv {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline double parse_double(std::string_view cell, const std::string& file, std::size_t line, std::string_view column) {
  cell = trim(cell);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
    throw ParseError(file, line, "non-numeric value '" + std::string(cell) + "' in column " + std::string(column));
  if (!std::isfinite(v))
    throw ParseError(file, line, "non-finite value in column " + std::string(column));
  return v;
}

inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (s[i] < '0' || s[i] > '9') return false;
  return true;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

inline std::string feature_column(std::size_t k) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "f%03zu", k);
  return buf;
}

}  // namespace csv

namespace detail {

struct PanelRow {
  std::string stock_id;
  double market_cap;
  double price;
  std::vector<double> features;
};

}  // namespace detail

/// Reads the panel CSV (`date,stock_id,market_cap,price,f000..f359`) and the
/// concept CSV (`concept_id,stock_id[,date]`).
///
/// Dates come out sorted, stocks sorted by id within each date. A date's
/// labels are the change rates to the same stock's price on the next panel
/// date, z-scored per date; stocks that are missing on the next date are
/// dropped from that date. The final date keeps every stock and has no
/// labels. Without a date column the concept graph is the same on every
/// date; link rows for dates or stocks absent from a given date are skipped.
inline std::pair<FeaturePanel, ConceptGraph> load_panel(const std::filesystem::path& panel_path,
                                                        const std::filesystem::path& concept_path) {
  const std::string pfile = panel_path.string();
  std::ifstream in = csv::open_in(panel_path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(pfile, 1, "missing header");
  {
    const auto header = csv::split(csv::trim(line));
    std::vector<std::string> expected{"date", "stock_id", "market_cap", "price"};
    for (std::size_t k = 0; k < kFeatureWidth; ++k) expected.push_back(csv::feature_column(k));
    for (std::size_t c = 0; c < expected.size(); ++c) {
      if (c >= header.size()) throw ParseError(pfile, 1, "missing column " + expected[c]);
      if (csv::trim(header[c]) != expected[c])
        throw ParseError(pfile, 1, "expected column " + expected[c] + ", found '" + std::string(header[c]) + "'");
    }
    if (header.size() > expected.size()) throw ParseError(pfile, 1, "unexpected extra columns");
  }

  std::map<std::string, std::map<std::string, detail::PanelRow>> by_date;
  std::set<std::string> all_stocks;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = csv::trim(line);
    if (row.empty()) continue;
    const auto cells = csv::split(row);
    if (cells.size() != 4 + kFeatureWidth)
      throw ParseError(pfile, line_no,
                       "expected " + std::to_string(4 + kFeatureWidth) + " cells, got " + std::to_string(cells.size()));
    const std::string date(csv::trim(cells[0]));
    if (!csv::is_iso_date(date)) throw ParseError(pfile, line_no, "date '" + date + "' is not YYYY-MM-DD");
    detail::PanelRow r;
    r.stock_id = std::string(csv::trim(cells[1]));
    if (r.stock_id.empty()) throw ParseError(pfile, line_no, "empty stock_id");
    r.market_cap = csv::parse_double(cells[2], pfile, line_no, "market_cap");
    r.price = csv::parse_double(cells[3], pfile, line_no, "price");
    if (r.market_cap <= 0.0) throw ParseError(pfile, line_no, "market_cap must be positive");
    if (r.price <= 0.0) throw ParseError(pfile, line_no, "price must be positive");
    r.features.resize(kFeatureWidth);
    for (std::size_t k = 0; k < kFeatureWidth; ++k)
      r.features[k] = csv::parse_double(cells[4 + k], pfile, line_no, csv::feature_column(k));
    auto& slot = by_date[date];
    if (slot.contains(r.stock_id))
      throw ParseError(pfile, line_no, "duplicate row for date " + date + ", stock " + r.stock_id);
    all_stocks.insert(r.stock_id);
    std::string id = r.stock_id;
    slot.emplace(std::move(id), std::move(r));
  }

  FeaturePanel panel;
  std::vector<std::string> date_keys;
  for (const auto& kv : by_date) date_keys.push_back(kv.first);
  for (std::size_t d = 0; d < date_keys.size(); ++d) {
    const auto& rows = by_date.at(date_keys[d]);
    const auto* next = d + 1 < date_keys.size() ? &by_date.at(date_keys[d + 1]) : nullptr;
    DateSlice slice;
    slice.date = date_keys[d];
    slice.has_labels = next != nullptr;
    std::vector<const detail::PanelRow*> kept;
    for (const auto& [id, r] : rows)
      if (!next || next->contains(id)) kept.push_back(&r);
    const std::size_t n = kept.size();
    slice.features = Tensor(Shape{n, kFeatureWidth});
    slice.market_caps = Tensor(Shape{n});
    slice.prices = Tensor(Shape{n});
    if (slice.has_labels) slice.raw_labels = Tensor(Shape{n});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = *kept[i];
      slice.stock_ids.push_back(r.stock_id);
      slice.market_caps[i] = r.market_cap;
      slice.prices[i] = r.price;
      std::copy(r.features.begin(), r.features.end(), slice.features.row(i).begin());
      if (slice.has_labels) slice.raw_labels[i] = change_rate(r.price, next->at(r.stock_id).price);
    }
    if (slice.has_labels) slice.labels = normalize_labels_per_date(slice.raw_labels);
    panel.dates.push_back(std::move(slice));
  }

  // Concepts.
  ConceptGraph graph;
  graph.links.resize(panel.dates.size());
  const std::string cfile = concept_path.string();
  std::ifstream cin = csv::open_in(concept_path);
  line_no = 1;
  if (!std::getline(cin, line) || csv::trim(line).empty()) return {std::move(panel), std::move(graph)};
  bool dated = false;
  {
    const auto header = csv::split(csv::trim(line));
    if (header.size() < 1 || csv::trim(header[0]) != "concept_id") throw ParseError(cfile, 1, "missing column concept_id");
    if (header.size() < 2 || csv::trim(header[1]) != "stock_id") throw ParseError(cfile, 1, "missing column stock_id");
    if (header.size() == 3) {
      if (csv::trim(header[2]) != "date") throw ParseError(cfile, 1, "third column must be date");
      dated = true;
    } else if (header.size() > 3) {
      throw ParseError(cfile, 1, "unexpected extra columns");
    }
  }
  struct RawLink {
    std::string concept_id, stock_id, date;
  };
  std::vector<RawLink> raw;
  std::set<std::string> concept_set;
  while (std::getline(cin, line)) {
    ++line_no;
    const std::string_view row = csv::trim(line);
    if (row.empty()) continue;
    const auto cells = csv::split(row);
    if (cells.size() != (dated ? 3u : 2u))
      throw ParseError(cfile, line_no, "expected " + std::to_string(dated ? 3 : 2) + " cells");
    RawLink l{std::string(csv::trim(cells[0])), std::string(csv::trim(cells[1])),
              dated ? std::string(csv::trim(cells[2])) : std::string()};
    if (l.concept_id.empty()) throw ParseError(cfile, line_no, "empty concept_id");
    if (!all_stocks.contains(l.stock_id)) throw ParseError(cfile, line_no, "unknown stock id '" + l.stock_id + "'");
    if (dated && !csv::is_iso_date(l.date)) throw ParseError(cfile, line_no, "date '" + l.date + "' is not YYYY-MM-DD");
    concept_set.insert(l.concept_id);
    raw.push_back(std::move(l));
  }
  graph.concept_ids.assign(concept_set.begin(), concept_set.end());
  std::map<std::string, std::size_t> concept_index;
  for (std::size_t c = 0; c < graph.concept_ids.size(); ++c) concept_index.emplace(graph.concept_ids[c], c);

  for (std::size_t d = 0; d < panel.dates.size(); ++d) {
    const auto& slice = panel.dates[d];
    std::map<std::string_view, std::size_t> stock_index;
    for (std::size_t i = 0; i < slice.stock_ids.size(); ++i) stock_index.emplace(slice.stock_ids[i], i);
    std::set<ConceptGraph::Link> links;
    for (const auto& l : raw) {
      if (dated && l.date != slice.date) continue;
      const auto it = stock_index.find(l.stock_id);
      if (it == stock_index.end()) continue;
      links.emplace(it->second, concept_index.at(l.concept_id));
    }
    graph.links[d].assign(links.begin(), links.end());
  }
  return {std::move(panel), std::move(graph)};
}

inline void write_panel(const std::filesystem::path& path, const FeaturePanel& panel) {
  std::ofstream out = csv::open_out(path);
  out << "date,stock_id,market_cap,price";
  for (std::size_t k = 0; k < kFeatureWidth; ++k) out << ',' << csv::feature_column(k);
  out << '\n';
  for (const auto& slice : panel.dates) {
    for (std::size_t i = 0; i < slice.num_stocks(); ++i) {
      out << slice.date << ',' << slice.stock_ids[i] << ',' << csv::format_double(slice.market_caps[i]) << ','
          << csv::format_double(slice.prices[i]);
      for (double v : slice.features.row(i)) out << ',' << csv::format_double(v);
      out << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

/// Static concept file (`concept_id,stock_id`) from the graph of one date.
inline void write_static_concepts(const std::filesystem::path& path, const ConceptGraph& graph,
                                  const DateSlice& slice, std::size_t date_index) {
  std::ofstream out = csv::open_out(path);
  out << "concept_id,stock_id\n";
  std::vector<ConceptGraph::Link> links = graph.links.at(date_index);
  std::sort(links.begin(), links.end(), [](const auto& a, const auto& b) {
    return std::tie(a.second, a.first) < std::tie(b.second, b.first);
  });
  for (const auto& [s, c] : links) out << graph.concept_ids.at(c) << ',' << slice.stock_ids.at(s) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace mtmd
