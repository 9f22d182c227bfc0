#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mtmd/harness/train.hpp"

namespace mtmd {

struct AblationSetting {
  const char* label;
  bool memory_predefined;
  bool memory_hidden;
};

inline constexpr std::array<AblationSetting, 4> kAblationSettings{{
    {"B", false, false},
    {"P", true, false},
    {"H", false, true},
    {"A", true, true},
}};

struct AblationRow {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricReport> test;  // one per seed
  std::vector<double> valid_ic;    // best validation IC per seed

  /// Per-seed mean test metric, summarized across seeds.
  MetricSummary across_seeds(auto&& pick) const {
    std::vector<double> xs;
    for (const auto& r : test) xs.push_back(pick(r));
    return summarize(xs);
  }
  MetricSummary test_ic() const {
    return across_seeds([](const MetricReport& r) { return r.ic.mean; });
  }
};

struct AblationResult {
  std::vector<AblationRow> rows;  // B, P, H, A

  const AblationRow& row(const std::string& label) const {
    for (const auto& r : rows)
      if (r.label == label) return r;
    throw ContractError("no ablation row " + label);
  }
};

inline TrainConfig with_switches(TrainConfig config, const AblationSetting& s, std::uint64_t seed) {
  config.model.memory_predefined = s.memory_predefined;
  config.model.memory_hidden = s.memory_hidden;
  config.seed = seed;
  config.model.seed = seed;
  return config;
}

using AblationProgress = std::function<void(const std::string& label, std::uint64_t seed, const MetricReport& test)>;

/// Trains B/P/H/A with the same seeds and data, scoring each best
/// checkpoint on the test split.
inline AblationResult run_ablation(const TrainConfig& base, const Dataset& data, const AblationProgress& progress = {}) {
  if (base.ablation_seeds.empty()) throw ContractError("ablation_seeds is empty");
  AblationResult result;
  const Splits splits = split_dates(data.panel, base.split);
  if (splits.test.empty()) throw ContractError("ablation: test split is empty");
  for (const auto& setting : kAblationSettings) {
    AblationRow row;
    row.label = setting.label;
    for (std::uint64_t seed : base.ablation_seeds) {
      const TrainConfig cfg = with_switches(base, setting, seed);
      const TrainResult trained = train(cfg, data);
      const auto inputs = prepare_inputs(data, cfg.model);
      MetricReport test = evaluate_dates(trained.best_state, cfg.model, data, inputs, splits.test, cfg.eval_memory_writes);
      if (progress) progress(setting.label, seed, test);
      row.seeds.push_back(seed);
      row.valid_ic.push_back(trained.log.best_valid_ic);
      row.test.push_back(std::move(test));
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

/// Test metrics per switch setting; standard deviations are across seeds.
inline std::string ablation_table(const AblationResult& r) {
  std::string out = report_header();
  for (const auto& row : r.rows) {
    std::array<MetricSummary, kPrecisionCutoffs.size()> prec;
    for (std::size_t k = 0; k < prec.size(); ++k)
      prec[k] = row.across_seeds([k](const MetricReport& m) { return m.precision[k].mean; });
    const MetricSummary ic = row.test_ic();
    const MetricSummary ric = row.across_seeds([](const MetricReport& m) { return m.rank_ic.mean; });
    out += report_rows(row.label, ic.mean, ic.std, ric.mean, ric.std, prec);
  }
  out +=
      "B: memory off, P: predefined-concept memory, H: hidden-concept memory, A: both.\n"
      "Reference full-scale result on CSI 100: B IC 0.120, A IC 0.128 (+0.008); not expected at this scale.\n";
  return out;
}

}  // namespace mtmd
