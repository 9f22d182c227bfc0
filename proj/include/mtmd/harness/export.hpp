#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "mtmd/data/csv.hpp"
#include "mtmd/harness/train.hpp"

namespace mtmd {

inline constexpr std::array<const char*, 4> kExportStages{"h1", "q1", "q2", "ĥ3"};

/// Per-stock stage features as `date,stock_id,stage,d0,...,d{L-1}`, one row
/// per (date, stock, stage). Banks stay frozen throughout.
inline std::string embeddings_csv(const ModelState& state, const ModelConfig& model, const Dataset& data,
                                  const std::vector<std::size_t>& dates) {
  std::string out = "date,stock_id,stage";
  for (std::size_t k = 0; k < model.hidden; ++k) out += ",d" + std::to_string(k);
  out += '\n';
  ModelState frozen = state;
  for (std::size_t d : dates) {
    const DateSlice& slice = data.panel.dates[d];
    const ForwardTrace t = forward(make_input(slice, data.graph, d, model), frozen, model, Mode::eval);
    const std::array<const Tensor*, 4> stages{&t.h1, &t.q1, &t.q2, &t.hhat3};
    for (std::size_t i = 0; i < slice.num_stocks(); ++i) {
      for (std::size_t s = 0; s < stages.size(); ++s) {
        out += slice.date + ',' + slice.stock_ids[i] + ',' + kExportStages[s];
        for (double v : stages[s]->row(i)) out += ',' + csv::format_double(v);
        out += '\n';
      }
    }
  }
  return out;
}

inline void export_embeddings(const Checkpoint& ckpt, const Dataset& data, Split split,
                              const std::filesystem::path& out_path) {
  const TrainConfig config = config_from_checkpoint(ckpt);
  const ModelState state = state_from_checkpoint(ckpt);
  const auto dates = split_dates(data.panel, config.split).get(split);
  if (dates.empty()) throw ContractError("export: split is empty");
  const std::string text = embeddings_csv(state, config.model, data, dates);
  auto out = csv::open_out(out_path);
  out << text;
  if (!out) throw DataError("write failed: " + out_path.string());
}

}  // namespace mtmd
