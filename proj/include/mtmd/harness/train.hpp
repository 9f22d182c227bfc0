#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtmd/data/csv.hpp"
#include "mtmd/errors.hpp"
#include "mtmd/harness/checkpoint.hpp"
#include "mtmd/harness/config.hpp"
#include "mtmd/harness/optimizer.hpp"
#include "mtmd/metrics.hpp"
#include "mtmd/model.hpp"

namespace mtmd {

struct Dataset {
  FeaturePanel panel;
  ConceptGraph graph;
};

inline Dataset load_dataset(const DataPaths& paths) {
  if (paths.panel.empty() || paths.concepts.empty()) throw DataError("config lacks data.panel / data.concepts");
  auto [panel, graph] = load_panel(paths.panel, paths.concepts);
  return Dataset{std::move(panel), std::move(graph)};
}

enum class Split { train, valid, test };

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw ContractError("unknown split '" + s + "' (expected train, valid or test)");
}

/// Labeled date indices per split, chronological. Depends only on the panel
/// and the split config.
struct Splits {
  std::vector<std::size_t> train, valid, test;

  const std::vector<std::size_t>& get(Split s) const {
    return s == Split::train ? train : s == Split::valid ? valid : test;
  }
};

inline Splits split_dates(const FeaturePanel& panel, const SplitConfig& cfg) {
  std::vector<std::size_t> labeled;
  for (std::size_t d = 0; d < panel.dates.size(); ++d)
    if (panel.dates[d].has_labels) labeled.push_back(d);
  Splits s;
  if (!cfg.train_end.empty() && !cfg.valid_end.empty()) {
    for (std::size_t d : labeled) {
      const std::string& date = panel.dates[d].date;
      (date <= cfg.train_end ? s.train : date <= cfg.valid_end ? s.valid : s.test).push_back(d);
    }
    return s;
  }
  const auto n = labeled.size();
  const auto n_train = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::floor(cfg.valid_fraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < n; ++k)
    (k < n_train ? s.train : k < n_train + n_valid ? s.valid : s.test).push_back(labeled[k]);
  return s;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-date MSE; 0 for the untrained epoch-0 entry
  double valid_ic = 0.0;
  bool improved = false;
  std::vector<std::string> dates;  // training dates in the order they were visited
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_valid_ic = 0.0;
  bool stopped_early = false;
};

inline Json to_json(const TrainingLog& log) {
  Json epochs = Json::array();
  for (const auto& e : log.epochs)
    epochs.push_back(Json{{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"valid_ic", e.valid_ic},
                          {"improved", e.improved},
                          {"dates", e.dates}});
  return Json{{"epochs", std::move(epochs)},
              {"best_epoch", log.best_epoch},
              {"best_valid_ic", log.best_valid_ic},
              {"stopped_early", log.stopped_early}};
}

struct TrainResult {
  Checkpoint best;          // state at the epoch with the highest validation IC
  ModelState best_state;
  ModelState final_state;
  TrainingLog log;
};

/// Preprocessed inputs, one per panel date.
inline std::vector<ModelInput> prepare_inputs(const Dataset& data, const ModelConfig& model) {
  std::vector<ModelInput> inputs;
  inputs.reserve(data.panel.dates.size());
  for (std::size_t d = 0; d < data.panel.dates.size(); ++d)
    inputs.push_back(make_input(data.panel.dates[d], data.graph, d, model));
  return inputs;
}

/// Eval-mode scoring over `dates`. Banks stay frozen unless
/// `memory_writes` is set, in which case a copy absorbs each date in order.
inline MetricReport evaluate_dates(const ModelState& state, const ModelConfig& model, const Dataset& data,
                                   const std::vector<ModelInput>& inputs, const std::vector<std::size_t>& dates,
                                   bool memory_writes = false) {
  if (dates.empty()) throw ContractError("evaluate: split is empty");
  std::vector<DailyScore> daily;
  daily.reserve(dates.size());
  std::optional<ModelState> writable;
  if (memory_writes) writable = state;
  for (std::size_t d : dates) {
    const DateSlice& slice = data.panel.dates[d];
    if (!slice.has_labels) throw ContractError("evaluate: date " + slice.date + " has no labels");
    const Tensor pred = writable ? forward(inputs[d], *writable, model, Mode::train).predictions
                                 : predict(inputs[d], state, model);
    if (!pred.all_finite()) throw NumericError("non-finite prediction on " + slice.date);
    daily.push_back(score_day(slice.date, pred.data(), slice.raw_labels.data()));
  }
  return aggregate(daily);
}

/// One optimization step on one date: forward with trainable parameters,
/// loss, memory writes, backward, parameter update. Returns the loss.
inline double train_step(ModelState& state, const ModelConfig& model, const ModelInput& input, const Tensor& labels,
                         Optimizer& optimizer, const std::string& date) {
  Tape tape;
  NamedVars vars = bind_parameters(tape, state.params, true);
  Var m1 = tape.constant(state.banks.predefined.items);
  Var m2 = tape.constant(state.banks.hidden.items);
  std::optional<ForwardGraph> fg;
  try {
    fg.emplace(forward_graph(tape, vars, input, m1, m2, model));
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " on " + date);
  }
  const ForwardGraph& g = *fg;
  Var loss = mse_loss(g.predictions, tape.constant(labels));
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw NumericError("non-finite training loss on " + date);
  write_memories(g, state.banks);
  Gradients grads = tape.backward(loss);
  optimizer.step(state.params, grads);
  for (const auto& [name, t] : state.params)
    if (!t.all_finite()) throw NumericError("parameter " + name + " became non-finite after the update on " + date);
  return value;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Chronological per-date training with validation-IC model selection.
/// The untrained model is scored as epoch 0 and competes for "best";
/// training stops after `patience` epochs without improvement.
inline TrainResult train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch = {}) {
  config.validate();
  ModelConfig model = config.model;
  model.seed = config.seed;
  const Splits splits = split_dates(data.panel, config.split);
  if (splits.train.empty()) throw ContractError("train: training split is empty");
  if (splits.valid.empty()) throw ContractError("train: validation split is empty");
  const std::vector<ModelInput> inputs = prepare_inputs(data, model);

  ModelState state = init_model(model);
  const MemoryBanks initial_banks = state.banks;
  Optimizer optimizer(config.optimizer, config.learning_rate, config.momentum);

  TrainResult result;
  auto valid_ic = [&](const ModelState& s) {
    return evaluate_dates(s, model, data, inputs, splits.valid, config.eval_memory_writes).ic.mean;
  };

  EpochRecord zero;
  zero.valid_ic = valid_ic(state);
  zero.improved = true;
  result.log.epochs.push_back(zero);
  result.log.best_valid_ic = zero.valid_ic;
  result.best_state = state;
  if (on_epoch) on_epoch(zero);

  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.reset_memory_each_epoch) state.banks = initial_banks;
    EpochRecord rec;
    rec.epoch = epoch;
    double total = 0.0;
    for (std::size_t d : splits.train) {
      const DateSlice& slice = data.panel.dates[d];
      total += train_step(state, model, inputs[d], slice.labels, optimizer, slice.date);
      rec.dates.push_back(slice.date);
    }
    rec.train_loss = total / static_cast<double>(splits.train.size());
    rec.valid_ic = valid_ic(state);
    rec.improved = rec.valid_ic > result.log.best_valid_ic;
    if (rec.improved) {
      result.log.best_valid_ic = rec.valid_ic;
      result.log.best_epoch = epoch;
      result.best_state = state;
      stale = 0;
    } else {
      ++stale;
    }
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stale >= config.patience) {
      result.log.stopped_early = epoch < config.epochs;
      break;
    }
  }
  result.final_state = std::move(state);
  result.best = make_checkpoint(result.best_state, config,
                                Json{{"best_epoch", result.log.best_epoch}, {"valid_ic", result.log.best_valid_ic}});
  return result;
}

inline MetricReport evaluate(const Checkpoint& ckpt, const Dataset& data, Split split) {
  const TrainConfig config = config_from_checkpoint(ckpt);
  const ModelState state = state_from_checkpoint(ckpt);
  const Splits splits = split_dates(data.panel, config.split);
  const std::vector<ModelInput> inputs = prepare_inputs(data, config.model);
  return evaluate_dates(state, config.model, data, inputs, splits.get(split), config.eval_memory_writes);
}

}  // namespace mtmd
