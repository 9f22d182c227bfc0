#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtmd/data/synthetic.hpp"
#include "mtmd/errors.hpp"
#include "mtmd/model.hpp"

namespace mtmd {

using Json = nlohmann::json;

/// Date boundaries are inclusive upper bounds (train: date <= train_end,
/// valid: train_end < date <= valid_end, test: the rest). When they are
/// empty the labeled dates are split chronologically by fraction.
struct SplitConfig {
  std::string train_end;
  std::string valid_end;
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
};

struct DataPaths {
  std::string panel;
  std::string concepts;
};

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  double learning_rate = 2e-4;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.0;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  SplitConfig split;
  ModelConfig model;
  DataPaths data;
  bool eval_memory_writes = false;       // let banks keep absorbing during validation/test
  bool reset_memory_each_epoch = false;  // re-initialize banks at every epoch start
  std::string output_dir = "run";
  std::vector<std::uint64_t> ablation_seeds{0};

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ContractError("learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must be in [0,1)");
    if (!split.train_end.empty() && !split.valid_end.empty() && split.train_end > split.valid_end)
      throw ContractError("split boundaries out of order");
    if (split.train_fraction <= 0.0 || split.valid_fraction < 0.0 || split.train_fraction + split.valid_fraction > 1.0)
      throw ContractError("split fractions must be positive and sum to at most 1");
    model.validate();
  }
};

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ContractError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

inline Json to_json(const ModelConfig& m) {
  return Json{{"hidden", m.hidden},
              {"slots", m.slots},
              {"concept_capacity", m.concept_capacity},
              {"memory_predefined", m.memory_predefined},
              {"memory_hidden", m.memory_hidden},
              {"leaky_slope", m.leaky_slope},
              {"normalize_features", m.normalize_features}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig m;
  m.hidden = j.value("hidden", m.hidden);
  m.slots = j.value("slots", m.slots);
  m.concept_capacity = j.value("concept_capacity", m.concept_capacity);
  m.memory_predefined = j.value("memory_predefined", m.memory_predefined);
  m.memory_hidden = j.value("memory_hidden", m.memory_hidden);
  m.leaky_slope = j.value("leaky_slope", m.leaky_slope);
  m.normalize_features = j.value("normalize_features", m.normalize_features);
  return m;
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"optimizer", to_string(c.optimizer)},
              {"momentum", c.momentum},
              {"epochs", c.epochs},
              {"patience", c.patience},
              {"seed", c.seed},
              {"split",
               {{"train_end", c.split.train_end},
                {"valid_end", c.split.valid_end},
                {"train_fraction", c.split.train_fraction},
                {"valid_fraction", c.split.valid_fraction}}},
              {"model", to_json(c.model)},
              {"data", {{"panel", c.data.panel}, {"concepts", c.data.concepts}}},
              {"eval_memory_writes", c.eval_memory_writes},
              {"reset_memory_each_epoch", c.reset_memory_each_epoch},
              {"output_dir", c.output_dir},
              {"ablation_seeds", c.ablation_seeds}};
}

/// Relative data/output paths resolve against `base_dir`.
inline TrainConfig train_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.optimizer = optimizer_from_string(j.value("optimizer", to_string(c.optimizer)));
  c.momentum = j.value("momentum", c.momentum);
  c.epochs = j.value("epochs", c.epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (j.contains("split")) {
    const Json& s = j.at("split");
    c.split.train_end = s.value("train_end", c.split.train_end);
    c.split.valid_end = s.value("valid_end", c.split.valid_end);
    c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
    c.split.valid_fraction = s.value("valid_fraction", c.split.valid_fraction);
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  auto resolve = [&](const std::string& p) {
    if (p.empty() || base_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (base_dir / p).lexically_normal().string();
  };
  if (j.contains("data")) {
    c.data.panel = resolve(j.at("data").value("panel", std::string{}));
    c.data.concepts = resolve(j.at("data").value("concepts", std::string{}));
  }
  c.eval_memory_writes = j.value("eval_memory_writes", c.eval_memory_writes);
  c.reset_memory_each_epoch = j.value("reset_memory_each_epoch", c.reset_memory_each_epoch);
  c.output_dir = resolve(j.value("output_dir", c.output_dir));
  c.ablation_seeds = j.value("ablation_seeds", c.ablation_seeds);
  c.model.seed = c.seed;
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j, path.parent_path());
}

inline Json to_json(const SyntheticSpec& s) {
  return Json{{"n_stocks", s.n_stocks},
              {"n_concepts", s.n_concepts},
              {"n_dates", s.n_dates},
              {"membership_density", s.membership_density},
              {"factor_persistence", s.factor_persistence},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.seed},
              {"factor_sigma", s.factor_sigma},
              {"link_dropout", s.link_dropout},
              {"start_date", s.start_date}};
}

inline SyntheticSpec synthetic_spec_from_json(const Json& j) {
  SyntheticSpec s;
  s.n_stocks = j.value("n_stocks", s.n_stocks);
  s.n_concepts = j.value("n_concepts", s.n_concepts);
  s.n_dates = j.value("n_dates", s.n_dates);
  s.membership_density = j.value("membership_density", s.membership_density);
  s.factor_persistence = j.value("factor_persistence", s.factor_persistence);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  s.factor_sigma = j.value("factor_sigma", s.factor_sigma);
  s.link_dropout = j.value("link_dropout", s.link_dropout);
  s.start_date = j.value("start_date", s.start_date);
  s.validate();
  return s;
}

}  // namespace mtmd
