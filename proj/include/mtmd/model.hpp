#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mtmd/concept_modules.hpp"
#include "mtmd/data/panel.hpp"
#include "mtmd/encoder.hpp"
#include "mtmd/memory.hpp"
#include "mtmd/numerics/gradcheck.hpp"
#include "mtmd/numerics/ops.hpp"

namespace mtmd {

struct ModelConfig {
  std::size_t hidden = 64;     // L
  std::size_t slots = 16;      // K
  std::size_t concept_capacity = 0;  // N_c upper bound; 0 accepts whatever the graph provides
  bool memory_predefined = true;
  bool memory_hidden = true;
  double leaky_slope = kDefaultLeakySlope;
  bool normalize_features = true;  // cross-sectional z-score of every input column
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden < 1 || slots < 1) throw ContractError("model config: L and K must be >= 1");
  }

  /// Ablation label: B (no memory), P, H or A (both).
  std::string switch_label() const {
    if (memory_predefined && memory_hidden) return "A";
    if (memory_predefined) return "P";
    if (memory_hidden) return "H";
    return "B";
  }
};

enum class Mode { train, eval };

struct MemoryBanks {
  MemoryBank predefined;
  MemoryBank hidden;
};

/// Learnable tensors plus the two memory banks.
struct ModelState {
  NamedTensors params;
  MemoryBanks banks;
};

/// Tensors for one date, prepared for the model.
struct ModelInput {
  Tensor features;                  // [N_s × 360], already preprocessed
  Tensor market_caps;               // [N_s]
  std::vector<std::uint8_t> links;  // [N_s × N_c] predefined membership
  std::size_t num_concepts = 0;

  std::size_t num_stocks() const { return features.rows(); }
};

inline ModelInput make_input(const DateSlice& slice, const ConceptGraph& graph, std::size_t date_index,
                             const ModelConfig& config) {
  ModelInput in;
  in.features = config.normalize_features ? normalize_features_per_date(slice.features) : slice.features;
  in.market_caps = slice.market_caps;
  in.num_concepts = graph.num_concepts();
  in.links = link_mask(graph, date_index, slice.num_stocks());
  return in;
}

/// Every tape value of one forward pass.
struct ForwardGraph {
  Var h1, h2, h3;
  Var hhat1, hhat2, hhat3;
  Var q1, q2;
  Var y1, y2, y3;
  Var predictions;  // [N_s]
  PredefinedInit predefined_init;
  CorrectedConcepts predefined;
  LocalAggregation local1, local2;
  Var hidden_beta;
  Var hidden_embeddings;
  HiddenAssignment hidden;
  std::optional<RetrievalState> retrieval1, retrieval2;
};

/// Plain values of a forward pass. q1/q2 equal ĥ1/ĥ2 for a stage whose
/// memory is disabled.
struct ForwardTrace {
  Tensor h1, h2, h3;
  Tensor hhat1, hhat2, hhat3;
  Tensor q1, q2;
  Tensor y1, y2, y3;
  Tensor predictions;
};

inline std::vector<std::string> linear_param_names() {
  return {"predefined.correct", "predefined.local", "hidden.correct", "hidden.local", "individual",
          "regressor.forecast"};
}

/// Fresh parameters and banks. Every weight is uniform(−1/√L, 1/√L).
inline ModelState init_model(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  ModelState state;
  init_encoder(state.params, config.hidden, kFieldsPerDay, rng);
  const std::size_t L = config.hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(L));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto draw = [&](Shape s) {
    Tensor t(std::move(s));
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  for (const auto& name : linear_param_names()) {
    state.params[name + ".w"] = draw(Shape{L, L});
    state.params[name + ".b"] = draw(Shape{L});
  }
  state.params["regressor.output.w"] = draw(Shape{L, 1});
  state.params["regressor.output.b"] = draw(Shape{1});
  const std::uint64_t s1 = rng(), s2 = rng();
  state.banks.predefined = init_bank(config.slots, L, s1, Stage::predefined);
  state.banks.hidden = init_bank(config.slots, L, s2, Stage::hidden);
  return state;
}

inline NamedVars bind_parameters(Tape& tape, const NamedTensors& params, bool trainable) {
  NamedVars vars;
  for (const auto& [name, value] : params) vars.emplace(name, trainable ? tape.parameter(name, value) : tape.constant(value));
  return vars;
}

inline LinearMap linear_map(const NamedVars& vars, const std::string& name) {
  return {vars.at(name + ".w"), vars.at(name + ".b")};
}

/// Builds the doubly residual pass on `tape`:
///   h1 = GRU(x); ĥ1 from predefined concepts; q1 = memory(ĥ1) or ĥ1
///   h2 = h1 − q1; ĥ2 from hidden concepts; q2 likewise; h3 = h2 − q2
///   ĥ3 = individual(h3); y_θ = LeakyReLU(W_f ĥθ + b_f); p̂ = W_p(y1+y2+y3) + b_p
/// No memory writes happen here.
inline ForwardGraph forward_graph(Tape& tape, const NamedVars& vars, const ModelInput& in, Var bank_predefined,
                                  Var bank_hidden, const ModelConfig& config) {
  const std::size_t ns = in.num_stocks(), nc = in.num_concepts;
  if (ns == 0) throw ContractError("forward: empty cross-section");
  if (nc == 0) throw ContractError("forward: the model needs at least one concept");
  if (config.concept_capacity != 0 && nc > config.concept_capacity)
    throw ContractError("forward: " + std::to_string(nc) + " concepts exceed capacity " +
                        std::to_string(config.concept_capacity));
  const double slope = config.leaky_slope;
  ForwardGraph g;

  std::vector<GruLayer> layers;
  for (std::size_t l = 0; l < kEncoderLayers; ++l) layers.push_back(encoder_layer(vars, l));
  g.h1 = encode_panel(tape, in.features, layers);

  // Predefined concepts.
  g.predefined_init = init_predefined(g.h1, in.links, in.market_caps, nc);
  g.predefined = correct_predefined(g.h1, g.predefined_init.embeddings, linear_map(vars, "predefined.correct"), slope);
  g.local1 = local_aggregate(g.h1, g.predefined.embeddings, predefined_link_sets(in.links, ns, nc),
                             linear_map(vars, "predefined.local"), slope);
  g.hhat1 = g.local1.features;
  if (config.memory_predefined) {
    g.retrieval1 = global_aggregate(g.hhat1, bank_predefined);
    g.q1 = g.retrieval1->refined;
  } else {
    g.q1 = g.hhat1;
  }
  g.h2 = sub(g.h1, g.q1);

  // Hidden concepts, initialized from the corrected predefined embeddings.
  g.hidden_beta = cosine_matrix(g.h2, g.predefined.embeddings);
  if (!g.hidden_beta.value().all_finite()) throw NumericError("forward: non-finite stock-concept similarities");
  g.hidden = assign_hidden(g.hidden_beta.value(), in.links);
  g.hidden_embeddings = hidden_embeddings(g.h2, g.hidden_beta, g.hidden.members, linear_map(vars, "hidden.correct"), slope);
  g.local2 = local_aggregate(g.h2, g.hidden_embeddings, g.hidden.links, linear_map(vars, "hidden.local"), slope);
  g.hhat2 = g.local2.features;
  if (config.memory_hidden) {
    g.retrieval2 = global_aggregate(g.hhat2, bank_hidden);
    g.q2 = g.retrieval2->refined;
  } else {
    g.q2 = g.hhat2;
  }
  g.h3 = sub(g.h2, g.q2);

  g.hhat3 = individual_features(g.h3, linear_map(vars, "individual"), slope);

  const LinearMap forecast = linear_map(vars, "regressor.forecast");
  g.y1 = leaky_relu(linear(g.hhat1, forecast.w, forecast.b), slope);
  g.y2 = leaky_relu(linear(g.hhat2, forecast.w, forecast.b), slope);
  g.y3 = leaky_relu(linear(g.hhat3, forecast.w, forecast.b), slope);
  Var y = add(add(g.y1, g.y2), g.y3);
  g.predictions = reshape(linear(y, vars.at("regressor.output.w"), vars.at("regressor.output.b")), Shape{ns});
  return g;
}

inline ForwardTrace trace_values(const ForwardGraph& g) {
  return ForwardTrace{g.h1.value(), g.h2.value(), g.h3.value(), g.hhat1.value(), g.hhat2.value(),
                      g.hhat3.value(), g.q1.value(), g.q2.value(), g.y1.value(), g.y2.value(),
                      g.y3.value(), g.predictions.value()};
}

/// Applies the memorization rule for every enabled bank, using the
/// retrieval computed in `g`.
inline void write_memories(const ForwardGraph& g, MemoryBanks& banks) {
  if (g.retrieval1) memorize(banks.predefined, g.hhat1.value(), g.retrieval1->match_probs.value());
  if (g.retrieval2) memorize(banks.hidden, g.hhat2.value(), g.retrieval2->match_probs.value());
}

/// Forward pass for one date. In train mode the enabled banks absorb the
/// date's queries after retrieval; eval mode leaves them untouched.
inline ForwardTrace forward(const ModelInput& in, ModelState& state, const ModelConfig& config, Mode mode) {
  Tape tape;
  NamedVars vars = bind_parameters(tape, state.params, false);
  Var m1 = tape.constant(state.banks.predefined.items);
  Var m2 = tape.constant(state.banks.hidden.items);
  ForwardGraph g = forward_graph(tape, vars, in, m1, m2, config);
  if (mode == Mode::train) write_memories(g, state.banks);
  return trace_values(g);
}

/// Eval-mode predictions [N_s]. The state is not modified.
inline Tensor predict(const ModelInput& in, const ModelState& state, const ModelConfig& config) {
  Tape tape;
  NamedVars vars = bind_parameters(tape, state.params, false);
  Var m1 = tape.constant(state.banks.predefined.items);
  Var m2 = tape.constant(state.banks.hidden.items);
  return forward_graph(tape, vars, in, m1, m2, config).predictions.value();
}

/// Σ_i (p̂_i − p_i)² / N_s on plain values.
inline double mse_value(const Tensor& predictions, const Tensor& labels) {
  if (predictions.size() != labels.size())
    throw DimensionError("mse_loss: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
  return s / static_cast<double>(labels.size());
}

}  // namespace mtmd
