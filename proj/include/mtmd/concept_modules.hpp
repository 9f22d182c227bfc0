#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mtmd/errors.hpp"
#include "mtmd/numerics/ops.hpp"

namespace mtmd {

/// Stage-local linear map x·W + b bound to a tape.
struct LinearMap {
  Var w, b;
};

struct PredefinedInit {
  Var embeddings;               // [N_c × L]
  std::vector<bool> empty;      // concepts without any linked stock
};

struct CorrectedConcepts {
  Var embeddings;  // [N_c × L]
  Var weights;     // α̂ [N_s × N_c], each column sums to 1
};

struct LocalAggregation {
  Var features;  // ĥ [N_s × L]
  Var weights;   // γ [N_s × N_c], zero outside each stock's link set
};

struct HiddenAssignment {
  std::vector<std::size_t> best;       // pre-pruning argmax concept per stock
  std::vector<std::uint8_t> members;   // [N_s × N_c] memberships left after pruning
  std::vector<std::uint8_t> links;     // [N_s × N_c] one link per stock for local aggregation
  std::vector<bool> empty;             // hidden concepts without members
};

/// Market-cap weighted mean of the linked stocks' embeddings per concept.
/// `links` is the [N_s × N_c] predefined membership mask. Concepts without
/// links get zero rows and are flagged in `empty`.
inline PredefinedInit init_predefined(Var h1, const std::vector<std::uint8_t>& links, const Tensor& caps,
                                      std::size_t num_concepts) {
  const std::size_t ns = h1.value().rows();
  if (caps.size() != ns) throw DimensionError("init_predefined: " + std::to_string(caps.size()) + " caps for " +
                                              std::to_string(ns) + " stocks");
  if (links.size() != ns * num_concepts) throw DimensionError("init_predefined: link mask size mismatch");
  Tensor alpha(Shape{num_concepts, ns}, 0.0);
  PredefinedInit out;
  out.empty.assign(num_concepts, true);
  for (std::size_t j = 0; j < num_concepts; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      if (!links[i * num_concepts + j]) continue;
      if (!(caps[i] > 0.0)) throw ContractError("init_predefined: market caps must be positive");
      total += caps[i];
    }
    if (total == 0.0) continue;
    out.empty[j] = false;
    for (std::size_t i = 0; i < ns; ++i)
      if (links[i * num_concepts + j]) alpha(j, i) = caps[i] / total;
  }
  out.embeddings = matmul(h1.tape().constant(std::move(alpha)), h1);
  return out;
}

/// Soft-link correction over the fully connected stock/concept graph:
/// α̂ = column softmax of cos(h_i, e_j) over stocks, then
/// e_j ← LeakyReLU(W'(Σ_i α̂_ij h_i) + b').
inline CorrectedConcepts correct_predefined(Var h1, Var e_init, const LinearMap& correction,
                                            double slope = kDefaultLeakySlope) {
  Var beta = cosine_matrix(h1, e_init);
  Var alpha = softmax(beta, 0);
  Var pooled = matmul(transpose(alpha), h1);
  return {leaky_relu(linear(pooled, correction.w, correction.b), slope), alpha};
}

/// Per-stock link sets for local aggregation over predefined concepts; a
/// stock without any predefined link falls back to every concept.
inline std::vector<std::uint8_t> predefined_link_sets(const std::vector<std::uint8_t>& links, std::size_t num_stocks,
                                                      std::size_t num_concepts) {
  std::vector<std::uint8_t> out = links;
  for (std::size_t i = 0; i < num_stocks; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < num_concepts; ++j) any = any || out[i * num_concepts + j];
    if (!any)
      for (std::size_t j = 0; j < num_concepts; ++j) out[i * num_concepts + j] = 1;
  }
  return out;
}

/// Assigns every stock to its most similar hidden concept (ties go to the
/// lowest index), then deletes assignments already present among the
/// predefined links. `beta` holds cos(h2_i, e_j) values [N_s × N_c].
///
/// A stock whose assignment was pruned keeps its pre-pruning argmax concept
/// as its aggregation link so that no link set is empty.
inline HiddenAssignment assign_hidden(const Tensor& beta, const std::vector<std::uint8_t>& predefined) {
  const std::size_t ns = beta.rows(), nc = beta.cols();
  if (nc == 0) throw ContractError("assign_hidden: needs at least one concept");
  if (predefined.size() != ns * nc) throw DimensionError("assign_hidden: link mask size mismatch");
  HiddenAssignment out;
  out.best.resize(ns);
  out.members.assign(ns * nc, 0);
  out.links.assign(ns * nc, 0);
  out.empty.assign(nc, true);
  for (std::size_t i = 0; i < ns; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < nc; ++j)
      if (beta(i, j) > beta(i, best)) best = j;
    out.best[i] = best;
    out.links[i * nc + best] = 1;
    if (!predefined[i * nc + best]) {
      out.members[i * nc + best] = 1;
      out.empty[best] = false;
    }
  }
  return out;
}

/// Value-level convenience: computes β from h2 and the initial hidden
/// embeddings, then assigns.
inline HiddenAssignment assign_hidden(const Tensor& h2, const Tensor& e_init, const std::vector<std::uint8_t>& predefined) {
  Tape scratch;
  Var beta = cosine_matrix(scratch.constant(h2), scratch.constant(e_init));
  return assign_hidden(beta.value(), predefined);
}

/// e_j = LeakyReLU(W'(Σ_{i∈D_j} β_ij h_i) + b'). Empty concepts reduce to
/// LeakyReLU(b').
inline Var hidden_embeddings(Var h2, Var beta, const std::vector<std::uint8_t>& members, const LinearMap& correction,
                             double slope = kDefaultLeakySlope) {
  const Tensor& bv = beta.value();
  if (members.size() != bv.size()) throw DimensionError("hidden_embeddings: membership mask size mismatch");
  Tensor mask(bv.shape(), 0.0);
  for (std::size_t k = 0; k < members.size(); ++k) mask[k] = members[k] ? 1.0 : 0.0;
  Var weights = mul(beta, h2.tape().constant(std::move(mask)));
  Var pooled = matmul(transpose(weights), h2);
  return leaky_relu(linear(pooled, correction.w, correction.b), slope);
}

/// ĥ_i = LeakyReLU(W(Σ_{j∈D_i} γ_ij e_j) + b) with γ the softmax of
/// cos(h_i, e_j) over stock i's link set.
inline LocalAggregation local_aggregate(Var h, Var e, const std::vector<std::uint8_t>& links, const LinearMap& map,
                                        double slope = kDefaultLeakySlope) {
  const std::size_t ns = h.value().rows(), nc = e.value().rows();
  if (links.size() != ns * nc) throw DimensionError("local_aggregate: link mask size mismatch");
  for (std::size_t i = 0; i < ns; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < nc; ++j) any = any || links[i * nc + j];
    if (!any) throw ContractError("local_aggregate: stock " + std::to_string(i) + " has an empty link set");
  }
  Var beta = cosine_matrix(h, e);
  Var gamma = masked_softmax_rows(beta, links);
  Var pooled = matmul(gamma, e);
  return {leaky_relu(linear(pooled, map.w, map.b), slope), gamma};
}

/// ĥ3 = LeakyReLU(W3·h3 + b3)
inline Var individual_features(Var h3, const LinearMap& map, double slope = kDefaultLeakySlope) {
  return leaky_relu(linear(h3, map.w, map.b), slope);
}

}  // namespace mtmd
