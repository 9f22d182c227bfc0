#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mtmd/errors.hpp"
#include "mtmd/numerics/ops.hpp"

namespace mtmd {

enum class Stage { predefined = 1, hidden = 2 };

inline std::string memory_tensor_name(Stage s) {
  return s == Stage::predefined ? "memory.predefined" : "memory.hidden";
}

/// K stored patterns of width L. Rows stay unit-norm: init and every
/// write end with an L2 normalization.
struct MemoryBank {
  Tensor items;  // [K × L]
  Stage stage = Stage::predefined;

  std::size_t slots() const { return items.rows(); }
  std::size_t width() const { return items.cols(); }
};

struct RetrievalState {
  Var correlations;  // b [N_s × K]
  Var match_probs;   // v [N_s × K], each column sums to 1 over stocks
  Var refined;       // q [N_s × L]
};

/// Standard-normal rows, L2-normalized.
inline MemoryBank init_bank(std::size_t slots, std::size_t width, std::uint64_t seed, Stage stage = Stage::predefined) {
  if (slots < 1 || width < 1) throw ContractError("init_bank: K and L must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor items(Shape{slots, width});
  for (double& v : items.data()) v = gauss(rng);
  return MemoryBank{l2_normalize_rows_values(items), stage};
}

/// Global aggregation. With `bank` the tape leaf holding M:
///   b_i = M ĥ_i,  v_ik = softmax over stocks i of b_ik,  q_i = ĥ_i ⊙ (v_iᵀ M)
inline RetrievalState global_aggregate(Var queries, Var bank) {
  const Tensor& qv = queries.value();
  const Tensor& mv = bank.value();
  qv.require_rank(2);
  mv.require_rank(2);
  if (qv.cols() != mv.cols())
    throw DimensionError("global_aggregate: queries " + shape_str(qv.shape()) + " vs memory " + shape_str(mv.shape()));
  Var b = matmul(queries, transpose(bank));
  Var v = softmax(b, 0);
  Var read = matmul(v, bank);
  return {b, v, mul(queries, read)};
}

/// Scores s_i used to rank stocks for writing.
inline std::vector<double> memorize_scores(const Tensor& match_probs) {
  std::vector<double> out(match_probs.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = match_probs.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    for (double p : row) out[i] += mx > 0.0 ? p / mx : 0.0;
  }
  return out;
}

/// Memorization with the single pre-write retrieval `match_probs` (v):
/// v̂_i = v_i / max_k v_ik, s_i = Σ_k v̂_ik, stocks ranked by s descending
/// (ties to the lower index), and row k absorbs the k-th ranked query:
/// M_k ← L2(M_k + s_{i_k} ĥ_{i_k}). Rows past min(K, N_s) are untouched, and
/// an update that lands on the zero vector keeps the previous row.
inline void memorize(MemoryBank& bank, const Tensor& queries, const Tensor& match_probs, double eps = kNormEps) {
  queries.require_rank(2);
  match_probs.require_rank(2);
  const std::size_t ns = queries.rows(), slots = bank.slots(), width = bank.width();
  if (queries.cols() != width) throw DimensionError("memorize: query width does not match memory width");
  if (match_probs.rows() != ns || match_probs.cols() != slots)
    throw DimensionError("memorize: match probabilities " + shape_str(match_probs.shape()) + " for " +
                         std::to_string(ns) + " stocks and " + std::to_string(slots) + " items");
  if (ns == 0) return;

  const std::vector<double> score = memorize_scores(match_probs);
  std::vector<std::size_t> order(ns);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  const std::size_t writes = std::min(slots, ns);
  std::vector<double> updated(width);
  for (std::size_t k = 0; k < writes; ++k) {
    const std::size_t i = order[k];
    auto row = bank.items.row(k);
    const auto q = queries.row(i);
    for (std::size_t c = 0; c < width; ++c) updated[c] = row[c] + score[i] * q[c];
    const double n = kernels::norm(updated);
    if (n <= eps) continue;
    for (std::size_t c = 0; c < width; ++c) row[c] = updated[c] / n;
  }
}

}  // namespace mtmd
