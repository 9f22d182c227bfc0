#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mtmd/data/panel.hpp"
#include "mtmd/numerics/gradcheck.hpp"
#include "mtmd/numerics/ops.hpp"

namespace mtmd {

inline constexpr std::size_t kEncoderLayers = 2;

/// One recurrent layer bound to a tape. Weights are [in × 3L] and [L × 3L]
/// with gate blocks (update, reset, candidate); biases are [3L].
struct GruLayer {
  Var w_ih, w_hh, b_ih, b_hh;
};

inline std::string encoder_param_name(std::size_t layer, const char* what) {
  return "encoder.l" + std::to_string(layer) + "." + what;
}

/// Adds uniform(−1/√L, 1/√L) recurrent weights for both layers to `params`.
inline void init_encoder(NamedTensors& params, std::size_t hidden, std::size_t input_width, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto draw = [&](Shape s) {
    Tensor t(std::move(s));
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  for (std::size_t l = 0; l < kEncoderLayers; ++l) {
    const std::size_t in = l == 0 ? input_width : hidden;
    params[encoder_param_name(l, "w_ih")] = draw(Shape{in, 3 * hidden});
    params[encoder_param_name(l, "w_hh")] = draw(Shape{hidden, 3 * hidden});
    params[encoder_param_name(l, "b_ih")] = draw(Shape{3 * hidden});
    params[encoder_param_name(l, "b_hh")] = draw(Shape{3 * hidden});
  }
}

inline GruLayer encoder_layer(const NamedVars& vars, std::size_t layer) {
  return GruLayer{vars.at(encoder_param_name(layer, "w_ih")), vars.at(encoder_param_name(layer, "w_hh")),
                  vars.at(encoder_param_name(layer, "b_ih")), vars.at(encoder_param_name(layer, "b_hh"))};
}

/// h' = GRU(x, h) for a batch of rows: x [N×d_in], h [N×L].
inline Var gru_cell(Var x, Var h, const GruLayer& p) {
  const std::size_t width = h.value().cols();
  if (p.w_hh.value().rank() != 2 || p.w_hh.value().rows() != width || p.w_hh.value().cols() != 3 * width)
    throw DimensionError("gru_cell: hidden weight " + shape_str(p.w_hh.value().shape()) + " for hidden state " +
                         shape_str(h.value().shape()));
  if (x.value().cols() != p.w_ih.value().rows())
    throw DimensionError("gru_cell: input " + shape_str(x.value().shape()) + " for input weight " +
                         shape_str(p.w_ih.value().shape()));
  return gru_update(linear(x, p.w_ih, p.b_ih), linear(h, p.w_hh, p.b_hh), h);
}

/// Runs the two stacked layers over each row's 60-step sequence (6 fields
/// per step, oldest first) and returns the last hidden state of the top
/// layer, [N_s × L]. Rows never interact.
inline Var encode_panel(Tape& tape, const Tensor& features, const std::vector<GruLayer>& layers) {
  features.require_rank(2);
  if (features.cols() != kFeatureWidth)
    throw DimensionError("encode_panel: feature width " + std::to_string(features.cols()) + ", expected " +
                         std::to_string(kFeatureWidth));
  if (layers.empty()) throw ContractError("encode_panel: no recurrent layers");
  const std::size_t n = features.rows();
  const std::size_t hidden = layers.front().w_hh.value().rows();

  std::vector<Var> states(layers.size());
  for (auto& s : states) s = tape.constant(Tensor(Shape{n, hidden}, 0.0));
  for (std::size_t step = 0; step < kLookbackDays; ++step) {
    Tensor x(Shape{n, kFieldsPerDay});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < kFieldsPerDay; ++k) x(i, k) = features(i, step * kFieldsPerDay + k);
    Var input = tape.constant(std::move(x));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      states[l] = gru_cell(input, states[l], layers[l]);
      input = states[l];
    }
  }
  return states.back();
}

}  // namespace mtmd
