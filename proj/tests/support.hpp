#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mtmd/mtmd.hpp"

namespace mtmd::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

inline std::size_t random_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Random [N_s × N_c] link mask in which every stock has at least one link.
inline std::vector<std::uint8_t> random_links(std::size_t ns, std::size_t nc, std::mt19937_64& rng, double p = 0.4) {
  std::bernoulli_distribution coin(p);
  std::vector<std::uint8_t> m(ns * nc, 0);
  for (std::size_t i = 0; i < ns; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < nc; ++j) any = (m[i * nc + j] = coin(rng) ? 1 : 0) || any;
    if (!any) m[i * nc + random_size(rng, 0, nc - 1)] = 1;
  }
  return m;
}

/// Fresh empty directory under the system temp dir, unique per test name.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mtmd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Small synthetic market for fast harness tests.
inline SyntheticMarket small_market(std::uint64_t seed = 3, std::size_t n_stocks = 6, std::size_t n_concepts = 3,
                                    std::size_t n_dates = 80) {
  SyntheticSpec spec;
  spec.n_stocks = n_stocks;
  spec.n_concepts = n_concepts;
  spec.n_dates = n_dates;
  spec.seed = seed;
  return generate_synthetic(spec);
}

inline TrainConfig small_train_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.model.hidden = 4;
  c.model.slots = 4;
  c.epochs = 2;
  c.patience = 10;
  c.seed = seed;
  c.model.seed = seed;
  c.learning_rate = 1e-3;
  return c;
}

/// Parameters with random values for the small end-to-end instance.
inline ModelState random_state(const ModelConfig& config, std::uint64_t seed) {
  ModelState s = init_model(config);
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : s.params) t = random_tensor(t.shape(), rng, -0.5, 0.5);
  return s;
}

/// Hand-built model input with random features and caps.
inline ModelInput random_input(std::size_t ns, std::size_t nc, std::mt19937_64& rng) {
  ModelInput in;
  in.features = random_tensor(Shape{ns, kFeatureWidth}, rng);
  in.market_caps = random_tensor(Shape{ns}, rng, 0.5, 3.0);
  in.links = random_links(ns, nc, rng);
  in.num_concepts = nc;
  return in;
}

}  // namespace mtmd::test
