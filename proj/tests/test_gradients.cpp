#include <gtest/gtest.h>

#include "gradient_suite.hpp"

using namespace mtmd;
using namespace mtmd::test;

namespace {

constexpr double kTolerance = 1e-4;

class GradientCheck : public ::testing::TestWithParam<GradSuite> {};

}  // namespace

// 100 random instances per op; 20 kink-free instances for the concept
// modules (five ops each).
TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto& [name, run] = GetParam();
  const int instances = std::string(name) == "ConceptModules" ? 20 : 100;
  run(instances, [](const std::string& what, const GradCheckResult& r) {
    EXPECT_LT(r.max_rel_error, kTolerance) << what << ": worst " << r.worst_name << "[" << r.worst_index
                                           << "] analytic " << r.worst_analytic << " numeric " << r.worst_numeric;
  });
}

INSTANTIATE_TEST_SUITE_P(Ops, GradientCheck, ::testing::ValuesIn(gradient_suites()),
                         [](const auto& info) { return std::string(info.param.first); });
