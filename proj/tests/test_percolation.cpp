#include <cmath>

#include <gtest/gtest.h>

#include "scrambling/percolation.hpp"

using namespace scrambling;

namespace {

// Survival to generation g of a Galton-Watson process whose generation-to-
// generation law is Binomial(n, p) (n children, each edge kept with p):
// extinction s_{g+1} = (1 - p + p s_g)^n, s_0 = 0.
double exact_survival(int n, double p, int generations) {
  double s = 0.0;
  for (int g = 0; g < generations; ++g) s = std::pow(1.0 - p + p * s, n);
  return 1.0 - s;
}

TreePercolationSpec fixed_tree(int n, double p, int generations) {
  TreePercolationSpec s;
  s.branching = n;
  s.edge_keep_prob = p;
  s.max_generations = generations;
  s.law = OffspringLaw::Fixed;
  return s;
}

}  // namespace

TEST(TreeThreshold, Examples) {
  EXPECT_DOUBLE_EQ(tree_threshold(2.0), 0.5);
  EXPECT_DOUBLE_EQ(tree_threshold(1.0), 1.0);
  EXPECT_NEAR(tree_threshold(2.9365), 0.3405, 1e-4);
  EXPECT_THROW(tree_threshold(0.5), InvalidArgument);
}

TEST(CriticalPi, Examples) {
  const CriticalPi c3 = critical_pi(3, 0.340537);
  EXPECT_EQ(c3.status, CriticalPiStatus::Ok);
  EXPECT_NEAR(c3.value, 0.6455, 1e-4);
  EXPECT_NEAR(critical_pi(2, 0.340537).value, 0.9682, 1e-4);
  // The walker threshold and the tree threshold agree: (n_i p + 1) p_r = 1.
  EXPECT_NEAR(tree_threshold(3 * c3.value + 1.0), 0.340537, 1e-12);
}

TEST(CriticalPi, DegenerateReturnProbabilities) {
  const CriticalPi one = critical_pi(3, 1.0);
  EXPECT_EQ(one.status, CriticalPiStatus::AlwaysScrambles);
  EXPECT_EQ(one.value, 0.0);
  EXPECT_LT(critical_pi(3, 0.999999).value, 1e-5);
  EXPECT_EQ(critical_pi(3, 0.0).status, CriticalPiStatus::NeverReturns);
  EXPECT_EQ(critical_pi(1, 0.2).status, CriticalPiStatus::NoTransitionInRange);
  EXPECT_THROW(critical_pi(0, 0.5), InvalidArgument);
  EXPECT_THROW(critical_pi(3, 1.5), InvalidArgument);
}

TEST(SimulateTree, NoEdgesNoSurvival) {
  const auto r = simulate_tree(fixed_tree(3, 0.0, 50), 1000, 1);
  EXPECT_EQ(r.survival, 0.0);
}

TEST(SimulateTree, SupercriticalMatchesExtinctionEquation) {
  // n = 3, p = 0.5: extinction root sqrt(5) - 2.
  const double expected = 1.0 - (std::sqrt(5.0) - 2.0);
  for (int g : {50, 200}) {
    const auto r = simulate_tree(fixed_tree(3, 0.5, g), 10000, 2);
    EXPECT_NEAR(r.survival, expected, 4.0 * r.stderr_) << "generations=" << g;
  }
  EXPECT_NEAR(exact_survival(3, 0.5, 200), expected, 1e-12);
}

TEST(SimulateTree, SubcriticalDecaysExponentially) {
  std::vector<double> s;
  for (int g : {10, 20, 40}) {
    const auto r = simulate_tree(fixed_tree(3, 0.2, g), 200000, 3);
    const double exact = exact_survival(3, 0.2, g);
    EXPECT_NEAR(r.survival, exact, 4.0 * std::sqrt(exact * (1 - exact) / 200000) + 1e-6) << "g=" << g;
    s.push_back(r.survival);
  }
  EXPECT_LT(s[1], s[0] * 0.02);
  EXPECT_LT(s[2], 1e-4);
}

TEST(SimulateTree, MixedLawMatchesExactRecursion) {
  // n = 2.5: 2 children plus a third with probability 1/2, edges kept with p = 0.6.
  // Kept children per vertex: Binomial(2, p) + Bernoulli(p/2).
  TreePercolationSpec s;
  s.branching = 2.5;
  s.edge_keep_prob = 0.6;
  s.max_generations = 30;
  s.law = OffspringLaw::Mixed;
  double ext = 0.0;
  for (int g = 0; g < 30; ++g) {
    const double a = 1 - 0.6 + 0.6 * ext;
    ext = a * a * (1 - 0.3 + 0.3 * ext);
  }
  const auto r = simulate_tree(s, 20000, 4);
  EXPECT_NEAR(r.survival, 1.0 - ext, 4.0 * r.stderr_);
}

TEST(SimulateTree, WalkerLawMatchesExactRecursion) {
  // Children 1 + Binomial(3, p_i), each kept with p_r.
  const double pi = 0.7, pr = 0.340537;
  const auto spec = TreePercolationSpec::walker(3, pi, pr, 40);
  EXPECT_NEAR(spec.branching, 3.1, 1e-12);
  double ext = 0.0;
  for (int g = 0; g < 40; ++g) {
    const double keep = 1 - pr + pr * ext;
    // E[keep^(1 + B)], B ~ Binomial(3, p_i)
    ext = keep * std::pow(1 - pi + pi * keep, 3);
  }
  const auto r = simulate_tree(spec, 20000, 5);
  EXPECT_NEAR(r.survival, 1.0 - ext, 4.0 * r.stderr_ + 1e-3);
}

TEST(SimulateTree, MonotoneInEdgeProbability) {
  double prev = -1.0;
  for (double p : {0.1, 0.25, 0.3, 0.33, 0.34, 0.36, 0.4, 0.6, 0.9}) {
    const auto r = simulate_tree(fixed_tree(3, p, 60), 4000, 6);
    EXPECT_GE(r.survival, prev) << "p=" << p;
    prev = r.survival;
  }
}

TEST(SimulateTree, ThresholdCrossing) {
  const int n = 3;
  const double pc = tree_threshold(n);
  const auto below = simulate_tree(fixed_tree(n, 0.9 * pc, 200), 10000, 7);
  const auto above = simulate_tree(fixed_tree(n, 1.1 * pc, 200), 10000, 7);
  EXPECT_LT(below.survival, 0.005);
  EXPECT_GT(above.survival, 0.1);
  EXPECT_NEAR(above.survival, exact_survival(n, 1.1 * pc, 200), 4.0 * above.stderr_);
}

TEST(SimulateTree, WalkerThresholdAtCriticalPi) {
  const double pr = 0.340537;
  const double pc = critical_pi(3, pr).value;
  const auto below = simulate_tree(TreePercolationSpec::walker(3, pc - 0.1, pr, 200), 10000, 8);
  const auto above = simulate_tree(TreePercolationSpec::walker(3, pc + 0.1, pr, 200), 10000, 8);
  EXPECT_LT(below.survival, 0.005);
  EXPECT_GT(above.survival, 0.05);
}

TEST(SimulateTree, CapFlagsEarlySurvival) {
  TreePercolationSpec s = fixed_tree(3, 0.9, 500);
  s.cap = 1000;
  const auto r = simulate_tree(s, 2000, 9);
  EXPECT_GT(r.capped, 0u);
  EXPECT_LE(r.capped, static_cast<std::uint64_t>(r.survival * r.samples + 0.5));
}

TEST(SimulateTree, Deterministic) {
  const auto a = simulate_tree(fixed_tree(3, 0.4, 50), 3000, 10);
  const auto b = simulate_tree(fixed_tree(3, 0.4, 50), 3000, 10);
  EXPECT_EQ(a.survival, b.survival);
}

TEST(TreePercolationSpec, Invariants) {
  EXPECT_THROW(fixed_tree(3, 1.5, 50).validate(), InvalidArgument);
  EXPECT_THROW(fixed_tree(3, 0.5, 5).validate(), InvalidArgument);
  TreePercolationSpec s = fixed_tree(3, 0.5, 50);
  s.branching = 0.5;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = fixed_tree(3, 0.5, 50);
  s.branching = 2.5;
  EXPECT_THROW(s.validate(), InvalidArgument);
}
