#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "scrambling/spectral.hpp"

using namespace scrambling;

namespace {

// Closed form of the simple-cubic Watson integral.
double watson_integral() {
  const double pi = std::numbers::pi;
  return std::sqrt(6.0) / (32.0 * pi * pi * pi) * std::tgamma(1.0 / 24) * std::tgamma(5.0 / 24) *
         std::tgamma(7.0 / 24) * std::tgamma(11.0 / 24);
}

double slope_along_axis(const LatticeSpec& spec, const std::vector<long>& xs) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (long x : xs) {
    Site s(spec.dimension, 0);
    s[0] = x;
    const double a = std::log(double(x)), b = std::log(return_probability_to_site(spec, s).value);
    sx += a, sy += b, sxx += a * a, sxy += a * b;
  }
  const double n = static_cast<double>(xs.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST(GreenSum, WatsonIntegral) {
  const GreenSum g = green_sum_integral(LatticeSpec::nearest_neighbor(3));
  ASSERT_FALSE(g.divergent);
  EXPECT_NEAR(g.value, 1.516386, 1e-4);
  EXPECT_NEAR(g.value, watson_integral(), 1e-10);
  EXPECT_LE(g.error, 1e-8);
}

TEST(GreenSum, DivergentInLowDimensions) {
  for (int D : {1, 2}) {
    const GreenSum g = green_sum_integral(LatticeSpec::nearest_neighbor(D));
    EXPECT_TRUE(g.divergent) << "D=" << D;
    EXPECT_TRUE(std::isinf(g.value));
    EXPECT_LE(g.shell_exponent, 0.15);
  }
}

TEST(ReturnProbability, Polya) {
  const auto r = return_probability(LatticeSpec::nearest_neighbor(3));
  EXPECT_FALSE(r.recurrent);
  EXPECT_NEAR(r.p_return, 0.340537, 1e-4);
  EXPECT_NEAR(r.p_return, 1.0 - 1.0 / r.green_sum, 1e-15);
}

TEST(ReturnProbability, RecurrentIsExactlyOne) {
  for (int D : {1, 2}) {
    const auto r = return_probability(LatticeSpec::nearest_neighbor(D));
    EXPECT_TRUE(r.recurrent);
    EXPECT_EQ(r.p_return, 1.0);
  }
}

TEST(ReturnProbability, LevyTransientBelowOne) {
  const auto r = return_probability(LatticeSpec::long_range(1, 0.5));
  EXPECT_FALSE(r.recurrent);
  EXPECT_GT(r.p_return, 0.0);
  EXPECT_LT(r.p_return, 1.0);
}

TEST(ReturnProbability, DecreasesWithDimension) {
  const double p3 = return_probability(LatticeSpec::nearest_neighbor(3)).p_return;
  const double p4 = return_probability(LatticeSpec::nearest_neighbor(4)).p_return;
  const double p5 = return_probability(LatticeSpec::nearest_neighbor(5)).p_return;
  EXPECT_GT(p3, p4);
  EXPECT_GT(p4, p5);
  EXPECT_GT(p5, 0.0);
}

TEST(ReturnProbability, RefinementWithinTenTimesError) {
  for (const auto& spec : {LatticeSpec::nearest_neighbor(3), LatticeSpec::long_range(1, 0.5),
                           LatticeSpec::long_range(2, 1.0)}) {
    QuadratureSpec coarse;
    QuadratureSpec fine = coarse;
    fine.nodes_per_axis *= 2;
    const auto a = return_probability(spec, coarse);
    const auto b = return_probability(spec, fine);
    const double err = std::max(a.quadrature_error, 1e-14);
    EXPECT_LT(std::abs(a.p_return - b.p_return), 10.0 * err)
        << "D=" << spec.dimension << " alpha=" << spec.alpha << " err=" << a.quadrature_error;
  }
}

TEST(ReturnProbability, TensorSchemeAgreesLoosely) {
  QuadratureSpec q;
  q.scheme = QuadratureScheme::TensorGaussLegendre;
  q.nodes_per_axis = 32;
  const auto r = return_probability(LatticeSpec::nearest_neighbor(3), q);
  // The 1/k^2 singularity limits the tensor rule to a few digits.
  EXPECT_NEAR(r.p_return, 0.340537, 1e-2);
}

TEST(QuadratureSpec, Invariants) {
  QuadratureSpec q;
  q.nodes_per_axis = 4;
  EXPECT_THROW(q.validate(), InvalidArgument);
  q = {};
  q.refinement_levels = 1;
  EXPECT_THROW(q.validate(), InvalidArgument);
}

TEST(ReturnToSite, AdjacentSiteEqualsReturnProbability) {
  // Leaving the origin lands on a neighbour, so p(e1) = p_return.
  const auto r = return_probability_to_site(LatticeSpec::nearest_neighbor(3), {1, 0, 0});
  EXPECT_NEAR(r.value, 0.340537, 1e-4);
  const auto p = return_probability(LatticeSpec::nearest_neighbor(3));
  EXPECT_NEAR(r.value, p.p_return, 10.0 * (r.error + p.quadrature_error) + 1e-12);
}

TEST(ReturnToSite, InverseDistanceInThreeD) {
  EXPECT_NEAR(slope_along_axis(LatticeSpec::nearest_neighbor(3), {5, 7, 10, 14, 20}), -1.0, 0.1);
}

TEST(ReturnToSite, MonotoneAlongAxis) {
  const auto spec = LatticeSpec::nearest_neighbor(3);
  double prev = 1.0;
  for (long x : {1L, 2L, 5L, 10L, 20L}) {
    const double v = return_probability_to_site(spec, {x, 0, 0}).value;
    EXPECT_LT(v, prev);
    EXPECT_GT(v, 0.0);
    prev = v;
  }
}

TEST(ReturnToSite, LevyTransientSlope) {
  EXPECT_NEAR(slope_along_axis(LatticeSpec::long_range(1, 0.5), {5, 7, 10, 14, 20}), -0.5, 0.1);
}

TEST(ReturnToSite, RecurrentFlag) {
  const auto r = return_probability_to_site(LatticeSpec::nearest_neighbor(2), {3, 0});
  EXPECT_TRUE(r.recurrent);
  EXPECT_EQ(r.value, 1.0);
}

TEST(ReturnToSite, RejectsOriginAndDimensionMismatch) {
  EXPECT_THROW(return_probability_to_site(LatticeSpec::nearest_neighbor(3), {0, 0, 0}), InvalidArgument);
  EXPECT_THROW(return_probability_to_site(LatticeSpec::nearest_neighbor(3), {1, 0}), InvalidArgument);
}

TEST(RecurrenceClassification, Examples) {
  EXPECT_EQ(recurrence_classification(3.0), Recurrence::Transient);
  EXPECT_EQ(recurrence_classification(1.0, 0.5), Recurrence::Transient);
  EXPECT_EQ(recurrence_classification(2.0, 3.0), Recurrence::Recurrent);
  EXPECT_EQ(recurrence_classification(2.0), Recurrence::Recurrent);
  EXPECT_EQ(recurrence_classification(1.5, 1.5), Recurrence::Recurrent);
  EXPECT_EQ(recurrence_classification(2.5, 3.0), Recurrence::Transient);
  EXPECT_EQ(recurrence_classification(0.7, 0.5), Recurrence::Transient);
  EXPECT_THROW(recurrence_classification(0.0), InvalidArgument);
  EXPECT_THROW(recurrence_classification(1.0, 0.0), InvalidArgument);
}

TEST(RecurrenceClassification, AgreesWithDivergenceVerdict) {
  for (int D : {1, 2, 3}) {
    for (double alpha : {0.5, 1.0, 1.5, 2.0, 3.0}) {
      const GreenSum g = green_sum_integral(LatticeSpec::long_range(D, alpha));
      const bool recurrent = recurrence_classification(D, alpha) == Recurrence::Recurrent;
      EXPECT_EQ(g.divergent, recurrent) << "D=" << D << " alpha=" << alpha << " s=" << g.shell_exponent;
    }
  }
}

TEST(PhaseTable, RowsAndClassification) {
  const auto rows = phase_table({1, 3}, {std::nullopt, 0.5});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].classification, Recurrence::Recurrent);   // D=1 NN
  EXPECT_EQ(rows[1].classification, Recurrence::Transient);   // D=1 alpha=0.5
  EXPECT_EQ(rows[2].classification, Recurrence::Transient);   // D=3 NN
  EXPECT_NEAR(rows[2].result.p_return, 0.340537, 1e-4);
  EXPECT_EQ(rows[3].classification, Recurrence::Transient);
}
