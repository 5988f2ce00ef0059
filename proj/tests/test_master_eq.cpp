#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <gtest/gtest.h>

#include "scrambling/master_eq.hpp"

using namespace scrambling;

TEST(HeightBox, ChainGeometry) {
  const HeightBox ring = HeightBox::chain(8);
  EXPECT_EQ(ring.volume(), 8);
  EXPECT_EQ(ring.bonds().size(), 8u);
  EXPECT_EQ(ring.origin(), 2);
  EXPECT_EQ(ring.plaquette_mask(), 0b00111100u);
  const HeightBox open = HeightBox::chain(8, BoxBoundary::Open);
  EXPECT_EQ(open.bonds().size(), 7u);
  EXPECT_TRUE(open.sink_sites().empty());
  const HeightBox abs = HeightBox::chain(8, BoxBoundary::Absorbing);
  EXPECT_EQ(abs.sink_sites(), (std::vector<int>{0, 7}));
}

TEST(HeightBox, SquareGeometry) {
  const HeightBox sq = HeightBox::cube(2, 4);
  EXPECT_EQ(sq.volume(), 16);
  EXPECT_EQ(sq.bonds().size(), 32u);
  // Corner (1, 1): sites 5, 6, 9, 10.
  EXPECT_EQ(sq.plaquette_mask(), (1u << 5) | (1u << 6) | (1u << 9) | (1u << 10));
  const HeightBox two = HeightBox{{2, 4}, BoxBoundary::Periodic};
  // Extent 2 has no separate wrap bond.
  EXPECT_EQ(two.bonds().size(), 4u + 8u);
  const HeightBox abs = HeightBox::cube(2, 3, BoxBoundary::Absorbing);
  EXPECT_EQ(abs.sink_sites().size(), 12u);
}

TEST(HeightBox, Invariants) {
  EXPECT_THROW(HeightBox::chain(3).validate(), InvalidArgument);
  EXPECT_THROW(HeightBox::cube(3, 5).validate(), InvalidArgument);
  EXPECT_THROW((HeightBox{{1, 8}, BoxBoundary::Open}).validate(), InvalidArgument);
  EXPECT_NO_THROW(HeightBox::cube(3, 4).validate());
}

TEST(RateTable, EventsAndRates) {
  const RateTable t = build_rate_table(HeightBox::chain(6, BoxBoundary::Absorbing), 0.5, 0.25);
  int bonds = 0, sinks = 0, plaq = 0;
  for (const auto& e : t.events) {
    switch (e.kind) {
      case EventKind::Bond:
        ++bonds;
        EXPECT_EQ(e.rate, 2.0);
        break;
      case EventKind::Sink:
        ++sinks;
        EXPECT_EQ(e.rate, 2.0);
        break;
      case EventKind::Plaquette:
        ++plaq;
        EXPECT_EQ(e.rate, 1.0);
        break;
    }
  }
  EXPECT_EQ(bonds, 5);
  EXPECT_EQ(sinks, 2);
  EXPECT_EQ(plaq, 1);
  EXPECT_EQ(build_rate_table(HeightBox::chain(6), 1.0, 0.0).events.size(), 6u);
  EXPECT_THROW(build_rate_table(HeightBox::chain(6), -1.0, 0.0), InvalidArgument);
}

TEST(HeightEvent, EnabledOnOddOverlap) {
  const HeightEvent bond{0b011, 1.0, EventKind::Bond};
  EXPECT_TRUE(bond.enabled(0b001));
  EXPECT_TRUE(bond.enabled(0b010));
  EXPECT_FALSE(bond.enabled(0b011));
  EXPECT_FALSE(bond.enabled(0b100));
  const HeightEvent plaq{0b1111, 1.0, EventKind::Plaquette};
  EXPECT_TRUE(plaq.enabled(0b0001));
  EXPECT_TRUE(plaq.enabled(0b0111));
  EXPECT_FALSE(plaq.enabled(0b0011));
  EXPECT_EQ(enabled_events(0, build_rate_table(HeightBox::chain(6), 1.0, 1.0)).size(), 0u);
}

TEST(GeneratorMatrix, ColumnsSumToZero) {
  const RateTable t = build_rate_table(HeightBox::chain(6, BoxBoundary::Absorbing), 1.0, 0.7);
  const auto q = generator_matrix(t);
  const std::size_t n = 64;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += q[i * n + j];
      if (i != j) {
        EXPECT_GE(q[i * n + j], 0.0);
      }
    }
    EXPECT_NEAR(s, 0.0, 1e-12);
  }
}

TEST(ExactDistribution, PointMassAtZero) {
  const RateTable t = build_rate_table(HeightBox::chain(8), 1.0, 1.0);
  const auto p = exact_distribution(t, single_site(3), 0.0);
  EXPECT_EQ(p[single_site(3)], 1.0);
  EXPECT_EQ(mean_size_exact(p), 1.0);
}

TEST(ExactDistribution, SingleParticleOnRing) {
  const double V = 0.7;
  const RateTable t = build_rate_table(HeightBox::chain(8), V, 0.0);
  const std::vector<double> times{0.1, 0.5, 2.0};
  const auto dist = exact_distribution(t, single_site(0), times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (int x = 0; x < 8; ++x) {
      double expected = 0.0;
      for (int m = 0; m < 8; ++m) {
        const double k = 2.0 * std::numbers::pi * m / 8.0;
        expected += std::exp(-8.0 * V * times[i] * (1.0 - std::cos(k))) * std::cos(k * x) / 8.0;
      }
      EXPECT_NEAR(dist[i][single_site(x)], expected, 1e-12) << "t=" << times[i] << " x=" << x;
    }
    EXPECT_NEAR(mean_size_exact(dist[i]), 1.0, 1e-12);
  }
}

TEST(ExactDistribution, PlaquetteOnlyTwoStateChain) {
  const double J = 0.3, time = 1.7;
  const HeightBox box = HeightBox::chain(6, BoxBoundary::Open);
  const RateTable t = build_rate_table(box, 0.0, J);
  const auto p = exact_distribution(t, single_site(box.origin()), time);
  const double flipped = 0.5 * (1.0 - std::exp(-8.0 * J * time));
  EXPECT_NEAR(p[single_site(box.origin()) ^ box.plaquette_mask()], flipped, 1e-12);
  EXPECT_NEAR(mean_size_exact(p), 1.0 + 2.0 * flipped, 1e-12);
}

TEST(ExactDistribution, InteractionIncreasesMeanSize) {
  const HeightBox box = HeightBox::chain(8);
  const auto free = exact_distribution(build_rate_table(box, 1.0, 0.0), single_site(box.origin()), 1.0);
  const auto inter = exact_distribution(build_rate_table(box, 1.0, 0.5), single_site(box.origin()), 1.0);
  EXPECT_NEAR(mean_size_exact(free), 1.0, 1e-12);
  EXPECT_GT(mean_size_exact(inter), 1.0 + 1e-3);
}

TEST(ExactDistribution, MatchesMatrixExponential) {
  const RateTable t = build_rate_table(HeightBox::chain(6, BoxBoundary::Absorbing), 1.0, 0.6);
  const auto q = generator_matrix(t);
  const int n = 64;
  Eigen::MatrixXd Q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Q(i, j) = q[static_cast<std::size_t>(i) * n + j];
  for (double time : {0.3, 1.0, 4.0}) {
    const Eigen::MatrixXd P = (Q * time).exp();
    const auto p = exact_distribution(t, single_site(t.box.origin()), time);
    double tv = 0.0;
    for (int i = 0; i < n; ++i) tv += std::abs(P(i, static_cast<int>(single_site(t.box.origin()))) - p[i]);
    EXPECT_LT(tv, 1e-10) << "t=" << time;
  }
}

TEST(ExactDistribution, ProbabilityConserved) {
  const RateTable t = build_rate_table(HeightBox::cube(2, 3, BoxBoundary::Periodic), 1.0, 1.0);
  const auto dist = exact_distribution(t, single_site(4), std::vector<double>{0.5, 3.0, 10.0});
  for (const auto& p : dist) {
    double s = 0.0;
    for (double x : p) {
      EXPECT_GE(x, -1e-15);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ExactDistribution, RejectsLargeBoxes) {
  const RateTable t = build_rate_table(HeightBox::chain(17), 1.0, 1.0);
  EXPECT_THROW(exact_distribution(t, 1, 1.0), InvalidArgument);
  EXPECT_THROW(gillespie_distribution(t, 1, 1.0, 10, 1), InvalidArgument);
  EXPECT_THROW(generator_matrix(build_rate_table(HeightBox::chain(13), 1.0, 1.0)), InvalidArgument);
}

TEST(Gillespie, MatchesExactDistribution) {
  const RateTable t = build_rate_table(HeightBox::chain(6), 1.0, 1.0);
  const HeightConfig h0 = single_site(t.box.origin());
  const auto mc = gillespie_distribution(t, h0, 1.0, 100000, 23);
  const auto ex = exact_distribution(t, h0, 1.0);
  EXPECT_LT(total_variation(mc, ex), 0.02);
  EXPECT_NEAR(mean_size_exact(mc), mean_size_exact(ex), 0.02);
}

TEST(Gillespie, PlaquetteWaitingTime) {
  const HeightBox box = HeightBox::chain(6, BoxBoundary::Open);
  const RateTable t = build_rate_table(box, 0.0, 0.5);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_stream(24, "test", i);
    const auto tr = gillespie_run(t, single_site(box.origin()), 100.0, rng);
    ASSERT_GE(tr.times.size(), 3u);
    sum += tr.times[1];
  }
  // Mean 1/(4J) = 0.5, standard error 0.5/sqrt(n).
  EXPECT_NEAR(sum / n, 0.5, 4.0 * 0.5 / std::sqrt(double(n)));
}

TEST(Gillespie, ParityAndPlaquetteJumps) {
  const RateTable t = build_rate_table(HeightBox::chain(8), 1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Rng rng = make_stream(25, "test", i);
    const auto tr = gillespie_run(t, single_site(t.box.origin()), 3.0, rng);
    for (std::size_t k = 0; k + 1 < tr.configs.size(); ++k) {
      const int before = std::popcount(tr.configs[k]), after = std::popcount(tr.configs[k + 1]);
      EXPECT_EQ(after % 2, 1);
      if (tr.padded && k + 2 == tr.configs.size()) continue;
      if (tr.kinds[k] == EventKind::Plaquette) {
        EXPECT_EQ(std::abs(after - before), 2);
      } else {
        EXPECT_EQ(after, before);
      }
    }
    EXPECT_DOUBLE_EQ(tr.times.back(), 3.0);
  }
}

TEST(Gillespie, AbsorbingBoxEmptiesAndPads) {
  const RateTable t = build_rate_table(HeightBox::chain(4, BoxBoundary::Absorbing), 1.0, 0.0);
  Rng rng = make_stream(26, "test", 0);
  const auto tr = gillespie_run(t, single_site(1), 1000.0, rng);
  EXPECT_TRUE(tr.absorbed);
  EXPECT_TRUE(tr.padded);
  EXPECT_EQ(tr.configs.back(), 0u);
  EXPECT_EQ(tr.kinds[tr.kinds.size() - 2], EventKind::Sink);
  EXPECT_DOUBLE_EQ(tr.times.back(), 1000.0);
}

TEST(Gillespie, RequiresSomeRate) {
  Rng rng = make_stream(27, "test", 0);
  EXPECT_THROW(gillespie_run(build_rate_table(HeightBox::chain(6), 0.0, 0.0), 1, 1.0, rng), InvalidArgument);
}

TEST(MeanSize, Examples) {
  std::vector<double> p(16, 0.0);
  p[0b0001] = 0.5;
  p[0b0111] = 0.5;
  EXPECT_DOUBLE_EQ(mean_size_exact(p), 2.0);
  std::vector<double> q(16, 0.0);
  q[0b0001] = 1.0;
  EXPECT_DOUBLE_EQ(total_variation(p, q), 0.5);
  EXPECT_DOUBLE_EQ(total_variation(p, p), 0.0);
}
