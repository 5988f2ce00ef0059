#pragma once

// Percolation on trees: thresholds and a Galton-Watson simulation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>

#include "scrambling/error.hpp"
#include "scrambling/parallel.hpp"
#include "scrambling/rng.hpp"

namespace scrambling {

inline double tree_threshold(double n) {
  require(n >= 1.0 && std::isfinite(n), "tree_threshold: mean branching must be >= 1");
  return std::min(1.0, 1.0 / n);
}

enum class CriticalPiStatus { Ok, NoTransitionInRange, AlwaysScrambles, NeverReturns };

struct CriticalPi {
  double value = 0.0;
  CriticalPiStatus status = CriticalPiStatus::Ok;
};

/// p_i^c with (n_i p_i^c + 1) p_r = 1.
inline CriticalPi critical_pi(int n_i, double p_r) {
  require(n_i >= 1, "critical_pi: n_i must be >= 1");
  require(p_r >= 0.0 && p_r <= 1.0, "critical_pi: p_r must lie in [0, 1]");
  if (p_r == 1.0) return {0.0, CriticalPiStatus::AlwaysScrambles};
  if (p_r == 0.0) return {std::numeric_limits<double>::infinity(), CriticalPiStatus::NeverReturns};
  CriticalPi c{(1.0 / p_r - 1.0) / n_i, CriticalPiStatus::Ok};
  if (c.value > 1.0) c.status = CriticalPiStatus::NoTransitionInRange;
  return c;
}

enum class OffspringLaw {
  Fixed,   // exactly n children (n integer)
  Mixed,   // floor(n) + Bernoulli(n - floor(n))
  Walker,  // 1 + Binomial(n_i, p_i)
};

struct TreePercolationSpec {
  double branching = 2.0;
  double edge_keep_prob = 0.5;
  int max_generations = 100;
  OffspringLaw law = OffspringLaw::Mixed;
  int n_i = 0;  // Walker law only
  double p_i = 0.0;
  std::uint64_t cap = 10'000;  // generation size treated as survival

  /// Offspring 1 + Binomial(n_i, p_i), edges kept with the return probability.
  static TreePercolationSpec walker(int n_i, double p_i, double p_r, int generations) {
    TreePercolationSpec s;
    s.branching = n_i * p_i + 1.0;
    s.edge_keep_prob = p_r;
    s.max_generations = generations;
    s.law = OffspringLaw::Walker;
    s.n_i = n_i;
    s.p_i = p_i;
    return s;
  }

  void validate() const {
    require(branching >= 1.0 && std::isfinite(branching), "tree: branching must be >= 1");
    require(edge_keep_prob >= 0.0 && edge_keep_prob <= 1.0, "tree: edge_keep_prob must lie in [0, 1]");
    require(max_generations >= 10, "tree: max_generations must be >= 10");
    require(cap >= 1, "tree: cap must be >= 1");
    if (law == OffspringLaw::Fixed)
      require(branching == std::floor(branching), "tree: fixed offspring law needs an integer branching");
    if (law == OffspringLaw::Walker) {
      require(n_i >= 1, "tree: walker law needs n_i >= 1");
      require(p_i >= 0.0 && p_i <= 1.0, "tree: walker law needs p_i in [0, 1]");
    }
  }
};

struct TreeSurvival {
  double survival = 0.0;
  double stderr_ = 0.0;
  int generations = 0;
  std::uint64_t samples = 0;
  std::uint64_t capped = 0;  // samples declared surviving by the size cap
};

namespace detail {

/// Smallest k with P(Binomial(n, p) <= k) >= u. Nondecreasing in n, p and u,
/// which couples runs at different p through a shared stream.
inline std::uint64_t binomial_quantile(std::uint64_t n, double p, double u) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  if (n <= 64 && p <= 0.9) {
    const double ratio = p / (1.0 - p);
    double pmf = std::pow(1.0 - p, static_cast<double>(n));
    double cdf = pmf;
    std::uint64_t k = 0;
    while (cdf < u && k < n) {
      pmf *= ratio * static_cast<double>(n - k) / static_cast<double>(k + 1);
      cdf += pmf;
      ++k;
    }
    return k;
  }
  using Policy = boost::math::policies::policy<boost::math::policies::discrete_quantile<
      boost::math::policies::integer_round_up>>;
  const boost::math::binomial_distribution<double, Policy> dist(static_cast<double>(n), p);
  return static_cast<std::uint64_t>(boost::math::quantile(dist, u));
}

}  // namespace detail

/// Fraction of trees whose generation max_generations is non-empty.
inline TreeSurvival simulate_tree(const TreePercolationSpec& spec, std::uint64_t samples, std::uint64_t seed) {
  spec.validate();
  require(samples >= 1, "simulate_tree: samples must be >= 1");
  const std::size_t block = 256;
  std::vector<std::uint64_t> survived(block_count(samples, block), 0), capped(survived.size(), 0);
  const double whole = std::floor(spec.branching);
  const double frac = spec.branching - whole;
  for_each_block(samples, block, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng = make_stream(seed, "tree", s);
      // Open interval keeps the quantile away from u = 0 and u = 1.
      std::uniform_real_distribution<double> unif(std::nextafter(0.0, 1.0), 1.0);
      std::uint64_t z = 1;
      bool cap_hit = false;
      for (int g = 0; g < spec.max_generations && z > 0; ++g) {
        const double u_offspring = unif(rng);
        const double u_keep = unif(rng);
        std::uint64_t children = 0;
        switch (spec.law) {
          case OffspringLaw::Fixed: children = z * static_cast<std::uint64_t>(whole); break;
          case OffspringLaw::Mixed:
            children = z * static_cast<std::uint64_t>(whole) + detail::binomial_quantile(z, frac, u_offspring);
            break;
          case OffspringLaw::Walker:
            children = z + detail::binomial_quantile(z * spec.n_i, spec.p_i, u_offspring);
            break;
        }
        z = detail::binomial_quantile(children, spec.edge_keep_prob, u_keep);
        if (z >= spec.cap) {
          cap_hit = true;
          break;
        }
      }
      if (z > 0) ++survived[b];
      if (cap_hit) ++capped[b];
    }
  });
  TreeSurvival r;
  r.samples = samples;
  r.generations = spec.max_generations;
  std::uint64_t alive = 0;
  for (std::size_t b = 0; b < survived.size(); ++b) alive += survived[b], r.capped += capped[b];
  r.survival = static_cast<double>(alive) / samples;
  r.stderr_ = std::sqrt(r.survival * (1.0 - r.survival) / samples);
  return r;
}

}  // namespace scrambling
