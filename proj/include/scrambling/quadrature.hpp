#pragma once

// Brillouin-zone quadrature for integrands with an integrable singularity at
// k = 0. The cube [-pi, pi]^D is folded onto [0, pi]^D (integrands must be even
// in every component) and split into D pyramids k = r (..., 1, ...), one per
// axis carrying the max-norm. The Jacobian r^{D-1} tames the singularity and a
// power map r = pi w^m removes leftover algebraic endpoint behaviour.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "scrambling/error.hpp"

namespace scrambling {

/// Gauss-Legendre rule on [0, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussRule gauss_legendre(int n) {
  require(n >= 1, "gauss_legendre: need at least one node");
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = x;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = rule.weights[n - 1 - i] = 0.5 * w;
  }
  return rule;
}

/// Node counts for the pyramid quadrature.
struct ZoneGrid {
  std::vector<int> radial;   // per pyramid (indexed by its max-norm axis)
  std::vector<int> angular;  // per axis, used when that axis is angular
  int radial_power = 1;

  static ZoneGrid uniform(int dimension, int radial_nodes, int angular_nodes, int power) {
    return {std::vector<int>(dimension, radial_nodes), std::vector<int>(dimension, angular_nodes), power};
  }
  ZoneGrid refined() const {
    ZoneGrid g = *this;
    for (int& n : g.radial) n *= 2;
    for (int& n : g.angular) n *= 2;
    return g;
  }
};

namespace detail {

/// Visits every tensor node of the angular cube [0,1]^{D-1} of pyramid p,
/// calling visit(u, weight) with u holding D-1 coordinates.
template <typename Visit>
void for_each_angular_node(int dimension, int pyramid, const ZoneGrid& grid, const std::vector<GaussRule>& rules,
                           Visit&& visit) {
  const int m = dimension - 1;
  std::vector<int> idx(m, 0);
  std::vector<double> u(m);
  std::vector<int> axis_of(m);
  for (int j = 0, a = 0; j < dimension; ++j)
    if (j != pyramid) axis_of[a++] = j;
  while (true) {
    double w = 1.0;
    for (int a = 0; a < m; ++a) {
      const GaussRule& r = rules[axis_of[a]];
      u[a] = r.nodes[idx[a]];
      w *= r.weights[idx[a]];
    }
    visit(std::span<const double>(u), w);
    int a = 0;
    while (a < m && ++idx[a] >= grid.angular[axis_of[a]]) idx[a++] = 0;
    if (a == m) break;
  }
}

}  // namespace detail

/// Average of f over the Brillouin zone, i.e. int d^Dk/(2pi)^D f(k), for f
/// even in each component and integrable at k = 0. When `permutation_symmetric`
/// only one pyramid is evaluated.
template <typename F>
double zone_average(int dimension, F&& f, const ZoneGrid& grid, bool permutation_symmetric) {
  require(dimension >= 1, "zone_average: dimension must be >= 1");
  require(static_cast<int>(grid.radial.size()) == dimension && static_cast<int>(grid.angular.size()) == dimension,
          "zone_average: grid size mismatch");
  constexpr double pi = std::numbers::pi;
  const int D = dimension;
  const int m = grid.radial_power;
  std::vector<GaussRule> angular_rules(D);
  for (int j = 0; j < D; ++j) angular_rules[j] = gauss_legendre(grid.angular[j]);
  std::vector<double> k(D);
  double total = 0.0;
  const int pyramids = permutation_symmetric ? 1 : D;
  for (int p = 0; p < pyramids; ++p) {
    const GaussRule radial = gauss_legendre(grid.radial[p]);
    double pyramid_sum = 0.0;
    for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
      const double w = radial.nodes[i];
      const double r = pi * std::pow(w, m);
      const double jac = pi * m * std::pow(w, m - 1) * std::pow(r, D - 1) * radial.weights[i];
      double shell = 0.0;
      if (D == 1) {
        k[0] = r;
        shell = f(std::span<const double>(k));
      } else {
        detail::for_each_angular_node(D, p, grid, angular_rules, [&](std::span<const double> u, double uw) {
          for (int j = 0, a = 0; j < D; ++j) k[j] = (j == p) ? r : r * u[a++];
          shell += uw * f(std::span<const double>(k));
        });
      }
      pyramid_sum += jac * shell;
    }
    total += pyramid_sum;
  }
  if (permutation_symmetric) total *= D;
  return total / std::pow(pi, D);
}

/// Weight the zone integral accumulates per unit log(1/eps) at max-norm radius
/// eps: eps^D * sum_p int du f(eps (.., 1, ..)) / pi^D. Decays to zero as a
/// power of eps iff the integral converges at k = 0.
template <typename F>
double zone_shell_density(int dimension, F&& f, double eps, int angular_nodes, bool permutation_symmetric) {
  constexpr double pi = std::numbers::pi;
  const int D = dimension;
  ZoneGrid grid = ZoneGrid::uniform(D, 1, angular_nodes, 1);
  std::vector<GaussRule> rules(D, gauss_legendre(angular_nodes));
  std::vector<double> k(D);
  double total = 0.0;
  const int pyramids = permutation_symmetric ? 1 : D;
  for (int p = 0; p < pyramids; ++p) {
    if (D == 1) {
      k[0] = eps;
      total += f(std::span<const double>(k));
      continue;
    }
    detail::for_each_angular_node(D, p, grid, rules, [&](std::span<const double> u, double uw) {
      for (int j = 0, a = 0; j < D; ++j) k[j] = (j == p) ? eps : eps * u[a++];
      total += uw * f(std::span<const double>(k));
    });
  }
  if (permutation_symmetric) total *= D;
  return std::pow(eps, D) * total / std::pow(pi, D);
}

/// Plain tensor Gauss-Legendre average over [0, pi]^D (no singularity
/// treatment), for smooth integrands and for cross-checks.
template <typename F>
double tensor_zone_average(int dimension, F&& f, int nodes_per_axis) {
  constexpr double pi = std::numbers::pi;
  const int D = dimension;
  const GaussRule rule = gauss_legendre(nodes_per_axis);
  std::vector<int> idx(D, 0);
  std::vector<double> k(D);
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (int j = 0; j < D; ++j) {
      k[j] = pi * rule.nodes[idx[j]];
      w *= rule.weights[idx[j]];
    }
    total += w * f(std::span<const double>(k));
    int j = 0;
    while (j < D && ++idx[j] >= nodes_per_axis) idx[j++] = 0;
    if (j == D) break;
  }
  return total;
}

}  // namespace scrambling
