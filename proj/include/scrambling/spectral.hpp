#pragma once

// Return probabilities of the lattice walk from Brillouin-zone integrals of
// 1 / (1 - f(k)).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scrambling/error.hpp"
#include "scrambling/lattice.hpp"
#include "scrambling/quadrature.hpp"

namespace scrambling {

enum class QuadratureScheme { TensorGaussLegendre, RadialPyramid };

inline std::string to_string(QuadratureScheme s) {
  return s == QuadratureScheme::TensorGaussLegendre ? "tensor_gauss_legendre" : "radial_pyramid";
}

struct QuadratureSpec {
  int nodes_per_axis = 24;
  QuadratureScheme scheme = QuadratureScheme::RadialPyramid;
  int refinement_levels = 2;

  void validate() const {
    require(nodes_per_axis >= 8, "QuadratureSpec: nodes_per_axis must be >= 8");
    require(refinement_levels >= 2, "QuadratureSpec: refinement_levels must be >= 2");
  }
};

/// 1 - f(k) of the untruncated walk: (2/D) sum sin^2(k_j/2) for nearest
/// neighbours, S(k) / Z for the long-range kernel.
class WalkSymbol {
 public:
  explicit WalkSymbol(const LatticeSpec& spec, double rel_tol = 1e-10) : spec_(spec), rel_tol_(rel_tol) {
    spec_.validate();
    if (spec_.kernel == Kernel::LongRange) zeta_ = lattice_zeta(spec_.dimension, spec_.alpha);
  }

  double operator()(std::span<const double> k) const {
    if (spec_.kernel == Kernel::NearestNeighbor) {
      double s = 0.0;
      for (double kj : k) {
        const double h = std::sin(0.5 * kj);
        s += h * h;
      }
      return 2.0 * s / spec_.dimension;
    }
    return structure_function(spec_, k, rel_tol_) / zeta_;
  }

  int dimension() const { return spec_.dimension; }
  bool long_range() const { return spec_.kernel == Kernel::LongRange; }
  /// Sum of the long-range weights over all y != 0 (2D for nearest neighbours).
  double total_weight() const { return long_range() ? zeta_ : 2.0 * spec_.dimension; }
  /// Power in r = pi w^m used by the pyramid rule.
  int radial_power() const { return long_range() ? 2 : 1; }
  const LatticeSpec& spec() const { return spec_; }

 private:
  LatticeSpec spec_;
  double rel_tol_;
  double zeta_ = 1.0;
};

struct IntegralEstimate {
  double value = 0.0;
  double error = 0.0;
  std::vector<double> levels;  // value at each refinement level
};

/// Brillouin-zone average with refinement; the error is the change between
/// the last two levels.
template <typename F>
IntegralEstimate integrate_zone(int dimension, F&& f, const QuadratureSpec& quad, const ZoneGrid& base,
                                bool permutation_symmetric) {
  quad.validate();
  IntegralEstimate est;
  ZoneGrid grid = base;
  int tensor_nodes = quad.nodes_per_axis;
  for (int level = 0; level < quad.refinement_levels; ++level) {
    double v;
    if (quad.scheme == QuadratureScheme::TensorGaussLegendre) {
      v = tensor_zone_average(dimension, f, tensor_nodes);
      tensor_nodes *= 2;
    } else {
      v = zone_average(dimension, f, grid, permutation_symmetric);
      grid = grid.refined();
    }
    est.levels.push_back(v);
  }
  est.value = est.levels.back();
  est.error = std::abs(est.levels.back() - est.levels[est.levels.size() - 2]);
  return est;
}

enum class Convergence { Convergent, Divergent };

struct DivergenceTest {
  Convergence verdict = Convergence::Convergent;
  double shell_exponent = 0.0;
  std::vector<double> eps;
  std::vector<double> density;
};

/// Fits g(eps) ~ eps^s to the shell density near k = 0. The integral
/// converges iff s > 0; s <= 0.15 covers the logarithmic marginal cases.
template <typename F>
DivergenceTest test_zone_divergence(int dimension, F&& f, bool permutation_symmetric) {
  constexpr double divergent_below = 0.15;
  constexpr double convergent_above = 0.3;
  DivergenceTest t;
  for (double e = -6.0; e <= -4.0 + 1e-9; e += 0.5) t.eps.push_back(std::pow(10.0, e));
  for (double e : t.eps) t.density.push_back(zone_shell_density(dimension, f, e, 12, permutation_symmetric));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(t.eps.size());
  for (std::size_t i = 0; i < t.eps.size(); ++i) {
    if (!(t.density[i] > 0.0) || !std::isfinite(t.density[i]))
      throw NumericalError("divergence test: non-positive shell density at eps=" + std::to_string(t.eps[i]));
    const double x = std::log(t.eps[i]), y = std::log(t.density[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  t.shell_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (t.shell_exponent <= divergent_below) {
    t.verdict = Convergence::Divergent;
  } else if (t.shell_exponent >= convergent_above) {
    t.verdict = Convergence::Convergent;
  } else {
    throw NumericalError("divergence test undecided: shell exponent " + std::to_string(t.shell_exponent) +
                         " lies between " + std::to_string(divergent_below) + " and " +
                         std::to_string(convergent_above));
  }
  return t;
}

struct GreenSum {
  bool divergent = false;
  double value = std::numeric_limits<double>::infinity();
  double error = 0.0;
  double shell_exponent = 0.0;
};

namespace detail {

inline ZoneGrid base_grid(const WalkSymbol& symbol, const QuadratureSpec& quad) {
  return ZoneGrid::uniform(symbol.dimension(), quad.nodes_per_axis, quad.nodes_per_axis, symbol.radial_power());
}

}  // namespace detail

/// Sum over n of p_n(0) = int d^Dk/(2pi)^D 1/(1 - f(k)).
inline GreenSum green_sum_integral(const LatticeSpec& spec, const QuadratureSpec& quad = {}) {
  quad.validate();
  const WalkSymbol symbol(spec);
  auto f = [&](std::span<const double> k) { return 1.0 / symbol(k); };
  GreenSum g;
  const DivergenceTest t = test_zone_divergence(spec.dimension, f, true);
  g.shell_exponent = t.shell_exponent;
  if (t.verdict == Convergence::Divergent) {
    g.divergent = true;
    return g;
  }
  const IntegralEstimate est = integrate_zone(spec.dimension, f, quad, detail::base_grid(symbol, quad), true);
  g.value = est.value;
  g.error = est.error;
  return g;
}

struct ReturnProbabilityResult {
  double p_return = 1.0;
  bool recurrent = true;
  double green_sum = std::numeric_limits<double>::infinity();
  double quadrature_error = 0.0;
  double shell_exponent = 0.0;
};

inline ReturnProbabilityResult return_probability(const LatticeSpec& spec, const QuadratureSpec& quad = {}) {
  const GreenSum g = green_sum_integral(spec, quad);
  ReturnProbabilityResult r;
  r.shell_exponent = g.shell_exponent;
  if (g.divergent) return r;
  r.recurrent = false;
  r.green_sum = g.value;
  r.p_return = 1.0 - 1.0 / g.value;
  r.quadrature_error = g.error / (g.value * g.value);
  return r;
}

struct SiteReturnResult {
  double value = 1.0;
  double error = 0.0;
  bool recurrent = true;
};

/// Probability of ever reaching x: G(x) / G(0).
inline SiteReturnResult return_probability_to_site(const LatticeSpec& spec, const Site& x,
                                                   const QuadratureSpec& quad = {}) {
  quad.validate();
  require(static_cast<int>(x.size()) == spec.dimension, "return_probability_to_site: site dimension mismatch");
  require(std::any_of(x.begin(), x.end(), [](long c) { return c != 0; }),
          "return_probability_to_site: x must differ from the origin");
  const GreenSum g0 = green_sum_integral(spec, quad);
  SiteReturnResult r;
  if (g0.divergent) return r;

  const WalkSymbol symbol(spec);
  const int D = spec.dimension;
  ZoneGrid grid = detail::base_grid(symbol, quad);
  long total = 0;
  for (long c : x) total += std::labs(c);
  for (int j = 0; j < D; ++j) {
    grid.radial[j] += static_cast<int>(2 * total);
    grid.angular[j] += static_cast<int>(2 * std::labs(x[j]));
  }
  auto f = [&](std::span<const double> k) {
    double c = 1.0;
    for (int j = 0; j < D; ++j) c *= std::cos(k[j] * static_cast<double>(x[j]));
    return c / symbol(k);
  };
  const IntegralEstimate gx = integrate_zone(D, f, quad, grid, false);
  r.recurrent = false;
  r.value = gx.value / g0.value;
  r.error = gx.error / g0.value + std::abs(r.value) * g0.error / g0.value;
  return r;
}

enum class Recurrence { Recurrent, Transient };

inline std::string to_string(Recurrence r) { return r == Recurrence::Recurrent ? "recurrent" : "transient"; }

/// Pólya criterion; `alpha` empty means short range. D may be non-integer.
inline Recurrence recurrence_classification(double dimension, std::optional<double> alpha = std::nullopt) {
  require(dimension > 0.0, "recurrence_classification: D must be positive");
  double threshold = 2.0;
  if (alpha) {
    require(*alpha > 0.0, "recurrence_classification: alpha must be positive");
    threshold = std::min(*alpha, 2.0);
  }
  return dimension <= threshold ? Recurrence::Recurrent : Recurrence::Transient;
}

struct PhaseRow {
  int dimension = 1;
  std::optional<double> alpha;
  ReturnProbabilityResult result;
  Recurrence classification = Recurrence::Recurrent;
};

/// Return probability over a (D, alpha) grid; an empty alpha means short range.
inline std::vector<PhaseRow> phase_table(const std::vector<int>& dimensions,
                                         const std::vector<std::optional<double>>& alphas,
                                         const QuadratureSpec& quad = {}) {
  std::vector<PhaseRow> rows;
  for (int d : dimensions) {
    for (const auto& a : alphas) {
      PhaseRow row;
      row.dimension = d;
      row.alpha = a;
      const LatticeSpec spec = a ? LatticeSpec::long_range(d, *a) : LatticeSpec::nearest_neighbor(d);
      row.result = return_probability(spec, quad);
      row.classification = row.result.recurrent ? Recurrence::Recurrent : Recurrence::Transient;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace scrambling
