#pragma once

// Bound-state condition for the quantum Lyapunov exponent and a direct
// integration of the linear size-growth equation used to cross-check it.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "scrambling/error.hpp"
#include "scrambling/lattice.hpp"
#include "scrambling/quadrature.hpp"
#include "scrambling/spectral.hpp"

namespace scrambling {

struct SykParams {
  double V = 1.0;
  double J = 0.0;
  int q = 4;
  LatticeSpec spec;

  void validate() const {
    spec.validate();
    require(V > 0.0 && std::isfinite(V), "SykParams: V must be > 0");
    require(J >= 0.0 && std::isfinite(J), "SykParams: J must be >= 0");
    require(q >= 4 && q % 2 == 0, "SykParams: q must be an even integer >= 4");
  }
};

enum class Phase { Escape, Scrambling };

inline std::string to_string(Phase p) { return p == Phase::Escape ? "escape" : "scrambling"; }

struct LsValue {
  double value = 0.0;
  double error = 0.0;
  bool divergent = false;
};

namespace detail {

/// e^{-x} I_0(x) for x >= 0.
inline double scaled_bessel_i0(double x) {
  if (x < 500.0) return std::exp(-x) * std::cyl_bessel_i(0.0, x);
  const double y = 1.0 / x;
  return (1.0 + y * (1.0 / 8.0 + y * (9.0 / 128.0 + y * (225.0 / 3072.0 + y * 11025.0 / 98304.0)))) /
         std::sqrt(2.0 * std::numbers::pi * x);
}

/// int_0^inf e^{-kappa t} [e^{-2t} I_0(2t)]^D dt, in u = ln t.
inline LsValue nearest_neighbor_ls(int dimension, double kappa) {
  LsValue r;
  if (kappa == 0.0 && dimension <= 2) {
    r.divergent = true;
    r.value = std::numeric_limits<double>::infinity();
    return r;
  }
  auto f = [&](double u) {
    const double t = std::exp(u);
    return t * std::exp(-kappa * t) * std::pow(scaled_bessel_i0(2.0 * t), dimension);
  };
  const double upper = kappa > 0.0 ? std::max(1.0, std::log(60.0 / kappa)) : 60.0;
  r.value = integrate_gk(f, -40.0, upper, 1e-12, &r.error);
  return r;
}

}  // namespace detail

/// Right-hand side of the bound-state condition V/(J(q-2)) = ls_rhs(kappa/V).
/// For long-range kernels the denominator is kappa/V + S(k) (unit weight on
/// |y| = 1, as in the nearest-neighbour case). Reuses S(k) across calls, so one
/// instance serves a whole root search.
class LsIntegrator {
 public:
  LsIntegrator(const LatticeSpec& spec, const QuadratureSpec& quad = {}) : spec_(spec), quad_(quad) {
    spec_.validate();
    quad_.validate();
  }

  LsValue operator()(double kappa_over_V) {
    require(kappa_over_V >= 0.0 && std::isfinite(kappa_over_V), "ls_rhs: kappa/V must be >= 0");
    if (!spec_.is_long_range()) return detail::nearest_neighbor_ls(spec_.dimension, kappa_over_V);
    if (kappa_over_V == 0.0) return at_zero();
    fill_cache();
    const int D = spec_.dimension;
    std::vector<double> levels;
    for (std::size_t l = 0; l < cache_.size(); ++l) {
      std::size_t i = 0;
      const auto& c = cache_[l];
      auto f = [&](std::span<const double>) { return 1.0 / (kappa_over_V + c[i++]); };
      levels.push_back(zone_average(D, f, grids_[l], true));
    }
    LsValue r;
    r.value = levels.back();
    r.error = std::abs(levels.back() - levels[levels.size() - 2]);
    return r;
  }

 private:
  LsValue at_zero() {
    const GreenSum g = green_sum_integral(spec_, quad_);
    LsValue r;
    if (g.divergent) {
      r.divergent = true;
      r.value = std::numeric_limits<double>::infinity();
      return r;
    }
    const double z = lattice_zeta(spec_.dimension, spec_.alpha);
    r.value = g.value / z;
    r.error = g.error / z;
    return r;
  }

  void fill_cache() {
    if (!cache_.empty()) return;
    const WalkSymbol symbol(spec_);
    const double z = symbol.total_weight();
    ZoneGrid grid = ZoneGrid::uniform(spec_.dimension, quad_.nodes_per_axis, quad_.nodes_per_axis, 2);
    for (int l = 0; l < quad_.refinement_levels; ++l) {
      std::vector<double> values;
      auto record = [&](std::span<const double> k) {
        values.push_back(z * symbol(k));
        return 0.0;
      };
      zone_average(spec_.dimension, record, grid, true);
      cache_.push_back(std::move(values));
      grids_.push_back(grid);
      grid = grid.refined();
    }
  }

  LatticeSpec spec_;
  QuadratureSpec quad_;
  std::vector<std::vector<double>> cache_;
  std::vector<ZoneGrid> grids_;
};

inline LsValue ls_rhs(double kappa_over_V, const SykParams& params, const QuadratureSpec& quad = {}) {
  params.validate();
  LsIntegrator integrator(params.spec, quad);
  return integrator(kappa_over_V);
}

/// J*/V = 1 / ((q-2) ls_rhs(0)); 0 when ls_rhs(0) diverges.
inline double critical_coupling(const SykParams& params, const QuadratureSpec& quad = {}) {
  const LsValue at0 = ls_rhs(0.0, params, quad);
  if (at0.divergent) return 0.0;
  return 1.0 / ((params.q - 2) * at0.value);
}

struct LyapunovResult {
  double kappa_over_V = 0.0;
  double critical_J_over_V = 0.0;
  Phase phase = Phase::Escape;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  int iterations = 0;
};

inline LyapunovResult solve_kappa(const SykParams& params, const QuadratureSpec& quad = {}, double tolerance = 1e-8) {
  params.validate();
  require(tolerance > 0.0, "solve_kappa: tolerance must be > 0");
  LsIntegrator ls(params.spec, quad);
  LyapunovResult r;
  const LsValue at0 = ls(0.0);
  r.critical_J_over_V = at0.divergent ? 0.0 : 1.0 / ((params.q - 2) * at0.value);
  const double j_over_v = params.J / params.V;
  if (j_over_v <= r.critical_J_over_V || params.J == 0.0) return r;

  // ls_rhs is decreasing, so the root has ls_rhs(lo) >= target > ls_rhs(hi).
  // Roots below 1 are bracketed geometrically and resolved to relative
  // precision; in 2D they can be exponentially small in V/J.
  const double target = 1.0 / (j_over_v * (params.q - 2));
  double lo = 0.0, hi = 1.0;
  if (ls(hi).value >= target) {
    while (ls(hi).value >= target) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e6) throw NumericalError("solve_kappa: bracket expansion passed kappa/V = 1e6");
    }
  } else {
    while (ls(0.5 * hi).value < target) {
      hi *= 0.5;
      if (hi < 1e-280) throw NumericalError("solve_kappa: root below kappa/V = 1e-280");
    }
    lo = 0.5 * hi;
  }
  while (hi - lo > tolerance * std::min(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (ls(mid).value > target ? lo : hi) = mid;
    ++r.iterations;
  }
  r.bracket_lo = lo;
  r.bracket_hi = hi;
  r.kappa_over_V = 0.5 * (lo + hi);
  r.phase = Phase::Scrambling;
  return r;
}

struct OdeGrowthResult {
  double kappa_over_V = 0.0;
  double slope = 0.0;  // fitted d ln N_0 / dt, in units of V
  double step = 0.0;
  long steps = 0;
  double boundary_shift = 0.0;  // |slope(2L+1) - slope(L)|, when checked
};

struct OdeOptions {
  double fit_window = 0.5;          // trailing fraction of [0, t_max] used for the fit
  double escape_tolerance = 1e-4;   // slopes at or below this report kappa = 0
  bool check_boundary = false;      // repeat on a box of side 2L+1
  double boundary_tolerance = 0.01; // relative
};

namespace detail {

inline OdeGrowthResult integrate_size_equation(const SykParams& p, int box_len, double t_max, const OdeOptions& opt) {
  const int D = p.spec.dimension;
  std::size_t volume = 1;
  for (int d = 0; d < D; ++d) volume *= static_cast<std::size_t>(box_len);
  std::size_t origin = 0, stride = 1;
  for (int d = 0; d < D; ++d) {
    origin += static_cast<std::size_t>(box_len / 2) * stride;
    stride *= box_len;
  }
  const double V = p.V;
  const double source = p.J * (p.q - 2);
  const double z = 2.0 * D;
  // dN/dt = V (sum_y N_y - z N_x) + J (q-2) delta_{x,0} N_x; sites outside the box hold 0.
  auto rhs = [&](const std::vector<double>& n, std::vector<double>& out) {
    for (std::size_t i = 0; i < volume; ++i) out[i] = -z * V * n[i];
    out[origin] += source * n[origin];
    std::size_t s = 1;
    for (int d = 0; d < D; ++d) {
      const std::size_t row = s * box_len;
      for (std::size_t base = 0; base < volume; base += row) {
        for (int j = 1; j < box_len; ++j) {
          double* o = out.data() + base + j * s;
          const double* lower = n.data() + base + (j - 1) * s;
          for (std::size_t i = 0; i < s; ++i) o[i] += V * lower[i];
        }
        for (int j = 0; j + 1 < box_len; ++j) {
          double* o = out.data() + base + j * s;
          const double* upper = n.data() + base + (j + 1) * s;
          for (std::size_t i = 0; i < s; ++i) o[i] += V * upper[i];
        }
      }
      s = row;
    }
  };

  OdeGrowthResult r;
  const double h_max = 0.5 / (2.0 * z * V);
  r.steps = static_cast<long>(std::ceil(t_max / h_max));
  const double h = t_max / r.steps;
  r.step = h;
  std::vector<double> n(volume, 0.0), k1(volume), k2(volume), k3(volume), k4(volume), tmp(volume);
  n[origin] = 1.0;
  double log_scale = 0.0;
  const double fit_start = (1.0 - opt.fit_window) * t_max;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
  for (long step = 1; step <= r.steps; ++step) {
    rhs(n, k1);
    for (std::size_t i = 0; i < volume; ++i) tmp[i] = n[i] + 0.5 * h * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < volume; ++i) tmp[i] = n[i] + 0.5 * h * k2[i];
    rhs(tmp, k3);
    for (std::size_t i = 0; i < volume; ++i) tmp[i] = n[i] + h * k3[i];
    rhs(tmp, k4);
    double peak = 0.0;
    for (std::size_t i = 0; i < volume; ++i) {
      n[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      peak = std::max(peak, std::abs(n[i]));
    }
    if (!(peak > 0.0) || !std::isfinite(peak)) throw NumericalError("ode_growth_rate: field lost finiteness");
    for (double& v : n) v /= peak;
    log_scale += std::log(peak);
    const double t = step * h;
    if (t >= fit_start && n[origin] > 0.0) {
      const double y = log_scale + std::log(n[origin]);
      sx += t, sy += y, sxx += t * t, sxy += t * y, cnt += 1;
    }
  }
  if (cnt < 2) throw NumericalError("ode_growth_rate: fit window holds fewer than two points");
  r.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx) / V;
  r.kappa_over_V = r.slope > opt.escape_tolerance ? r.slope : 0.0;
  return r;
}

}  // namespace detail

/// Growth rate of N_0(t) from the linear size equation on a box of side
/// box_len centred on the impurity, with N = 0 outside the box.
inline OdeGrowthResult ode_growth_rate(const SykParams& params, int box_len, double t_max,
                                       const OdeOptions& options = {}) {
  params.validate();
  require(!params.spec.is_long_range(), "ode_growth_rate: nearest-neighbour kernel only");
  require(box_len >= 3, "ode_growth_rate: box_len must be >= 3");
  require(t_max > 0.0, "ode_growth_rate: t_max must be > 0");
  require(options.fit_window > 0.0 && options.fit_window <= 1.0, "ode_growth_rate: fit_window must be in (0, 1]");
  OdeGrowthResult r = detail::integrate_size_equation(params, box_len, t_max, options);
  if (options.check_boundary) {
    const OdeGrowthResult big = detail::integrate_size_equation(params, 2 * box_len + 1, t_max, options);
    r.boundary_shift = std::abs(big.slope - r.slope);
    const double scale = std::max(std::abs(big.slope), options.escape_tolerance);
    if (r.boundary_shift > options.boundary_tolerance * scale)
      throw NumericalError("ode_growth_rate: growth rate changed by " + std::to_string(r.boundary_shift) +
                           " when the box was doubled");
  }
  return r;
}

}  // namespace scrambling
