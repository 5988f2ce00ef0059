#pragma once

// Hypercubic lattice geometry, step distributions (nearest-neighbour and
// power-law long-range) and the lattice sums built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "scrambling/error.hpp"
#include "scrambling/rng.hpp"

namespace scrambling {

enum class Kernel { NearestNeighbor, LongRange };
enum class Boundary { Unbounded, Periodic, Absorbing };

inline std::string to_string(Kernel k) {
  return k == Kernel::NearestNeighbor ? "nearest_neighbor" : "long_range";
}
inline std::string to_string(Boundary b) {
  switch (b) {
    case Boundary::Unbounded: return "unbounded";
    case Boundary::Periodic: return "periodic";
    case Boundary::Absorbing: return "absorbing";
  }
  return "?";
}

/// Integer coordinates of a lattice site. Box coordinates live in [0, L).
using Site = std::vector<long>;

struct LatticeSpec {
  int dimension = 1;
  Kernel kernel = Kernel::NearestNeighbor;
  double alpha = 0.0;  // power-law exponent, LongRange only
  int r_max = 0;       // truncation radius for sampling; 0 selects the default
  Boundary boundary = Boundary::Unbounded;
  int box_len = 0;  // side length when boundary != Unbounded

  static LatticeSpec nearest_neighbor(int dimension) {
    LatticeSpec s;
    s.dimension = dimension;
    return s;
  }
  static LatticeSpec long_range(int dimension, double alpha, int r_max = 0) {
    LatticeSpec s;
    s.dimension = dimension;
    s.kernel = Kernel::LongRange;
    s.alpha = alpha;
    s.r_max = r_max;
    return s;
  }
  LatticeSpec with_box(int side, Boundary b) const {
    LatticeSpec s = *this;
    s.boundary = b;
    s.box_len = side;
    return s;
  }

  bool is_long_range() const { return kernel == Kernel::LongRange; }
  bool bounded() const { return boundary != Boundary::Unbounded; }

  /// R_max actually used: 100 for D <= 2, 30 otherwise, unless set.
  int effective_r_max() const {
    if (r_max > 0) return r_max;
    return dimension <= 2 ? 100 : 30;
  }

  void validate() const {
    require(dimension >= 1, "lattice: dimension must be >= 1");
    if (is_long_range()) {
      require(alpha > 0.0 && std::isfinite(alpha), "lattice: long-range alpha must be > 0");
      require(r_max >= 0, "lattice: r_max must be >= 1 (or 0 for default)");
    }
    if (bounded()) require(box_len >= 4, "lattice: box_len must be >= 4 for a bounded lattice");
  }
};

/// Nearest-neighbour sites of `site`, wrapped (periodic) or filtered
/// (absorbing) by the boundary policy.
inline std::vector<Site> neighbors(const Site& site, const LatticeSpec& spec) {
  spec.validate();
  require(!spec.is_long_range(), "neighbors: long-range kernel has no finite neighbourhood; use sample_step");
  require(static_cast<int>(site.size()) == spec.dimension, "neighbors: site dimension mismatch");
  std::vector<Site> out;
  out.reserve(2 * site.size());
  const long L = spec.box_len;
  for (std::size_t axis = 0; axis < site.size(); ++axis) {
    for (long delta : {-1L, +1L}) {
      Site n = site;
      n[axis] += delta;
      if (spec.boundary == Boundary::Periodic) {
        n[axis] = ((n[axis] % L) + L) % L;
      } else if (spec.boundary == Boundary::Absorbing) {
        if (n[axis] < 0 || n[axis] >= L) continue;
      }
      out.push_back(std::move(n));
    }
  }
  return out;
}

namespace detail {

constexpr double kPi = std::numbers::pi;

/// Per-axis heat-kernel sums at time t: sum_n e^{-t n^2} evaluated at 0 and at
/// k, plus their difference computed without cancellation. For t < 1 the
/// Jacobi-transformed form is used, scaled by sqrt(t/pi).
struct ThetaAxis {
  double at_zero;
  double at_k;
  double gap;
};

inline ThetaAxis theta_axis(double k, double t, bool jacobi) {
  ThetaAxis r{0.0, 0.0, 0.0};
  if (!jacobi) {
    r.at_zero = 1.0;
    r.at_k = 1.0;
    for (int n = 1;; ++n) {
      const double w = std::exp(-t * n * n);
      if (w < 1e-19) break;
      const double s = std::sin(0.5 * k * n);
      r.at_zero += 2.0 * w;
      r.at_k += 2.0 * w * std::cos(k * n);
      r.gap += 4.0 * w * s * s;
    }
    return r;
  }
  // Images m and -m are paired: with c = k^2/4t, d = pi m k/t their gap is
  // -2 e^{-a} [2 e^{-c} sinh^2(d/2) + expm1(-c)], free of O(k) cancellation.
  const double c = k * k / (4.0 * t);
  r.at_zero = 1.0;
  r.at_k = std::exp(-c);
  r.gap = -std::expm1(-c);
  for (int m = 1; m <= 4; ++m) {
    const double a = (kPi * m) * (kPi * m) / t;
    const double ea = std::exp(-a);
    if (ea == 0.0) break;
    const double bp = (k + 2.0 * kPi * m) * (k + 2.0 * kPi * m) / (4.0 * t);
    const double bm = (k - 2.0 * kPi * m) * (k - 2.0 * kPi * m) / (4.0 * t);
    const double sh = std::sinh(0.5 * kPi * m * k / t);
    r.at_zero += 2.0 * ea;
    r.at_k += std::exp(-bp) + std::exp(-bm);
    r.gap += -2.0 * ea * (2.0 * std::exp(-c) * sh * sh + std::expm1(-c));
  }
  return r;
}

/// prod(at_zero) - prod(at_k), telescoped.
inline double product_gap(std::span<const ThetaAxis> axes) {
  double total = 0.0;
  for (std::size_t j = 0; j < axes.size(); ++j) {
    double term = axes[j].gap;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (i < j) term *= axes[i].at_k;
      if (i > j) term *= axes[i].at_zero;
    }
    total += term;
  }
  return total;
}

/// Globally adaptive GK31: bisects the worst interval until the summed error
/// is below rel_tol * |I| or reaches the roundoff floor of int |f|.
template <typename F>
double integrate_gk(F&& f, double a, double b, double rel_tol, double* error_out = nullptr,
                    int max_intervals = 400) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  struct Piece {
    double a, b, value, error, l1;
  };
  auto eval = [&](double lo, double hi) {
    Piece p{lo, hi, 0.0, 0.0, 0.0};
    p.value = GK::integrate(f, lo, hi, 0, 0.0, &p.error, &p.l1);
    return p;
  };
  std::vector<Piece> pieces{eval(a, b)};
  while (true) {
    double value = 0.0, error = 0.0, l1 = 0.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      value += pieces[i].value;
      error += pieces[i].error;
      l1 += pieces[i].l1;
      if (pieces[i].error > pieces[worst].error) worst = i;
    }
    if (error <= rel_tol * std::abs(value) || error <= 50.0 * std::numeric_limits<double>::epsilon() * l1 ||
        static_cast<int>(pieces.size()) >= max_intervals) {
      if (error_out) *error_out = error;
      return value;
    }
    const Piece w = pieces[worst];
    const double mid = 0.5 * (w.a + w.b);
    pieces[worst] = eval(w.a, mid);
    pieces.push_back(eval(mid, w.b));
  }
}

}  // namespace detail

/// Lattice zeta sum Z = sum_{y != 0} |y|^{-(D+alpha)} over Z^D.
inline double lattice_zeta(int dimension, double alpha, double rel_tol = 1e-12) {
  require(dimension >= 1, "lattice_zeta: dimension must be >= 1");
  require(alpha > 0.0, "lattice_zeta: alpha must be > 0");
  using detail::kPi;
  const double D = dimension;
  const double s = D + alpha;
  // Heat-kernel representation |y|^{-s} = Gamma(s/2)^{-1} int t^{s/2-1} e^{-t|y|^2} dt.
  auto small = [&](double t) {
    if (t <= 0.0) return 0.0;
    const double c = detail::theta_axis(0.0, t, true).at_zero;
    return std::pow(t, 0.5 * alpha - 1.0) * std::expm1(D * std::log(c));
  };
  auto large = [&](double t) {
    const double a = detail::theta_axis(0.0, t, false).at_zero;
    return std::pow(t, 0.5 * s - 1.0) * std::expm1(D * std::log(a));
  };
  const double small_part =
      std::pow(kPi, 0.5 * D) * (2.0 / alpha + detail::integrate_gk(small, 0.0, 1.0, rel_tol)) - 2.0 / s;
  const double large_part = detail::integrate_gk(large, 1.0, 80.0, rel_tol);
  return (small_part + large_part) / std::tgamma(0.5 * s);
}

/// S(k) = sum_{y != 0} |y|^{-(D+alpha)} [1 - cos(k.y)] over the infinite
/// lattice. Evaluated through the heat-kernel (Mellin) representation, which
/// factorises over axes; `rel_tol` bounds the relative quadrature error.
/// Exactly 0 at k = 0.
inline double structure_function(const LatticeSpec& spec, std::span<const double> k, double rel_tol = 1e-10) {
  spec.validate();
  require(spec.is_long_range(), "structure_function: requires a long-range kernel");
  require(static_cast<int>(k.size()) == spec.dimension, "structure_function: k dimension mismatch");
  require(rel_tol > 0.0, "structure_function: tolerance must be positive");
  rel_tol = std::max(rel_tol, 1e-14);
  using detail::kPi;
  const int D = spec.dimension;
  const double alpha = spec.alpha;
  const double s = D + alpha;

  std::vector<double> kr(k.begin(), k.end());
  double k2 = 0.0;
  for (double& v : kr) {
    v = std::remainder(v, 2.0 * kPi);
    k2 += v * v;
  }
  if (k2 == 0.0) return 0.0;

  std::vector<detail::ThetaAxis> axes(D);
  auto gap_at = [&](double t, bool jacobi) {
    for (int j = 0; j < D; ++j) axes[j] = detail::theta_axis(kr[j], t, jacobi);
    return detail::product_gap(axes);
  };
  // Below t1 the Jacobi gap equals 1 to within e^{-100}.
  const double t1 = std::min(k2 / 400.0, 0.5);
  auto mid = [&](double u) {
    const double t = std::exp(u);
    return std::exp(0.5 * alpha * u) * gap_at(t, true);
  };
  auto large = [&](double t) { return std::pow(t, 0.5 * s - 1.0) * gap_at(t, false); };

  const double small_part =
      std::pow(kPi, 0.5 * D) *
      (2.0 / alpha * std::pow(t1, 0.5 * alpha) + detail::integrate_gk(mid, std::log(t1), 0.0, rel_tol));
  const double large_part = detail::integrate_gk(large, 1.0, 80.0, rel_tol);
  return (small_part + large_part) / std::tgamma(0.5 * s);
}

/// Normalised single-step displacement law of the walker.
class StepDistribution {
 public:
  StepDistribution() = default;

  static StepDistribution build(const LatticeSpec& spec) {
    spec.validate();
    StepDistribution d;
    d.dimension_ = spec.dimension;
    const int D = spec.dimension;
    if (!spec.is_long_range()) {
      d.nearest_neighbor_ = true;
      for (int axis = 0; axis < D; ++axis) {
        for (int delta : {-1, +1}) {
          for (int j = 0; j < D; ++j) d.displacements_.push_back(j == axis ? delta : 0);
          d.probabilities_.push_back(1.0 / (2.0 * D));
        }
      }
    } else {
      const int R = spec.effective_r_max();
      require(R >= 1, "build_step_distribution: r_max too small to contain any site");
      const double expo = -(D + spec.alpha);
      std::vector<int> y(D, -R);
      double total = 0.0;
      while (true) {
        long r2 = 0;
        for (int v : y) r2 += static_cast<long>(v) * v;
        if (r2 > 0 && r2 <= static_cast<long>(R) * R) {
          const double w = std::pow(static_cast<double>(r2), 0.5 * expo);
          d.displacements_.insert(d.displacements_.end(), y.begin(), y.end());
          d.probabilities_.push_back(w);
          total += w;
        }
        int j = 0;
        while (j < D && ++y[j] > R) y[j++] = -R;
        if (j == D) break;
      }
      for (double& p : d.probabilities_) p /= total;
      d.tail_mass_ = std::max(0.0, 1.0 - total / lattice_zeta(D, spec.alpha));
    }
    d.cdf_.resize(d.probabilities_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < d.probabilities_.size(); ++i) d.cdf_[i] = (acc += d.probabilities_[i]);
    d.cdf_.back() = 1.0;
    return d;
  }

  int dimension() const { return dimension_; }
  std::size_t size() const { return probabilities_.size(); }
  bool nearest_neighbor() const { return nearest_neighbor_; }
  std::span<const int> displacement(std::size_t i) const {
    return {displacements_.data() + i * dimension_, static_cast<std::size_t>(dimension_)};
  }
  double probability(std::size_t i) const { return probabilities_[i]; }
  std::span<const double> probabilities() const { return probabilities_; }
  /// Weight of the infinite power-law kernel beyond the truncation radius.
  double truncated_tail_mass() const { return tail_mass_; }

  /// Index of a displacement drawn from the distribution.
  std::size_t sample_index(Rng& rng) const {
    if (nearest_neighbor_) {
      return std::uniform_int_distribution<std::size_t>(0, probabilities_.size() - 1)(rng);
    }
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

  /// Second moment E|y|^2 of a single step.
  double mean_squared_step() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double r2 = 0.0;
      for (int v : displacement(i)) r2 += static_cast<double>(v) * v;
      m += probabilities_[i] * r2;
    }
    return m;
  }

 private:
  int dimension_ = 0;
  bool nearest_neighbor_ = false;
  std::vector<int> displacements_;  // flattened, dimension_ per entry
  std::vector<double> probabilities_;
  std::vector<double> cdf_;
  double tail_mass_ = 0.0;
};

inline StepDistribution build_step_distribution(const LatticeSpec& spec) { return StepDistribution::build(spec); }

inline std::vector<long> sample_step(const StepDistribution& dist, Rng& rng) {
  auto y = dist.displacement(dist.sample_index(rng));
  return {y.begin(), y.end()};
}

/// f(k) = sum_y f(y) cos(k.y).
inline double characteristic_function(const StepDistribution& dist, std::span<const double> k) {
  require(static_cast<int>(k.size()) == dist.dimension(), "characteristic_function: k dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    double phase = 0.0;
    auto y = dist.displacement(i);
    for (std::size_t j = 0; j < k.size(); ++j) phase += k[j] * y[j];
    sum += dist.probability(i) * std::cos(phase);
  }
  return sum;
}

/// 1 - f(k), accurate at small k.
inline double one_minus_characteristic(const StepDistribution& dist, std::span<const double> k) {
  require(static_cast<int>(k.size()) == dist.dimension(), "one_minus_characteristic: k dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    double phase = 0.0;
    auto y = dist.displacement(i);
    for (std::size_t j = 0; j < k.size(); ++j) phase += k[j] * y[j];
    const double s = std::sin(0.5 * phase);
    sum += 2.0 * dist.probability(i) * s * s;
  }
  return sum;
}

}  // namespace scrambling
