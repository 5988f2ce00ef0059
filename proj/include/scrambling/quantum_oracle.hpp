#pragma once

// Exact Heisenberg evolution of a Majorana-string operator under Brownian
// bond and plaquette couplings, one Majorana per site.
//
// Basis: B_mu = i^{q(q-1)/2} chi_{x1} ... chi_{xq} with x1 < ... < xq and
// q = popcount(mu). Each term A = B_a acts by d/dtheta O = i[A, O], which maps
// B_mu to 2 s B_{mu ^ a} (s = +-1) when A and B_mu anticommute and to 0 otherwise.

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scrambling/error.hpp"
#include "scrambling/master_eq.hpp"
#include "scrambling/parallel.hpp"
#include "scrambling/rng.hpp"

namespace scrambling {

using MajoranaMask = std::uint32_t;
using OperatorWavefunction = std::vector<double>;

inline constexpr int max_oracle_sites = 14;

namespace detail {

/// (-1)^{#(s in S, t in T, s > t)}: sign of M_S M_T = sign * M_{S ^ T}.
inline int ordering_sign(MajoranaMask s, MajoranaMask t) {
  int swaps = 0;
  while (t) {
    const int b = std::countr_zero(t);
    t &= t - 1;
    swaps += std::popcount(s >> (b + 1));
  }
  return (swaps & 1) ? -1 : 1;
}

inline int phase_exponent(MajoranaMask m) {
  const int q = std::popcount(m);
  return (q * (q - 1) / 2) % 4;
}

}  // namespace detail

/// i[B_a, B_mu] = 2 * sign * B_partner; sign 0 when the two commute.
struct AdjointAction {
  MajoranaMask partner = 0;
  int sign = 0;
};

inline AdjointAction adjoint_action(MajoranaMask term, MajoranaMask mu) {
  const int qa = std::popcount(term), q = std::popcount(mu), overlap = std::popcount(term & mu);
  if (((qa * q - overlap) & 1) == 0) return {mu, 0};
  const MajoranaMask nu = term ^ mu;
  // i * B_a * B_mu = i^{1 + e_a + e_mu - e_nu} * ordering_sign * B_nu
  const int e = ((1 + detail::phase_exponent(term) + detail::phase_exponent(mu) - detail::phase_exponent(nu)) % 4 + 4) % 4;
  if (e % 2 != 0) throw NumericalError("adjoint_action: non-real commutator coefficient");
  return {nu, detail::ordering_sign(term, mu) * (e == 0 ? 1 : -1)};
}

/// Sparse adjoint map of one term: column mu has the single entry
/// 2 * sign[mu] in row partner[mu].
struct AdjointGenerator {
  MajoranaMask term = 0;
  int sites = 0;
  std::vector<MajoranaMask> partner;
  std::vector<std::int8_t> sign;
};

inline AdjointGenerator adjoint_generator(MajoranaMask term, int sites) {
  require(sites >= 1 && sites <= max_oracle_sites, "adjoint_generator: sites must lie in [1, 14]");
  require(term != 0 && term < (MajoranaMask{1} << sites), "adjoint_generator: term sites out of range");
  AdjointGenerator g;
  g.term = term;
  g.sites = sites;
  const std::size_t n = std::size_t{1} << sites;
  g.partner.resize(n);
  g.sign.resize(n);
  for (std::size_t mu = 0; mu < n; ++mu) {
    const AdjointAction a = adjoint_action(term, static_cast<MajoranaMask>(mu));
    g.partner[mu] = a.partner;
    g.sign[mu] = static_cast<std::int8_t>(a.sign);
  }
  return g;
}

inline AdjointGenerator bond_generator(int x, int y, int sites) {
  require(x != y, "bond_generator: bond sites must differ");
  require(x >= 0 && y >= 0 && x < sites && y < sites, "bond_generator: site out of range");
  return adjoint_generator((MajoranaMask{1} << x) | (MajoranaMask{1} << y), sites);
}

/// Row-major dense matrix of the generator (sites <= 8).
inline std::vector<double> dense_generator(const AdjointGenerator& g) {
  require(g.sites <= 8, "dense_generator: sites must be <= 8");
  const std::size_t n = g.partner.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t mu = 0; mu < n; ++mu)
    if (g.sign[mu] != 0) m[g.partner[mu] * n + mu] = 2.0 * g.sign[mu];
  return m;
}

inline OperatorWavefunction basis_operator(int sites, MajoranaMask mu) {
  require(sites >= 1 && sites <= max_oracle_sites, "basis_operator: sites must lie in [1, 14]");
  require(mu < (MajoranaMask{1} << sites), "basis_operator: mask out of range");
  OperatorWavefunction psi(std::size_t{1} << sites, 0.0);
  psi[mu] = 1.0;
  return psi;
}

inline double norm_squared(const OperatorWavefunction& psi) {
  double s = 0.0;
  for (double a : psi) s += a * a;
  return s;
}

/// exp(theta * G) psi: a rotation by 2 theta inside every coupled pair.
inline void apply_term(OperatorWavefunction& psi, const AdjointGenerator& g, double theta) {
  require(psi.size() == g.partner.size(), "apply_term: wavefunction size mismatch");
  const double c = std::cos(2.0 * theta), s = std::sin(2.0 * theta);
  for (std::size_t mu = 0; mu < psi.size(); ++mu) {
    const MajoranaMask nu = g.partner[mu];
    if (g.sign[mu] == 0 || nu < mu) continue;
    const double a = psi[mu], b = psi[nu], sg = g.sign[mu];
    psi[mu] = c * a - sg * s * b;
    psi[nu] = c * b + sg * s * a;
  }
}

enum class NoiseKind { Gaussian, Binary };

inline std::string to_string(NoiseKind k) { return k == NoiseKind::Gaussian ? "gaussian" : "binary"; }

/// Brownian couplings on a box: every bond with variance rate V, the
/// plaquette with variance rate J.
class BrownianCircuit {
 public:
  BrownianCircuit(const HeightBox& box, double V, double J) : box_(box), V_(V), J_(J) {
    box_.validate();
    require(box_.boundary != BoxBoundary::Absorbing, "quantum oracle: absorbing boundaries have no unitary analogue");
    require(box_.volume() <= max_oracle_sites, "quantum oracle: box volume must be <= 14");
    require(V >= 0.0 && std::isfinite(V), "quantum oracle: V must be >= 0");
    require(J >= 0.0 && std::isfinite(J), "quantum oracle: J must be >= 0");
    const int L = box_.volume();
    if (V > 0.0)
      for (auto [x, y] : box_.bonds()) {
        terms_.push_back(bond_generator(x, y, L));
        rates_.push_back(V);
      }
    if (J > 0.0) {
      terms_.push_back(adjoint_generator(static_cast<MajoranaMask>(box_.plaquette_mask()), L));
      rates_.push_back(J);
    }
  }

  int sites() const { return box_.volume(); }
  const HeightBox& box() const { return box_; }
  const std::vector<AdjointGenerator>& terms() const { return terms_; }

  /// One first-order step: every term in turn with an independent increment
  /// of variance rate * dt.
  void step(OperatorWavefunction& psi, double dt, Rng& rng, NoiseKind noise = NoiseKind::Gaussian) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const double sd = std::sqrt(rates_[i] * dt);
      double theta;
      if (noise == NoiseKind::Gaussian)
        theta = sd * normal(rng);
      else
        theta = (rng() >> 63) ? sd : -sd;
      apply_term(psi, terms_[i], theta);
    }
  }

  /// Exact average of |alpha|^2 over one step's increments: each coupled pair
  /// exchanges weight with probability E sin^2(2 theta).
  void averaged_step(std::vector<double>& f, double dt, NoiseKind noise = NoiseKind::Gaussian) const {
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const double var = rates_[i] * dt;
      const double p = noise == NoiseKind::Gaussian ? 0.5 * (1.0 - std::exp(-8.0 * var))
                                                    : std::pow(std::sin(2.0 * std::sqrt(var)), 2);
      const auto& g = terms_[i];
      for (std::size_t mu = 0; mu < f.size(); ++mu) {
        const MajoranaMask nu = g.partner[mu];
        if (g.sign[mu] == 0 || nu < mu) continue;
        const double a = f[mu], b = f[nu];
        f[mu] = a + p * (b - a);
        f[nu] = b + p * (a - b);
      }
    }
  }

 private:
  HeightBox box_;
  double V_, J_;
  std::vector<AdjointGenerator> terms_;
  std::vector<double> rates_;
};

inline void trotter_step(OperatorWavefunction& psi, const BrownianCircuit& circuit, double dt, Rng& rng,
                         NoiseKind noise = NoiseKind::Gaussian) {
  require(dt > 0.0, "trotter_step: dt must be positive");
  circuit.step(psi, dt, rng, noise);
}

struct OracleOptions {
  double dt = 1e-3;
  NoiseKind noise = NoiseKind::Gaussian;
  int initial_site = -1;  // -1 selects the plaquette corner
};

struct HeightEnsemble {
  std::vector<double> times;
  std::vector<std::vector<double>> distributions;  // averaged |alpha|^2 per mask, one per time
  std::uint64_t samples = 0;
  double dt = 0.0;
  double max_norm_drift = 0.0;
};

namespace detail {

inline std::vector<long> step_counts(const std::vector<double>& times, double dt) {
  require(dt > 0.0 && std::isfinite(dt), "oracle: dt must be positive");
  require(std::is_sorted(times.begin(), times.end()), "oracle: times must be nondecreasing");
  std::vector<long> steps;
  for (double t : times) {
    require(t >= 0.0, "oracle: times must be >= 0");
    steps.push_back(std::lround(t / dt));
  }
  return steps;
}

inline int oracle_initial_site(const BrownianCircuit& c, const OracleOptions& o) {
  const int site = o.initial_site < 0 ? c.box().origin() : o.initial_site;
  require(site < c.sites(), "oracle: initial site outside the box");
  return site;
}

}  // namespace detail

/// Average of |alpha_mu(t)|^2 over Brownian realizations; realization i uses
/// stream (seed, "oracle", i). Times are rounded to whole steps.
inline HeightEnsemble ensemble_height_distribution(const HeightBox& box, double V, double J,
                                                   const std::vector<double>& times, std::uint64_t samples,
                                                   std::uint64_t seed, const OracleOptions& options = {}) {
  require(samples >= 1, "oracle: samples must be >= 1");
  const BrownianCircuit circuit(box, V, J);
  const std::vector<long> steps = detail::step_counts(times, options.dt);
  const int site = detail::oracle_initial_site(circuit, options);
  const std::size_t n = std::size_t{1} << circuit.sites();
  const std::size_t block = 16;
  const std::size_t blocks = block_count(samples, block);
  std::vector<std::vector<std::vector<double>>> sums(blocks);
  std::vector<double> drift(blocks, 0.0);
  for_each_block(samples, block, [&](std::size_t b, std::size_t begin, std::size_t end) {
    sums[b].assign(times.size(), std::vector<double>(n, 0.0));
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, "oracle", i);
      OperatorWavefunction psi = basis_operator(circuit.sites(), MajoranaMask{1} << site);
      long done = 0;
      for (std::size_t k = 0; k < steps.size(); ++k) {
        for (; done < steps[k]; ++done) circuit.step(psi, options.dt, rng, options.noise);
        for (std::size_t m = 0; m < n; ++m) sums[b][k][m] += psi[m] * psi[m];
        drift[b] = std::max(drift[b], std::abs(norm_squared(psi) - 1.0));
      }
    }
  });
  HeightEnsemble out;
  out.times = times;
  out.samples = samples;
  out.dt = options.dt;
  out.distributions.assign(times.size(), std::vector<double>(n, 0.0));
  for (std::size_t b = 0; b < blocks; ++b) {
    out.max_norm_drift = std::max(out.max_norm_drift, drift[b]);
    for (std::size_t k = 0; k < times.size(); ++k)
      for (std::size_t m = 0; m < n; ++m) out.distributions[k][m] += sums[b][k][m];
  }
  for (auto& d : out.distributions)
    for (double& x : d) x /= static_cast<double>(samples);
  return out;
}

/// Infinite-sample limit of ensemble_height_distribution at the same dt.
inline std::vector<std::vector<double>> averaged_height_distribution(const HeightBox& box, double V, double J,
                                                                     const std::vector<double>& times,
                                                                     const OracleOptions& options = {}) {
  const BrownianCircuit circuit(box, V, J);
  const std::vector<long> steps = detail::step_counts(times, options.dt);
  const int site = detail::oracle_initial_site(circuit, options);
  std::vector<double> f = basis_operator(circuit.sites(), MajoranaMask{1} << site);
  std::vector<std::vector<double>> out;
  long done = 0;
  for (long target : steps) {
    for (; done < target; ++done) circuit.averaged_step(f, options.dt, options.noise);
    out.push_back(f);
  }
  return out;
}

}  // namespace scrambling
