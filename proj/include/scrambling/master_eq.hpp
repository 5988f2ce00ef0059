#pragma once

// Height process on a finite box: bond flips at rate 4V where the two heights
// differ, a plaquette flip at rate 4J where the plaquette parity is odd.
// Configurations are bitmasks, events are XOR masks.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scrambling/error.hpp"
#include "scrambling/parallel.hpp"
#include "scrambling/rng.hpp"

namespace scrambling {

using HeightConfig = std::uint64_t;

enum class BoxBoundary {
  Periodic,
  Open,
  Absorbing,  // boundary sites also flip alone at rate 4V (bond to an empty sink)
};

inline std::string to_string(BoxBoundary b) {
  switch (b) {
    case BoxBoundary::Periodic: return "periodic";
    case BoxBoundary::Open: return "open";
    case BoxBoundary::Absorbing: return "absorbing";
  }
  return "?";
}

/// Rectangular box, site index = sum_j c_j * stride_j with axis 0 fastest.
struct HeightBox {
  std::vector<int> extents{8};
  BoxBoundary boundary = BoxBoundary::Periodic;

  static HeightBox chain(int length, BoxBoundary b = BoxBoundary::Periodic) { return {{length}, b}; }
  static HeightBox cube(int dimension, int side, BoxBoundary b = BoxBoundary::Periodic) {
    return {std::vector<int>(static_cast<std::size_t>(dimension), side), b};
  }

  int dimension() const { return static_cast<int>(extents.size()); }
  int volume() const {
    long v = 1;
    for (int e : extents) v *= e;
    return static_cast<int>(v);
  }

  void validate() const {
    require(!extents.empty(), "box: needs at least one axis");
    long v = 1;
    for (int e : extents) {
      require(e >= 1, "box: extents must be >= 1");
      v *= e;
      require(v <= 64, "box: volume must be <= 64");
    }
    if (dimension() == 1)
      require(extents[0] >= 4, "box: a 1D chain needs >= 4 sites for the plaquette");
    else
      require(extents[0] >= 2 && extents[1] >= 2, "box: the first two extents must be >= 2 for the plaquette");
  }

  int index(const std::vector<int>& c) const {
    int idx = 0, stride = 1;
    for (int j = 0; j < dimension(); ++j) {
      idx += c[j] * stride;
      stride *= extents[j];
    }
    return idx;
  }

  std::vector<int> coords(int idx) const {
    std::vector<int> c(extents.size());
    for (std::size_t j = 0; j < extents.size(); ++j) {
      c[j] = idx % extents[j];
      idx /= extents[j];
    }
    return c;
  }

  /// Plaquette corner: (L - 4)/2 in 1D, (L_j - 2)/2 per axis otherwise.
  int origin() const {
    std::vector<int> c(extents.size());
    for (std::size_t j = 0; j < extents.size(); ++j)
      c[j] = dimension() == 1 ? (extents[j] - 4) / 2 : std::max(0, (extents[j] - 2) / 2);
    return index(c);
  }

  /// Four contiguous sites in 1D, the unit square in axes 0 and 1 otherwise.
  HeightConfig plaquette_mask() const {
    const std::vector<int> o = coords(origin());
    HeightConfig m = 0;
    if (dimension() == 1) {
      for (int i = 0; i < 4; ++i) m |= HeightConfig{1} << (o[0] + i);
      return m;
    }
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        std::vector<int> c = o;
        c[0] += a;
        c[1] += b;
        m |= HeightConfig{1} << index(c);
      }
    return m;
  }

  /// Nearest-neighbour bonds, each unordered pair once.
  std::vector<std::pair<int, int>> bonds() const {
    std::vector<std::pair<int, int>> out;
    for (int s = 0; s < volume(); ++s) {
      const std::vector<int> c = coords(s);
      for (int j = 0; j < dimension(); ++j) {
        std::vector<int> n = c;
        if (c[j] + 1 < extents[j]) {
          n[j] = c[j] + 1;
        } else if (boundary == BoxBoundary::Periodic && extents[j] > 2) {
          n[j] = 0;
        } else {
          continue;
        }
        const int t = index(n);
        out.emplace_back(std::min(s, t), std::max(s, t));
      }
    }
    return out;
  }

  /// One entry per missing neighbour of a boundary site (Absorbing only).
  std::vector<int> sink_sites() const {
    std::vector<int> out;
    if (boundary != BoxBoundary::Absorbing) return out;
    for (int s = 0; s < volume(); ++s) {
      const std::vector<int> c = coords(s);
      for (int j = 0; j < dimension(); ++j) {
        if (extents[j] == 1) continue;
        if (c[j] == 0) out.push_back(s);
        if (c[j] == extents[j] - 1) out.push_back(s);
      }
    }
    return out;
  }
};

enum class EventKind { Bond, Sink, Plaquette };

inline std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::Bond: return "bond";
    case EventKind::Sink: return "sink";
    case EventKind::Plaquette: return "plaquette";
  }
  return "?";
}

/// Enabled iff popcount(h & mask) is odd; firing maps h to h ^ mask.
struct HeightEvent {
  HeightConfig mask = 0;
  double rate = 0.0;
  EventKind kind = EventKind::Bond;

  bool enabled(HeightConfig h) const { return (std::popcount(h & mask) & 1) != 0; }
};

struct RateTable {
  HeightBox box;
  double V = 0.0;
  double J = 0.0;
  std::vector<HeightEvent> events;

  int volume() const { return box.volume(); }
  double total_rate() const {
    double r = 0.0;
    for (const auto& e : events) r += e.rate;
    return r;
  }
};

inline RateTable build_rate_table(const HeightBox& box, double V, double J) {
  box.validate();
  require(V >= 0.0 && std::isfinite(V), "rates: V must be >= 0");
  require(J >= 0.0 && std::isfinite(J), "rates: J must be >= 0");
  RateTable t{box, V, J, {}};
  if (V > 0.0) {
    for (auto [x, y] : box.bonds())
      t.events.push_back({(HeightConfig{1} << x) | (HeightConfig{1} << y), 4.0 * V, EventKind::Bond});
    for (int s : box.sink_sites()) t.events.push_back({HeightConfig{1} << s, 4.0 * V, EventKind::Sink});
  }
  if (J > 0.0) t.events.push_back({box.plaquette_mask(), 4.0 * J, EventKind::Plaquette});
  return t;
}

inline HeightConfig single_site(int site) { return HeightConfig{1} << site; }

inline std::vector<HeightEvent> enabled_events(HeightConfig h, const RateTable& rates) {
  std::vector<HeightEvent> out;
  for (const auto& e : rates.events)
    if (e.enabled(h)) out.push_back(e);
  return out;
}

struct HeightTrajectory {
  std::vector<double> times;  // times[0] = 0, then one entry per event, then t_max
  std::vector<HeightConfig> configs;
  std::vector<EventKind> kinds;  // kinds[i] produced configs[i + 1]; padding repeats the last kind
  bool absorbed = false;         // no enabled events before t_max
  bool padded = false;           // final entry at t_max added without an event
};

namespace detail {

/// One Gillespie step: returns the index into rates.events or -1 when absorbed.
inline int draw_event(HeightConfig h, const RateTable& rates, Rng& rng, double& wait) {
  double total = 0.0;
  for (const auto& e : rates.events)
    if (e.enabled(h)) total += e.rate;
  if (total <= 0.0) return -1;
  wait = std::exponential_distribution<double>(total)(rng);
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  int last = -1;
  for (std::size_t i = 0; i < rates.events.size(); ++i) {
    const auto& e = rates.events[i];
    if (!e.enabled(h)) continue;
    last = static_cast<int>(i);
    if (u < e.rate) return last;
    u -= e.rate;
  }
  return last;
}

inline void require_rates(const RateTable& rates) {
  require(rates.V > 0.0 || rates.J > 0.0, "gillespie: V or J must be positive");
}

}  // namespace detail

/// Direct-method trajectory up to t_max.
inline HeightTrajectory gillespie_run(const RateTable& rates, HeightConfig initial, double t_max, Rng& rng) {
  detail::require_rates(rates);
  require(t_max >= 0.0 && std::isfinite(t_max), "gillespie: t_max must be >= 0");
  HeightTrajectory tr;
  tr.times.push_back(0.0);
  tr.configs.push_back(initial);
  double t = 0.0;
  HeightConfig h = initial;
  EventKind kind = EventKind::Bond;
  for (;;) {
    double wait = 0.0;
    const int e = detail::draw_event(h, rates, rng, wait);
    if (e < 0) {
      tr.absorbed = true;
      break;
    }
    if (t + wait > t_max) break;
    t += wait;
    h ^= rates.events[e].mask;
    kind = rates.events[e].kind;
    tr.times.push_back(t);
    tr.configs.push_back(h);
    tr.kinds.push_back(kind);
  }
  if (tr.times.back() < t_max) {
    tr.times.push_back(t_max);
    tr.configs.push_back(h);
    tr.kinds.push_back(tr.kinds.empty() ? kind : tr.kinds.back());
    tr.padded = true;
  }
  return tr;
}

/// Configuration at time t without recording the path.
inline HeightConfig gillespie_sample(const RateTable& rates, HeightConfig initial, double t, Rng& rng) {
  HeightConfig h = initial;
  double now = 0.0;
  for (;;) {
    double wait = 0.0;
    const int e = detail::draw_event(h, rates, rng, wait);
    if (e < 0 || now + wait > t) return h;
    now += wait;
    h ^= rates.events[e].mask;
  }
}

/// Empirical distribution over all 2^volume configurations at time t.
/// Sample i uses stream (seed, "gillespie", i).
inline std::vector<double> gillespie_distribution(const RateTable& rates, HeightConfig initial, double t,
                                                  std::uint64_t samples, std::uint64_t seed) {
  detail::require_rates(rates);
  require(rates.volume() <= 16, "gillespie_distribution: volume must be <= 16");
  require(samples >= 1, "gillespie_distribution: samples must be >= 1");
  const std::size_t n_states = std::size_t{1} << rates.volume();
  const std::size_t block = 8192;
  std::vector<std::vector<std::uint32_t>> counts(block_count(samples, block));
  for_each_block(samples, block, [&](std::size_t b, std::size_t begin, std::size_t end) {
    counts[b].assign(n_states, 0);
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, "gillespie", i);
      ++counts[b][gillespie_sample(rates, initial, t, rng)];
    }
  });
  std::vector<double> p(n_states, 0.0);
  for (const auto& c : counts)
    for (std::size_t s = 0; s < n_states; ++s) p[s] += c[s];
  for (double& x : p) x /= static_cast<double>(samples);
  return p;
}

/// Dense generator Q with Q[i * n + j] the rate j -> i; columns sum to zero.
inline std::vector<double> generator_matrix(const RateTable& rates) {
  require(rates.volume() <= 12, "generator_matrix: volume must be <= 12");
  const std::size_t n = std::size_t{1} << rates.volume();
  std::vector<double> q(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& e : rates.events) {
      if (!e.enabled(j)) continue;
      q[(j ^ e.mask) * n + j] += e.rate;
      q[j * n + j] -= e.rate;
    }
  }
  return q;
}

namespace detail {

/// v <- (I + Q / lambda) v, applied event by event.
inline void apply_uniformized(const RateTable& rates, double lambda, const std::vector<double>& v,
                              std::vector<double>& out) {
  out.assign(v.size(), 0.0);
  for (std::size_t s = 0; s < v.size(); ++s) {
    if (v[s] == 0.0) continue;
    double stay = v[s];
    for (const auto& e : rates.events) {
      if (!e.enabled(s)) continue;
      const double moved = v[s] * e.rate / lambda;
      out[s ^ e.mask] += moved;
      stay -= moved;
    }
    out[s] += stay;
  }
}

/// exp(tau Q) p by uniformization, truncating the Poisson series at mass tol.
inline std::vector<double> propagate(const RateTable& rates, const std::vector<double>& p, double tau, double tol) {
  const double lambda = rates.total_rate();
  if (tau == 0.0 || lambda == 0.0) return p;
  const int chunks = std::max(1, static_cast<int>(std::ceil(lambda * tau / 30.0)));
  const double h = tau / chunks;
  const double mean = lambda * h;
  std::vector<double> cur = p, term, next, acc;
  for (int c = 0; c < chunks; ++c) {
    term = cur;
    double weight = std::exp(-mean);
    double covered = weight;
    acc.assign(cur.size(), 0.0);
    for (std::size_t s = 0; s < cur.size(); ++s) acc[s] = weight * term[s];
    for (int k = 1; covered < 1.0 - tol / chunks && k < 10000; ++k) {
      apply_uniformized(rates, lambda, term, next);
      term.swap(next);
      weight *= mean / k;
      covered += weight;
      for (std::size_t s = 0; s < cur.size(); ++s) acc[s] += weight * term[s];
    }
    // Remaining Poisson mass goes to the last term so the total stays 1.
    for (std::size_t s = 0; s < cur.size(); ++s) acc[s] += (1.0 - covered) * term[s];
    cur.swap(acc);
  }
  return cur;
}

}  // namespace detail

/// Solution of the master equation at each of the (nondecreasing) times.
inline std::vector<std::vector<double>> exact_distribution(const RateTable& rates, HeightConfig initial,
                                                           const std::vector<double>& times, double tol = 1e-13) {
  require(rates.volume() <= 16, "exact_distribution: volume must be <= 16");
  require(std::is_sorted(times.begin(), times.end()), "exact_distribution: times must be nondecreasing");
  require(times.empty() || times.front() >= 0.0, "exact_distribution: times must be >= 0");
  const std::size_t n = std::size_t{1} << rates.volume();
  require(initial < n, "exact_distribution: initial configuration outside the box");
  std::vector<double> p(n, 0.0);
  p[initial] = 1.0;
  std::vector<std::vector<double>> out;
  double now = 0.0;
  for (double t : times) {
    p = detail::propagate(rates, p, t - now, tol);
    now = t;
    out.push_back(p);
  }
  return out;
}

inline std::vector<double> exact_distribution(const RateTable& rates, HeightConfig initial, double t,
                                              double tol = 1e-13) {
  return exact_distribution(rates, initial, std::vector<double>{t}, tol).front();
}

/// Expected number of set heights.
inline double mean_size_exact(const std::vector<double>& distribution) {
  double n = 0.0;
  for (std::size_t s = 0; s < distribution.size(); ++s) n += distribution[s] * std::popcount(s);
  return n;
}

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "total_variation: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return 0.5 * d;
}

}  // namespace scrambling
