#pragma once

// Discrete-time branching random walk: independent walkers that spawn n_i
// copies with probability p_i whenever they sit on the trigger site.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "scrambling/error.hpp"
#include "scrambling/lattice.hpp"
#include "scrambling/parallel.hpp"
#include "scrambling/rng.hpp"

namespace scrambling {

struct BranchRule {
  double p_i = 0.0;
  int n_i = 2;
  Site trigger_site;              // empty: the origin (box centre when bounded)
  bool on_entry_only = false;     // trial only when the step actually moved the particle
  bool plaquette_trigger = false; // trial on any of the four plaquette sites
  bool plaquette_spawn = false;   // spread spawned copies over the plaquette

  void validate(int dimension) const {
    require(p_i >= 0.0 && p_i <= 1.0, "branch rule: p_i must lie in [0, 1]");
    require(n_i >= 1, "branch rule: n_i must be >= 1");
    require(trigger_site.empty() || static_cast<int>(trigger_site.size()) == dimension,
            "branch rule: trigger_site dimension mismatch");
  }
};

struct WalkerOptions {
  std::uint64_t population_cap = 10'000'000;
  int batches = 20;  // independent batch means kept for error estimates
};

struct Trajectory {
  std::vector<std::uint64_t> sizes;  // N(t) for t = 0..t_max (held at the last value after a blow-up)
  bool blew_up = false;
  long blow_up_time = -1;
};

namespace detail {

/// Walker engine for one lattice; owns nothing that depends on the rng.
class WalkerEngine {
 public:
  WalkerEngine(const LatticeSpec& spec, const BranchRule& rule)
      : spec_(spec), rule_(rule), dist_(build_step_distribution(spec)) {
    spec_.validate();
    rule_.validate(spec_.dimension);
    require(spec_.boundary != Boundary::Absorbing,
            "walker: absorbing boundaries would remove particles; use unbounded or periodic");
    D_ = spec_.dimension;
    periodic_ = spec_.boundary == Boundary::Periodic;
    L_ = spec_.box_len;
    trigger_.assign(D_, periodic_ ? L_ / 2 : 0);
    if (!rule_.trigger_site.empty())
      for (int d = 0; d < D_; ++d) trigger_[d] = static_cast<std::int32_t>(rule_.trigger_site[d]);
    // Plaquette: four contiguous sites along axis 0 in 1D, the unit square otherwise.
    for (int c = 0; c < 4; ++c) {
      std::vector<std::int32_t> s = trigger_;
      if (D_ == 1) {
        s[0] += c;
      } else {
        s[0] += c & 1;
        s[1] += (c >> 1) & 1;
      }
      if (periodic_)
        for (auto& v : s) v = ((v % L_) + L_) % L_;
      plaquette_.push_back(s);
    }
    nn_ = spec_.kernel == Kernel::NearestNeighbor;
  }

  Trajectory run(long t_max, Rng& rng, std::uint64_t cap) const {
    Trajectory tr;
    tr.sizes.assign(static_cast<std::size_t>(t_max) + 1, 1);
    std::vector<std::int32_t> pos(trigger_.begin(), trigger_.end());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (long t = 1; t <= t_max; ++t) {
      const std::size_t n_before = pos.size() / D_;
      for (std::size_t i = 0; i < n_before; ++i) {
        std::int32_t* x = pos.data() + i * D_;
        const bool moved = step(x, rng, periodic_);
        if (rule_.p_i <= 0.0 || (rule_.on_entry_only && !moved)) continue;
        if (!on_trigger(x)) continue;
        if (unif(rng) >= rule_.p_i) continue;
        for (int c = 0; c < rule_.n_i; ++c) {
          const auto& s = rule_.plaquette_spawn ? plaquette_[c % 4] : trigger_;
          pos.insert(pos.end(), s.begin(), s.end());
        }
      }
      const std::uint64_t n = pos.size() / D_;
      tr.sizes[t] = n;
      if (n > cap) {
        tr.blew_up = true;
        tr.blow_up_time = t;
        std::fill(tr.sizes.begin() + t, tr.sizes.end(), n);
        break;
      }
    }
    return tr;
  }

  /// First time in (0, t_max] a single walker is back on the trigger, 0 if never.
  long first_return(long t_max, Rng& rng) const {
    std::vector<std::int32_t> x(trigger_.begin(), trigger_.end());
    for (long t = 1; t <= t_max; ++t) {
      step(x.data(), rng, periodic_);
      if (std::equal(x.begin(), x.end(), trigger_.begin())) return t;
    }
    return 0;
  }

  /// Squared displacement of a single walker after t_max steps, never wrapped.
  double squared_displacement(long t_max, Rng& rng) const {
    std::vector<std::int32_t> x(D_, 0);
    for (long t = 1; t <= t_max; ++t) step(x.data(), rng, false);
    double r2 = 0.0;
    for (std::int32_t v : x) r2 += static_cast<double>(v) * v;
    return r2;
  }

 private:
  std::int32_t wrap(std::int32_t v) const { return ((v % L_) + L_) % L_; }

  /// Moves one walker; returns whether its site changed.
  bool step(std::int32_t* x, Rng& rng, bool wrap_box) const {
    if (nn_) {
      const std::uint64_t r = ((rng() >> 32) * (2 * static_cast<std::uint64_t>(D_))) >> 32;
      const int axis = static_cast<int>(r >> 1);
      x[axis] += (r & 1) ? 1 : -1;
      if (wrap_box) x[axis] = wrap(x[axis]);
      return !wrap_box || L_ > 1;
    }
    const auto dy = dist_.displacement(dist_.sample_index(rng));
    bool moved = false;
    for (int d = 0; d < D_; ++d) {
      const std::int32_t before = x[d];
      x[d] += static_cast<std::int32_t>(dy[d]);
      if (wrap_box) x[d] = wrap(x[d]);
      moved = moved || x[d] != before;
    }
    return moved;
  }

  bool on_trigger(const std::int32_t* x) const {
    if (!rule_.plaquette_trigger) return std::equal(x, x + D_, trigger_.begin());
    for (const auto& s : plaquette_)
      if (std::equal(x, x + D_, s.begin())) return true;
    return false;
  }

  LatticeSpec spec_;
  BranchRule rule_;
  StepDistribution dist_;
  int D_ = 1;
  bool periodic_ = false;
  std::int32_t L_ = 0;
  bool nn_ = true;
  std::vector<std::int32_t> trigger_;
  std::vector<std::vector<std::int32_t>> plaquette_;
};

}  // namespace detail

/// One trajectory: move every particle, then give each particle on the
/// trigger a Bernoulli(p_i) chance to add n_i particles there.
inline Trajectory run_branching_walk(const LatticeSpec& spec, const BranchRule& rule, long t_max, Rng& rng,
                                     const WalkerOptions& options = {}) {
  require(t_max >= 1, "run_branching_walk: t_max must be >= 1");
  const detail::WalkerEngine engine(spec, rule);
  return engine.run(t_max, rng, options.population_cap);
}

/// Exponent of the mean size N(t) - 1 ~ t^beta exactly at the branching
/// threshold: beta = min(1, D/d_w - 1) with walk dimension d_w = min(alpha, 2)
/// (2 for nearest neighbours). Recurrent walks have their threshold at p_i = 0
/// and get beta = 0.
inline double critical_size_exponent(const LatticeSpec& spec) {
  const double walk_dim = spec.is_long_range() ? std::min(spec.alpha, 2.0) : 2.0;
  const double rho = spec.dimension / walk_dim;
  if (rho <= 1.0) return 0.0;
  return std::min(1.0, rho - 1.0);
}

struct SizeTrace {
  std::vector<long> times;
  std::vector<double> mean_size;
  std::vector<double> stderr_;
  std::uint64_t samples = 0;
  std::uint64_t aborted = 0;                     // trajectories stopped by the population cap
  std::vector<std::vector<double>> batch_means;  // per batch of trajectories, same times
  double reference_exponent = 0.0;               // critical_size_exponent of the lattice
};

/// Mean N(t) over `samples` trajectories; trajectory i uses stream (seed, i).
inline SizeTrace ensemble_size_trace(const LatticeSpec& spec, const BranchRule& rule, long t_max,
                                     std::uint64_t samples, std::uint64_t seed, const WalkerOptions& options = {}) {
  require(t_max >= 1, "ensemble_size_trace: t_max must be >= 1");
  require(samples >= 1, "ensemble_size_trace: samples must be >= 1");
  require(options.batches >= 1, "ensemble_size_trace: batches must be >= 1");
  const detail::WalkerEngine engine(spec, rule);
  const std::size_t T = static_cast<std::size_t>(t_max) + 1;
  const std::size_t n_batches = std::min<std::uint64_t>(options.batches, samples);
  const std::size_t per_batch = (samples + n_batches - 1) / n_batches;
  const std::size_t blocks = block_count(samples, per_batch);
  std::vector<std::vector<double>> sum(blocks, std::vector<double>(T, 0.0)), sum_sq = sum;
  std::vector<std::uint64_t> aborted(blocks, 0), count(blocks, 0);
  for_each_block(samples, per_batch, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, "walker", i);
      const Trajectory tr = engine.run(t_max, rng, options.population_cap);
      for (std::size_t t = 0; t < T; ++t) {
        const double n = static_cast<double>(tr.sizes[t]);
        sum[b][t] += n;
        sum_sq[b][t] += n * n;
      }
      aborted[b] += tr.blew_up;
      ++count[b];
    }
  });
  SizeTrace trace;
  trace.samples = samples;
  trace.reference_exponent = critical_size_exponent(spec);
  trace.times.resize(T);
  std::iota(trace.times.begin(), trace.times.end(), 0L);
  trace.mean_size.assign(T, 0.0);
  trace.stderr_.assign(T, 0.0);
  std::vector<double> total_sq(T, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    trace.aborted += aborted[b];
    std::vector<double> bm(T);
    for (std::size_t t = 0; t < T; ++t) {
      trace.mean_size[t] += sum[b][t];
      total_sq[t] += sum_sq[b][t];
      bm[t] = sum[b][t] / static_cast<double>(count[b]);
    }
    trace.batch_means.push_back(std::move(bm));
  }
  const double n = static_cast<double>(samples);
  for (std::size_t t = 0; t < T; ++t) {
    const double m = trace.mean_size[t] / n;
    trace.mean_size[t] = m;
    const double var = samples > 1 ? std::max(0.0, (total_sq[t] - n * m * m) / (n - 1.0)) : 0.0;
    trace.stderr_[t] = std::sqrt(var / n);
  }
  return trace;
}

enum class TraceClass { Saturating, Growing, Undecided };

inline std::string to_string(TraceClass c) {
  switch (c) {
    case TraceClass::Saturating: return "saturating";
    case TraceClass::Growing: return "growing";
    case TraceClass::Undecided: return "undecided";
  }
  return "?";
}

enum class ClassifierKind {
  CriticalExponent,  // late d ln(N-1) / d ln t against the critical exponent
  LogSlope,          // late d ln N / dt against zero
};

struct TraceClassification {
  TraceClass verdict = TraceClass::Undecided;
  double late_slope = 0.0;  // d ln N / dt over the window
  double slope_err = 0.0;
  double late_exponent = 0.0;  // d ln(N-1) / d ln t over the window
  double exponent_err = 0.0;
  double reference_exponent = 0.0;
};

namespace detail {

inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double xm = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - xm) * (y[i] - ym);
    sxx += (x[i] - xm) * (x[i] - xm);
  }
  return sxy / sxx;
}

struct BatchStat {
  double value = 0.0;
  double error = 0.0;
  bool ok = false;
};

/// Statistic on the full mean plus its standard error from the spread over batches.
template <typename Stat>
BatchStat batch_statistic(const SizeTrace& trace, std::size_t first, Stat&& stat) {
  BatchStat out;
  std::vector<double> full(trace.mean_size.begin() + first, trace.mean_size.end());
  const auto v = stat(full);
  if (!v) return out;
  out.value = *v;
  std::vector<double> per_batch;
  for (const auto& b : trace.batch_means) {
    std::vector<double> part(b.begin() + first, b.end());
    const auto s = stat(part);
    if (!s) return out;
    per_batch.push_back(*s);
  }
  const std::size_t B = per_batch.size();
  if (B < 2) return out;
  const double m = std::accumulate(per_batch.begin(), per_batch.end(), 0.0) / B;
  double var = 0.0;
  for (double s : per_batch) var += (s - m) * (s - m);
  out.error = std::sqrt(var / (B - 1) / B);
  out.ok = true;
  return out;
}

}  // namespace detail

/// Classifies the final window_fraction of a trace. By default the local
/// exponent of N - 1 against t is compared with the critical exponent stored
/// in the trace: well below means the mean is levelling off, well above means
/// it is running away. Errors come from the spread over trajectory batches.
inline TraceClassification classify_trace(const SizeTrace& trace, double window_fraction = 0.75,
                                          ClassifierKind kind = ClassifierKind::CriticalExponent) {
  require(trace.times.size() >= 50, "classify_trace: trace needs at least 50 points");
  require(window_fraction > 0.0 && window_fraction <= 1.0, "classify_trace: window_fraction must lie in (0, 1]");
  TraceClassification c;
  c.reference_exponent = trace.reference_exponent;
  const bool flat = std::all_of(trace.mean_size.begin(), trace.mean_size.end(),
                                [&](double m) { return m == trace.mean_size.front(); }) &&
                    std::all_of(trace.stderr_.begin(), trace.stderr_.end(), [](double s) { return s == 0.0; });
  if (flat) {
    c.verdict = TraceClass::Saturating;
    return c;
  }
  const std::size_t T = trace.times.size();
  std::size_t first = static_cast<std::size_t>(std::floor((1.0 - window_fraction) * (T - 1)));
  first = std::clamp<std::size_t>(first, 1, T - 3);
  std::vector<double> t(trace.times.begin() + first, trace.times.end());
  std::vector<double> log_t(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) log_t[i] = std::log(t[i]);

  auto slope_stat = [&](const std::vector<double>& m) -> std::optional<double> {
    std::vector<double> y(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!(m[i] > 0.0)) return std::nullopt;
      y[i] = std::log(m[i]);
    }
    return detail::fit_slope(t, y);
  };
  auto exponent_stat = [&](const std::vector<double>& m) -> std::optional<double> {
    std::vector<double> y(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!(m[i] > 1.0)) return std::nullopt;
      y[i] = std::log(m[i] - 1.0);
    }
    return detail::fit_slope(log_t, y);
  };
  const auto slope = detail::batch_statistic(trace, first, slope_stat);
  c.late_slope = slope.value;
  c.slope_err = slope.error;
  const auto expo = detail::batch_statistic(trace, first, exponent_stat);
  c.late_exponent = expo.value;
  c.exponent_err = expo.error;

  if (trace.aborted > 0) {
    c.verdict = TraceClass::Growing;
    return c;
  }
  if (kind == ClassifierKind::LogSlope || !expo.ok) {
    // Also the fallback when some batch never branched, so N - 1 has zeros.
    if (!slope.ok) return c;
    if (c.late_slope > 3.0 * c.slope_err)
      c.verdict = TraceClass::Growing;
    else if (std::abs(c.late_slope) < c.slope_err)
      c.verdict = TraceClass::Saturating;
    return c;
  }
  if (c.late_exponent > c.reference_exponent + 3.0 * c.exponent_err)
    c.verdict = TraceClass::Growing;
  else if (c.late_exponent < c.reference_exponent - 3.0 * c.exponent_err)
    c.verdict = TraceClass::Saturating;
  return c;
}

struct ScanOptions {
  double window_fraction = 0.75;
  ClassifierKind kind = ClassifierKind::CriticalExponent;
  long extended_t_max = 0;  // > t_max: rerun Undecided points inside the bracket this long
};

struct ScanRow {
  double p_i = 0.0;
  long t_max = 0;
  TraceClassification classification;
  std::uint64_t aborted = 0;
};

struct ScanResult {
  std::vector<ScanRow> rows;
  bool bracket_found = false;
  bool consistent = true;   // no Growing point below a Saturating one
  double bracket_lo = 0.0;  // largest Saturating p_i
  double bracket_hi = 0.0;  // smallest Growing p_i
};

namespace detail {

inline void update_bracket(ScanResult& out) {
  bool any_sat = false, any_grow = false;
  double lowest_grow = 0.0, highest_sat = 0.0;
  for (const auto& r : out.rows) {
    if (r.classification.verdict == TraceClass::Saturating) {
      highest_sat = any_sat ? std::max(highest_sat, r.p_i) : r.p_i;
      any_sat = true;
    }
    if (r.classification.verdict == TraceClass::Growing) {
      lowest_grow = any_grow ? std::min(lowest_grow, r.p_i) : r.p_i;
      any_grow = true;
    }
  }
  out.bracket_lo = highest_sat;
  out.bracket_hi = lowest_grow;
  out.consistent = !(any_sat && any_grow && lowest_grow < highest_sat);
  out.bracket_found = any_sat && any_grow && out.consistent;
}

}  // namespace detail

/// Classifies each p_i on the grid (all with the same seed) and brackets the
/// transition between the largest Saturating and the smallest Growing point.
inline ScanResult scan_transition(const LatticeSpec& spec, int n_i, const std::vector<double>& p_grid, long t_max,
                                  std::uint64_t samples, std::uint64_t seed, const WalkerOptions& walker = {},
                                  const ScanOptions& options = {}) {
  require(!p_grid.empty(), "scan_transition: empty p grid");
  require(std::is_sorted(p_grid.begin(), p_grid.end()), "scan_transition: p grid must be sorted");
  auto run = [&](double p, long steps) {
    BranchRule rule;
    rule.p_i = p;
    rule.n_i = n_i;
    const SizeTrace trace = ensemble_size_trace(spec, rule, steps, samples, seed, walker);
    return ScanRow{p, steps, classify_trace(trace, options.window_fraction, options.kind), trace.aborted};
  };
  ScanResult out;
  for (double p : p_grid) out.rows.push_back(run(p, t_max));
  detail::update_bracket(out);
  if (options.extended_t_max > t_max) {
    const bool has_lo = std::any_of(out.rows.begin(), out.rows.end(),
                                    [](const ScanRow& r) { return r.classification.verdict == TraceClass::Saturating; });
    const bool has_hi = std::any_of(out.rows.begin(), out.rows.end(),
                                    [](const ScanRow& r) { return r.classification.verdict == TraceClass::Growing; });
    for (auto& r : out.rows) {
      if (r.classification.verdict != TraceClass::Undecided) continue;
      if ((has_lo && r.p_i < out.bracket_lo) || (has_hi && r.p_i > out.bracket_hi)) continue;
      r = run(r.p_i, options.extended_t_max);
    }
    detail::update_bracket(out);
  }
  return out;
}

struct ReturnMcResult {
  double p_return = 0.0;
  double stderr_ = 0.0;
  long t_max = 0;
  std::uint64_t samples = 0;
  std::vector<long> first_return;  // per sample, 0 when no return by t_max

  /// Fraction returned by time t <= t_max; nondecreasing in t.
  double fraction_by(long t) const {
    std::uint64_t k = 0;
    for (long r : first_return) k += (r > 0 && r <= t);
    return samples ? static_cast<double>(k) / samples : 0.0;
  }
};

/// Fraction of single walkers that revisit the start within t_max steps.
inline ReturnMcResult estimate_return_probability_mc(const LatticeSpec& spec, long t_max, std::uint64_t samples,
                                                     std::uint64_t seed) {
  require(t_max >= 1, "estimate_return_probability_mc: t_max must be >= 1");
  require(samples >= 1, "estimate_return_probability_mc: samples must be >= 1");
  const detail::WalkerEngine engine(spec, BranchRule{});
  ReturnMcResult r;
  r.t_max = t_max;
  r.samples = samples;
  r.first_return.assign(samples, 0);
  for_each_block(samples, 1024, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, "return", i);
      r.first_return[i] = engine.first_return(t_max, rng);
    }
  });
  r.p_return = r.fraction_by(t_max);
  r.stderr_ = std::sqrt(r.p_return * (1.0 - r.p_return) / samples);
  return r;
}

struct MsdResult {
  double msd = 0.0;
  double stderr_ = 0.0;
  double per_step = 0.0;  // E|y|^2 of the step distribution
};

/// Mean squared displacement of a non-branching walker after t_max steps.
inline MsdResult mean_squared_displacement(const LatticeSpec& spec, long t_max, std::uint64_t samples,
                                           std::uint64_t seed) {
  require(t_max >= 1, "mean_squared_displacement: t_max must be >= 1");
  require(samples >= 2, "mean_squared_displacement: samples must be >= 2");
  const detail::WalkerEngine engine(spec.with_box(0, Boundary::Unbounded), BranchRule{});
  std::vector<double> r2(samples);
  for_each_block(samples, 1024, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, "msd", i);
      r2[i] = engine.squared_displacement(t_max, rng);
    }
  });
  MsdResult m;
  const double n = static_cast<double>(samples);
  m.msd = std::accumulate(r2.begin(), r2.end(), 0.0) / n;
  double var = 0.0;
  for (double v : r2) var += (v - m.msd) * (v - m.msd);
  m.stderr_ = std::sqrt(var / (n - 1.0) / n);
  m.per_step = build_step_distribution(spec).mean_squared_step();
  return m;
}

}  // namespace scrambling
