#pragma once

// Experiment files: schema, validation and the runners behind the CLI.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scrambling/config.hpp"
#include "scrambling/csv.hpp"
#include "scrambling/error.hpp"
#include "scrambling/lattice.hpp"
#include "scrambling/lyapunov.hpp"
#include "scrambling/master_eq.hpp"
#include "scrambling/parallel.hpp"
#include "scrambling/percolation.hpp"
#include "scrambling/quantum_oracle.hpp"
#include "scrambling/spectral.hpp"
#include "scrambling/walker_mc.hpp"

namespace scrambling {

inline constexpr const char* toolkit_version = "0.1.0";

enum class ValueType { Integer, Real, String, Boolean, RealList, IntList };

inline std::string to_string(ValueType t) {
  switch (t) {
    case ValueType::Integer: return "integer";
    case ValueType::Real: return "number";
    case ValueType::String: return "string";
    case ValueType::Boolean: return "boolean";
    case ValueType::RealList: return "number or array of numbers";
    case ValueType::IntList: return "array of integers";
  }
  return "?";
}

struct KeySpec {
  std::string path;  // "key" or "section.key"
  ValueType type = ValueType::Real;
  bool required = false;
  std::optional<double> lo;
  std::optional<double> hi;
  bool lo_open = false;
  std::vector<std::string> choices;
  std::string help;
};

struct ExperimentInfo {
  std::string name;
  std::string description;
  bool uses_lattice = false;
  std::vector<KeySpec> keys;
  std::function<void(const ConfigDocument&, std::vector<Diagnostic>&)> cross_check;
};

namespace detail {

inline KeySpec key(std::string path, ValueType t, bool required, std::string help) {
  KeySpec k;
  k.path = std::move(path);
  k.type = t;
  k.required = required;
  k.help = std::move(help);
  return k;
}
inline KeySpec ranged(KeySpec k, std::optional<double> lo, std::optional<double> hi, bool lo_open = false) {
  k.lo = lo;
  k.hi = hi;
  k.lo_open = lo_open;
  return k;
}
inline KeySpec choice(KeySpec k, std::vector<std::string> c) {
  k.choices = std::move(c);
  return k;
}

inline const nlohmann::json* lookup(const ConfigDocument& doc, const std::string& path) {
  const auto dot = path.find('.');
  if (dot == std::string::npos) return doc.root.contains(path) ? &doc.root.at(path) : nullptr;
  const std::string sec = path.substr(0, dot), k = path.substr(dot + 1);
  if (!doc.root.contains(sec) || !doc.root.at(sec).is_object() || !doc.root.at(sec).contains(k)) return nullptr;
  return &doc.root.at(sec).at(k);
}

inline std::string text(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

inline std::vector<KeySpec> walker_keys(bool scan) {
  using VT = ValueType;
  std::vector<KeySpec> k{
      ranged(key("parameters.n_i", VT::Integer, true, "particles added per branching event"), 1, std::nullopt),
      ranged(key("parameters.t_max", VT::Integer, true, "time steps"), 1, std::nullopt),
      ranged(key("parameters.samples", VT::Integer, true, "trajectories"), 1, std::nullopt),
      ranged(key("parameters.population_cap", VT::Integer, false, "population that aborts a trajectory (1e7)"), 1,
             std::nullopt),
      key("parameters.on_entry_only", VT::Boolean, false, "branch only on arrival at the trigger (false)"),
      key("parameters.plaquette_trigger", VT::Boolean, false, "trigger on any plaquette site (false)"),
      key("parameters.plaquette_spawn", VT::Boolean, false, "spawn onto the plaquette sites (false)"),
  };
  if (scan) {
    k.push_back(ranged(key("parameters.p_grid", VT::RealList, true, "sorted branching probabilities"), 0, 1));
    k.push_back(ranged(key("parameters.extended_t_max", VT::Integer, false, "rerun Undecided points this long (0)"),
                       0, std::nullopt));
    k.push_back(ranged(key("parameters.window_fraction", VT::Real, false, "trailing fraction classified (0.75)"), 0,
                       1, true));
    k.push_back(choice(key("parameters.classifier", VT::String, false, "critical_exponent (default) or log_slope"),
                       {"critical_exponent", "log_slope"}));
  } else {
    k.push_back(ranged(key("parameters.p_i", VT::RealList, true, "branching probability or list"), 0, 1));
    k.push_back(ranged(key("parameters.stride", VT::Integer, false, "write every stride-th step (1)"), 1,
                       std::nullopt));
  }
  return k;
}

inline std::vector<KeySpec> quadrature_keys() {
  using VT = ValueType;
  return {
      ranged(key("parameters.nodes_per_axis", VT::Integer, false, "base quadrature nodes (24)"), 8, std::nullopt),
      ranged(key("parameters.refinement_levels", VT::Integer, false, "node doublings (2)"), 2, 6),
      choice(key("parameters.scheme", VT::String, false, "radial_pyramid (default) or tensor_gauss_legendre"),
             {"radial_pyramid", "tensor_gauss_legendre"}),
  };
}

inline void check_sorted(const ConfigDocument& doc, const std::string& path, std::vector<Diagnostic>& out) {
  const nlohmann::json* v = lookup(doc, path);
  if (!v || !v->is_array()) return;
  for (std::size_t i = 1; i < v->size(); ++i)
    if ((*v)[i].is_number() && (*v)[i - 1].is_number() && (*v)[i].get<double>() < (*v)[i - 1].get<double>()) {
      out.push_back({doc.line_of(path), path + ": values must be sorted ascending"});
      return;
    }
}

inline void check_present_if(const ConfigDocument& doc, const std::string& cond_path, const std::string& value,
                             const std::vector<std::string>& needed, std::vector<Diagnostic>& out) {
  const nlohmann::json* c = lookup(doc, cond_path);
  if (!c || !c->is_string() || c->get<std::string>() != value) return;
  for (const auto& n : needed)
    if (!lookup(doc, n))
      out.push_back({doc.line_of(cond_path), "missing key '" + n + "' (required when " + cond_path + " = \"" +
                                                 value + "\")"});
}

}  // namespace detail

inline const std::vector<ExperimentInfo>& experiment_catalog() {
  using VT = ValueType;
  using namespace detail;
  static const std::vector<ExperimentInfo> catalog = [] {
    std::vector<ExperimentInfo> c;
    {
      ExperimentInfo e{"size_trace", "mean particle number N(t) of the branching walk", true, walker_keys(false), {}};
      c.push_back(e);
    }
    {
      ExperimentInfo e{"walker_scan", "classify N(t) over a grid of p_i and bracket the transition", true,
                       walker_keys(true), {}};
      e.cross_check = [](const ConfigDocument& d, std::vector<Diagnostic>& out) {
        check_sorted(d, "parameters.p_grid", out);
      };
      c.push_back(e);
    }
    {
      ExperimentInfo e{"return_prob", "return probability of the walk (spectral integral or Monte Carlo)", true,
                       quadrature_keys(), {}};
      e.keys.push_back(choice(key("parameters.method", VT::String, false, "spectral (default) or monte_carlo"),
                              {"spectral", "monte_carlo"}));
      e.keys.push_back(ranged(key("parameters.t_max", VT::Integer, false, "monte_carlo: steps"), 1, std::nullopt));
      e.keys.push_back(ranged(key("parameters.samples", VT::Integer, false, "monte_carlo: walkers"), 1, std::nullopt));
      e.keys.push_back(ranged(key("parameters.sites", VT::IntList, false, "spectral: axis distances for p(x)"), 1,
                              std::nullopt));
      e.cross_check = [](const ConfigDocument& d, std::vector<Diagnostic>& out) {
        check_present_if(d, "parameters.method", "monte_carlo", {"parameters.t_max", "parameters.samples"}, out);
      };
      c.push_back(e);
    }
    {
      ExperimentInfo e{"lyapunov_curve", "kappa/V against J/V from the bound-state condition", false,
                       quadrature_keys(), {}};
      e.keys.push_back(ranged(key("parameters.dimensions", VT::IntList, true, "lattice dimensions"), 1, 6));
      e.keys.push_back(ranged(key("parameters.J_over_V", VT::RealList, true, "coupling grid"), 0, std::nullopt));
      e.keys.push_back(ranged(key("parameters.q", VT::Integer, false, "interaction order, even (4)"), 4, std::nullopt));
      e.keys.push_back(ranged(key("parameters.V", VT::Real, false, "hopping variance rate (1)"), 0, std::nullopt, true));
      e.keys.push_back(ranged(key("parameters.alpha", VT::Real, false, "long-range exponent; absent = nearest neighbour"),
                              0, std::nullopt, true));
      e.keys.push_back(ranged(key("parameters.tolerance", VT::Real, false, "bisection tolerance (1e-8)"), 0,
                              std::nullopt, true));
      e.keys.push_back(key("parameters.ode_check", VT::Boolean, false,
                           "integrate the size equation where 0.05 <= kappa/V <= 2 (false)"));
      e.cross_check = [](const ConfigDocument& d, std::vector<Diagnostic>& out) {
        const nlohmann::json* q = lookup(d, "parameters.q");
        if (q && q->is_number_integer() && q->get<long long>() % 2 != 0)
          out.push_back({d.line_of("parameters.q"), "parameters.q: must be even"});
        const nlohmann::json* a = lookup(d, "parameters.alpha");
        const nlohmann::json* o = lookup(d, "parameters.ode_check");
        if (a && o && o->is_boolean() && o->get<bool>())
          out.push_back({d.line_of("parameters.ode_check"), "parameters.ode_check: nearest-neighbour lattices only"});
      };
      c.push_back(e);
    }
    {
      ExperimentInfo e{"phase_diagram", "recurrence and return probability over (D, alpha)", false, quadrature_keys(),
                       {}};
      e.keys.push_back(ranged(key("parameters.dimensions", VT::IntList, true, "lattice dimensions"), 1, 6));
      e.keys.push_back(ranged(key("parameters.alphas", VT::RealList, true, "long-range exponents"), 0, std::nullopt,
                              true));
      e.keys.push_back(key("parameters.include_short_range", VT::Boolean, false, "add nearest-neighbour rows (true)"));
      e.keys.push_back(ranged(key("parameters.q", VT::Integer, false, "interaction order for J*/V (4)"), 4,
                              std::nullopt));
      c.push_back(e);
    }
    {
      ExperimentInfo e{"percolation", "Galton-Watson survival on the percolation tree", false, {}, {}};
      e.keys = {
          choice(key("parameters.law", VT::String, false, "fixed, mixed (default) or walker"),
                 {"fixed", "mixed", "walker"}),
          ranged(key("parameters.branching", VT::Real, false, "mean offspring n (fixed, mixed)"), 1, std::nullopt),
          ranged(key("parameters.edge_keep_prob", VT::RealList, false, "edge probabilities p (fixed, mixed)"), 0, 1),
          ranged(key("parameters.n_i", VT::Integer, false, "walker: particles per branching"), 1, std::nullopt),
          ranged(key("parameters.p_i", VT::RealList, false, "walker: branching probabilities"), 0, 1),
          ranged(key("parameters.p_r", VT::Real, false, "walker: return probability"), 0, 1),
          ranged(key("parameters.max_generations", VT::Integer, true, "depth"), 10, std::nullopt),
          ranged(key("parameters.samples", VT::Integer, true, "trees"), 1, std::nullopt),
          ranged(key("parameters.cap", VT::Integer, false, "generation size counted as survival (1e4)"), 1,
                 std::nullopt),
      };
      e.cross_check = [](const ConfigDocument& d, std::vector<Diagnostic>& out) {
        const nlohmann::json* law = lookup(d, "parameters.law");
        const std::string l = law && law->is_string() ? law->get<std::string>() : "mixed";
        std::vector<std::string> need = l == "walker"
                                            ? std::vector<std::string>{"parameters.n_i", "parameters.p_i", "parameters.p_r"}
                                            : std::vector<std::string>{"parameters.branching", "parameters.edge_keep_prob"};
        for (const auto& n : need)
          if (!lookup(d, n)) out.push_back({d.line_of("parameters.law"), "missing key '" + n + "' for law " + l});
        const nlohmann::json* b = lookup(d, "parameters.branching");
        if (l == "fixed" && b && b->is_number() && b->get<double>() != std::floor(b->get<double>()))
          out.push_back({d.line_of("parameters.branching"), "parameters.branching: fixed law needs an integer"});
      };
      c.push_back(e);
    }
    {
      ExperimentInfo e{"oracle_check", "exact master equation against the quantum oracle or Gillespie", false, {}, {}};
      e.keys = {
          choice(key("parameters.engine", VT::String, false, "quantum (default) or gillespie"), {"quantum", "gillespie"}),
          ranged(key("parameters.extents", VT::IntList, true, "box extents, volume <= 16"), 1, std::nullopt),
          choice(key("parameters.boundary", VT::String, false, "periodic (default), open or absorbing"),
                 {"periodic", "open", "absorbing"}),
          ranged(key("parameters.V", VT::Real, true, "bond variance rate"), 0, std::nullopt),
          ranged(key("parameters.J", VT::Real, true, "plaquette variance rate"), 0, std::nullopt),
          ranged(key("parameters.times", VT::RealList, true, "output times"), 0, std::nullopt),
          ranged(key("parameters.samples", VT::Integer, true, "realizations"), 1, std::nullopt),
          ranged(key("parameters.dt", VT::Real, false, "quantum: time step (1e-3)"), 0, std::nullopt, true),
          choice(key("parameters.noise", VT::String, false, "quantum: gaussian (default) or binary"),
                 {"gaussian", "binary"}),
          ranged(key("parameters.initial_site", VT::Integer, false, "initial site (plaquette corner)"), 0,
                 std::nullopt),
          key("parameters.dump_trajectory", VT::Boolean, false, "gillespie: write one trajectory (false)"),
      };
      e.cross_check = [](const ConfigDocument& d, std::vector<Diagnostic>& out) {
        check_sorted(d, "parameters.times", out);
        const nlohmann::json* v = lookup(d, "parameters.V");
        const nlohmann::json* j = lookup(d, "parameters.J");
        if (v && j && v->is_number() && j->is_number() && v->get<double>() == 0.0 && j->get<double>() == 0.0)
          out.push_back({d.line_of("parameters.V"), "parameters.V, parameters.J: at least one must be positive"});
        const nlohmann::json* ext = lookup(d, "parameters.extents");
        if (ext && ext->is_array()) {
          long vol = 1;
          bool ints = true;
          for (const auto& x : *ext) {
            if (!x.is_number_integer() || x.get<long long>() < 1) ints = false;
            else vol *= x.get<long>();
          }
          if (ints && vol > 16)
            out.push_back({d.line_of("parameters.extents"), "parameters.extents: volume " + std::to_string(vol) +
                                                                " exceeds 16"});
          if (ints && !ext->empty() && vol <= 16) {
            HeightBox box;
            box.extents.clear();
            for (const auto& x : *ext) box.extents.push_back(x.get<int>());
            try {
              box.validate();
            } catch (const InvalidArgument& err) {
              out.push_back({d.line_of("parameters.extents"), "parameters.extents: " + std::string(err.what())});
            }
          }
        }
        const nlohmann::json* eng = lookup(d, "parameters.engine");
        const nlohmann::json* bnd = lookup(d, "parameters.boundary");
        const bool quantum = !eng || (eng->is_string() && eng->get<std::string>() == "quantum");
        if (quantum && bnd && bnd->is_string() && bnd->get<std::string>() == "absorbing")
          out.push_back({d.line_of("parameters.boundary"), "parameters.boundary: absorbing needs engine = \"gillespie\""});
      };
      c.push_back(e);
    }
    return c;
  }();
  return catalog;
}

inline const ExperimentInfo* find_experiment(const std::string& name) {
  for (const auto& e : experiment_catalog())
    if (e.name == name) return &e;
  return nullptr;
}

namespace detail {

inline std::vector<KeySpec> common_keys() {
  using VT = ValueType;
  std::vector<std::string> names;
  for (const auto& e : experiment_catalog()) names.push_back(e.name);
  return {
      choice(key("experiment", VT::String, true, "experiment name"), names),
      ranged(key("seed", VT::Integer, true, "master seed"), 0, std::nullopt),
      key("output_path", VT::String, true, "output directory"),
  };
}

inline std::vector<KeySpec> lattice_keys() {
  using VT = ValueType;
  return {
      ranged(key("lattice.dimension", VT::Integer, true, "D"), 1, 6),
      choice(key("lattice.kernel", VT::String, false, "nearest_neighbor (default) or long_range"),
             {"nearest_neighbor", "long_range"}),
      ranged(key("lattice.alpha", VT::Real, false, "long-range exponent"), 0, std::nullopt, true),
      ranged(key("lattice.r_max", VT::Integer, false, "long-range truncation radius (0 = default)"), 0, std::nullopt),
      choice(key("lattice.boundary", VT::String, false, "unbounded (default), periodic or absorbing"),
             {"unbounded", "periodic", "absorbing"}),
      ranged(key("lattice.box_len", VT::Integer, false, "box side"), 4, std::nullopt),
  };
}

inline std::string range_text(const KeySpec& k) {
  std::string lo = k.lo ? format_number(*k.lo) : "-inf";
  std::string hi = k.hi ? format_number(*k.hi) : "inf";
  return std::string(k.lo_open ? "(" : "[") + lo + ", " + hi + (k.hi ? "]" : ")");
}

inline void check_value(const ConfigDocument& doc, const KeySpec& k, const nlohmann::json& v,
                        std::vector<Diagnostic>& out) {
  const int line = doc.line_of(k.path);
  auto bad_type = [&] { out.push_back({line, k.path + ": expected " + to_string(k.type) + ", got " + text(v)}); };
  auto in_range = [&](double x) {
    if (std::isnan(x)) return false;
    if (k.lo && (k.lo_open ? x <= *k.lo : x < *k.lo)) return false;
    if (k.hi && x > *k.hi) return false;
    return true;
  };
  auto check_number = [&](const nlohmann::json& x) {
    if (!in_range(x.get<double>()))
      out.push_back({line, k.path + ": value " + text(x) + " is outside the range " + range_text(k)});
  };
  switch (k.type) {
    case ValueType::Integer:
      if (!v.is_number_integer()) return bad_type();
      return check_number(v);
    case ValueType::Real:
      if (!v.is_number()) return bad_type();
      return check_number(v);
    case ValueType::Boolean:
      if (!v.is_boolean()) return bad_type();
      return;
    case ValueType::String:
      if (!v.is_string()) return bad_type();
      if (!k.choices.empty() &&
          std::find(k.choices.begin(), k.choices.end(), v.get<std::string>()) == k.choices.end()) {
        std::string list;
        for (const auto& c : k.choices) list += (list.empty() ? "" : ", ") + c;
        out.push_back({line, k.path + ": unknown value \"" + v.get<std::string>() + "\" (expected one of " + list + ")"});
      }
      return;
    case ValueType::RealList:
      if (v.is_number()) return check_number(v);
      if (!v.is_array() || v.empty()) return bad_type();
      for (const auto& x : v) {
        if (!x.is_number()) return bad_type();
        check_number(x);
      }
      return;
    case ValueType::IntList:
      if (!v.is_array() || v.empty()) return bad_type();
      for (const auto& x : v) {
        if (!x.is_number_integer()) return bad_type();
        check_number(x);
      }
      return;
  }
}

}  // namespace detail

/// Empty iff the document describes a runnable experiment.
inline std::vector<Diagnostic> validate_config(const ConfigDocument& doc) {
  std::vector<Diagnostic> out = doc.syntax_errors;
  std::vector<KeySpec> keys = detail::common_keys();
  const ExperimentInfo* info = nullptr;
  if (const nlohmann::json* e = detail::lookup(doc, "experiment"); e && e->is_string()) info = find_experiment(e->get<std::string>());
  if (info) {
    if (info->uses_lattice) {
      const auto lk = detail::lattice_keys();
      keys.insert(keys.end(), lk.begin(), lk.end());
    }
    keys.insert(keys.end(), info->keys.begin(), info->keys.end());
  }
  std::set<std::string> known;
  for (const auto& k : keys) {
    known.insert(k.path);
    const nlohmann::json* v = detail::lookup(doc, k.path);
    if (!v) {
      if (k.required) out.push_back({0, "missing required key '" + k.path + "'"});
      continue;
    }
    detail::check_value(doc, k, *v, out);
  }
  std::set<std::string> sections;
  if (info) {
    sections.insert("parameters");
    if (info->uses_lattice) sections.insert("lattice");
  }
  for (const auto& [name, value] : doc.root.items()) {
    if (value.is_object()) {
      if (!sections.count(name)) {
        if (info) out.push_back({doc.line_of(name), "unknown section [" + name + "]"});
        continue;
      }
      for (const auto& [k, v] : value.items()) {
        (void)v;
        const std::string path = name + "." + k;
        if (!known.count(path)) out.push_back({doc.line_of(path), "unknown key '" + path + "'"});
      }
    } else if (!known.count(name)) {
      out.push_back({doc.line_of(name), "unknown key '" + name + "'"});
    }
  }
  if (info && info->uses_lattice) {
    const nlohmann::json* kern = detail::lookup(doc, "lattice.kernel");
    if (kern && kern->is_string() && kern->get<std::string>() == "long_range" && !detail::lookup(doc, "lattice.alpha"))
      out.push_back({doc.line_of("lattice.kernel"), "missing key 'lattice.alpha' (required for a long_range kernel)"});
    const nlohmann::json* bnd = detail::lookup(doc, "lattice.boundary");
    if (bnd && bnd->is_string() && bnd->get<std::string>() != "unbounded" && !detail::lookup(doc, "lattice.box_len"))
      out.push_back({doc.line_of("lattice.boundary"), "missing key 'lattice.box_len' (required for a bounded lattice)"});
  }
  if (info && info->cross_check) info->cross_check(doc, out);
  std::stable_sort(out.begin(), out.end(), [](const Diagnostic& a, const Diagnostic& b) {
    return (a.line == 0 ? 1 << 30 : a.line) < (b.line == 0 ? 1 << 30 : b.line);
  });
  return out;
}

/// Typed access to a validated document.
class ExperimentConfig {
 public:
  explicit ExperimentConfig(ConfigDocument doc) : doc_(std::move(doc)) {
    auto diags = validate_config(doc_);
    if (!diags.empty()) throw ConfigError(std::move(diags));
  }

  std::string experiment() const { return doc_.root.at("experiment").get<std::string>(); }
  std::uint64_t seed() const { return doc_.root.at("seed").get<std::uint64_t>(); }
  std::string output_path() const { return doc_.root.at("output_path").get<std::string>(); }
  const nlohmann::json& json() const { return doc_.root; }

  bool has(const std::string& path) const { return detail::lookup(doc_, path) != nullptr; }
  long long integer(const std::string& path, long long fallback = 0) const {
    const nlohmann::json* v = detail::lookup(doc_, path);
    return v ? v->get<long long>() : fallback;
  }
  double real(const std::string& path, double fallback = 0.0) const {
    const nlohmann::json* v = detail::lookup(doc_, path);
    return v ? v->get<double>() : fallback;
  }
  bool boolean(const std::string& path, bool fallback = false) const {
    const nlohmann::json* v = detail::lookup(doc_, path);
    return v ? v->get<bool>() : fallback;
  }
  std::string string(const std::string& path, const std::string& fallback = "") const {
    const nlohmann::json* v = detail::lookup(doc_, path);
    return v ? v->get<std::string>() : fallback;
  }
  std::vector<double> reals(const std::string& path) const {
    const nlohmann::json* v = detail::lookup(doc_, path);
    if (!v) return {};
    if (v->is_number()) return {v->get<double>()};
    return v->get<std::vector<double>>();
  }
  std::vector<int> integers(const std::string& path) const {
    const nlohmann::json* v = detail::lookup(doc_, path);
    return v ? v->get<std::vector<int>>() : std::vector<int>{};
  }

  LatticeSpec lattice() const {
    LatticeSpec s;
    s.dimension = static_cast<int>(integer("lattice.dimension", 1));
    if (string("lattice.kernel", "nearest_neighbor") == "long_range") {
      s.kernel = Kernel::LongRange;
      s.alpha = real("lattice.alpha");
    }
    s.r_max = static_cast<int>(integer("lattice.r_max", 0));
    const std::string b = string("lattice.boundary", "unbounded");
    s.boundary = b == "periodic" ? Boundary::Periodic : b == "absorbing" ? Boundary::Absorbing : Boundary::Unbounded;
    s.box_len = static_cast<int>(integer("lattice.box_len", 0));
    return s;
  }

  QuadratureSpec quadrature() const {
    QuadratureSpec q;
    q.nodes_per_axis = static_cast<int>(integer("parameters.nodes_per_axis", q.nodes_per_axis));
    q.refinement_levels = static_cast<int>(integer("parameters.refinement_levels", q.refinement_levels));
    if (string("parameters.scheme", "radial_pyramid") == "tensor_gauss_legendre")
      q.scheme = QuadratureScheme::TensorGaussLegendre;
    return q;
  }

 private:
  ConfigDocument doc_;
};

struct OutputFile {
  std::string name;
  std::vector<std::pair<std::string, std::string>> columns;  // column, unit
};

struct RunReport {
  std::vector<OutputFile> outputs;
  nlohmann::json summary = nlohmann::json::object();
};

namespace detail {

class OutputSink {
 public:
  explicit OutputSink(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const CsvTable& table, const std::vector<std::string>& units,
             RunReport& report) {
    table.write(dir_ / name);
    OutputFile f{name, {}};
    for (std::size_t i = 0; i < table.header().size(); ++i)
      f.columns.emplace_back(table.header()[i], i < units.size() ? units[i] : "");
    report.outputs.push_back(std::move(f));
  }

 private:
  std::filesystem::path dir_;
};

inline BranchRule branch_rule(const ExperimentConfig& c, double p_i) {
  BranchRule r;
  r.p_i = p_i;
  r.n_i = static_cast<int>(c.integer("parameters.n_i"));
  r.on_entry_only = c.boolean("parameters.on_entry_only");
  r.plaquette_trigger = c.boolean("parameters.plaquette_trigger");
  r.plaquette_spawn = c.boolean("parameters.plaquette_spawn");
  return r;
}

inline WalkerOptions walker_options(const ExperimentConfig& c) {
  WalkerOptions o;
  o.population_cap = static_cast<std::uint64_t>(c.integer("parameters.population_cap", 10'000'000));
  return o;
}

inline std::string p_label(double p) {
  std::string s = format_number(p);
  for (char& ch : s)
    if (ch == '.') ch = 'p';
  return s;
}

inline RunReport run_size_trace(const ExperimentConfig& c, OutputSink& sink) {
  RunReport rep;
  const LatticeSpec spec = c.lattice();
  const long t_max = static_cast<long>(c.integer("parameters.t_max"));
  const auto samples = static_cast<std::uint64_t>(c.integer("parameters.samples"));
  const long stride = static_cast<long>(c.integer("parameters.stride", 1));
  for (double p : c.reals("parameters.p_i")) {
    const SizeTrace tr = ensemble_size_trace(spec, branch_rule(c, p), t_max, samples, c.seed(), walker_options(c));
    CsvTable t({"t", "mean_N", "stderr_N", "samples"});
    for (std::size_t i = 0; i < tr.times.size(); ++i)
      if (tr.times[i] % stride == 0 || i + 1 == tr.times.size())
        t.row() << tr.times[i] << tr.mean_size[i] << tr.stderr_[i] << tr.samples;
    const std::string name = "size_trace_p" + p_label(p) + ".csv";
    sink.write(name, t, {"steps", "particles", "particles", "trajectories"}, rep);
    rep.summary["traces"].push_back({{"p_i", p}, {"file", name}, {"aborted", tr.aborted},
                                     {"final_mean_N", tr.mean_size.back()}});
  }
  return rep;
}

inline RunReport run_walker_scan(const ExperimentConfig& c, OutputSink& sink) {
  RunReport rep;
  ScanOptions so;
  so.window_fraction = c.real("parameters.window_fraction", 0.75);
  so.kind = c.string("parameters.classifier", "critical_exponent") == "log_slope" ? ClassifierKind::LogSlope
                                                                                   : ClassifierKind::CriticalExponent;
  so.extended_t_max = static_cast<long>(c.integer("parameters.extended_t_max", 0));
  const ScanResult r = scan_transition(c.lattice(), static_cast<int>(c.integer("parameters.n_i")),
                                       c.reals("parameters.p_grid"), static_cast<long>(c.integer("parameters.t_max")),
                                       static_cast<std::uint64_t>(c.integer("parameters.samples")), c.seed(),
                                       walker_options(c), so);
  CsvTable t({"p_i", "classification", "late_slope", "slope_err"});
  for (const auto& row : r.rows)
    t.row() << row.p_i << to_string(row.classification.verdict) << row.classification.late_slope
            << row.classification.slope_err;
  sink.write("walker_scan.csv", t, {"probability", "saturating|growing|undecided", "1/step", "1/step"}, rep);
  rep.summary["bracket_found"] = r.bracket_found;
  rep.summary["consistent"] = r.consistent;
  if (r.bracket_found) rep.summary["bracket"] = {r.bracket_lo, r.bracket_hi};
  for (const auto& row : r.rows)
    rep.summary["rows"].push_back({{"p_i", row.p_i},
                                   {"t_max", row.t_max},
                                   {"late_exponent", row.classification.late_exponent},
                                   {"exponent_err", row.classification.exponent_err},
                                   {"reference_exponent", row.classification.reference_exponent},
                                   {"aborted", row.aborted}});
  return rep;
}

inline std::string alpha_cell(const LatticeSpec& s) { return s.is_long_range() ? format_number(s.alpha) : ""; }

inline RunReport run_return_prob(const ExperimentConfig& c, OutputSink& sink) {
  RunReport rep;
  const LatticeSpec spec = c.lattice();
  const std::optional<double> alpha = spec.is_long_range() ? std::optional<double>(spec.alpha) : std::nullopt;
  const std::string cls = to_string(recurrence_classification(spec.dimension, alpha));
  CsvTable t({"D", "alpha", "p_return", "error", "classification"});
  if (c.string("parameters.method", "spectral") == "monte_carlo") {
    const ReturnMcResult r = estimate_return_probability_mc(spec, static_cast<long>(c.integer("parameters.t_max")),
                                                           static_cast<std::uint64_t>(c.integer("parameters.samples")),
                                                           c.seed());
    t.row() << spec.dimension << alpha_cell(spec) << r.p_return << r.stderr_ << cls;
    rep.summary["method"] = "monte_carlo";
  } else {
    const ReturnProbabilityResult r = return_probability(spec, c.quadrature());
    t.row() << spec.dimension << alpha_cell(spec) << r.p_return << r.quadrature_error
            << (r.recurrent ? "recurrent" : "transient");
    rep.summary["method"] = "spectral";
    rep.summary["green_sum"] = r.recurrent ? nlohmann::json("divergent") : nlohmann::json(r.green_sum);
    rep.summary["shell_exponent"] = r.shell_exponent;
    if (c.has("parameters.sites")) {
      CsvTable s({"x", "p_return", "error"});
      for (int x : c.integers("parameters.sites")) {
        Site site(spec.dimension, 0);
        site[0] = x;
        const SiteReturnResult sr = return_probability_to_site(spec, site, c.quadrature());
        s.row() << x << sr.value << sr.error;
      }
      sink.write("return_to_site.csv", s, {"lattice units", "probability", "probability"}, rep);
    }
  }
  sink.write("return_prob.csv", t, {"", "", "probability", "probability", "recurrent|transient"}, rep);
  return rep;
}

}  // namespace detail

/// Box side for the size-equation check: a dozen bound-state decay lengths.
inline int ode_box_len(int dimension, double kappa_over_V) {
  const int half = static_cast<int>(std::ceil(12.0 / std::sqrt(kappa_over_V)));
  const int cap = dimension >= 3 ? 30 : 75;
  return 2 * std::clamp(half, 20, cap) + 1;
}

/// Integration time for the size-equation check.
inline double ode_t_max(double kappa_over_V) { return std::max(20.0, 15.0 / kappa_over_V); }

namespace detail {

inline RunReport run_lyapunov_curve(const ExperimentConfig& c, OutputSink& sink) {
  RunReport rep;
  const int q = static_cast<int>(c.integer("parameters.q", 4));
  const double V = c.real("parameters.V", 1.0);
  const double tol = c.real("parameters.tolerance", 1e-8);
  const bool ode = c.boolean("parameters.ode_check");
  const QuadratureSpec quad = c.quadrature();
  CsvTable t({"D", "q", "J_over_V", "kappa_over_V", "phase"});
  CsvTable o({"D", "q", "J_over_V", "kappa_over_V", "ode_kappa_over_V", "relative_difference"});
  for (int D : c.integers("parameters.dimensions")) {
    SykParams p;
    p.V = V;
    p.q = q;
    p.spec = c.has("parameters.alpha") ? LatticeSpec::long_range(D, c.real("parameters.alpha"))
                                       : LatticeSpec::nearest_neighbor(D);
    const double jc = critical_coupling(p, quad);
    rep.summary["critical_J_over_V"][std::to_string(D)] = jc;
    for (double j : c.reals("parameters.J_over_V")) {
      p.J = j * V;
      const LyapunovResult r = solve_kappa(p, quad, tol);
      t.row() << D << q << j << r.kappa_over_V << to_string(r.phase);
      if (ode && r.kappa_over_V >= 0.05 && r.kappa_over_V <= 2.0) {
        const OdeGrowthResult g =
            ode_growth_rate(p, ode_box_len(D, r.kappa_over_V), ode_t_max(r.kappa_over_V));
        o.row() << D << q << j << r.kappa_over_V << g.kappa_over_V
                << std::abs(g.kappa_over_V - r.kappa_over_V) / r.kappa_over_V;
      }
    }
  }
  sink.write("lyapunov_curve.csv", t, {"", "", "J/V", "kappa/V", "escape|scrambling"}, rep);
  if (ode) sink.write("ode_check.csv", o, {"", "", "J/V", "kappa/V", "kappa/V", "relative"}, rep);
  return rep;
}

inline RunReport run_phase_diagram(const ExperimentConfig& c, OutputSink& sink) {
  RunReport rep;
  std::vector<std::optional<double>> alphas;
  if (c.boolean("parameters.include_short_range", true)) alphas.push_back(std::nullopt);
  for (double a : c.reals("parameters.alphas")) alphas.push_back(a);
  const int q = static_cast<int>(c.integer("parameters.q", 4));
  const auto rows = phase_table(c.integers("parameters.dimensions"), alphas, c.quadrature());
  CsvTable t({"D", "alpha", "p_return", "error", "classification"});
  CsvTable j({"D", "alpha", "critical_J_over_V"});
  for (const auto& r : rows) {
    const std::string a = r.alpha ? format_number(*r.alpha) : "";
    t.row() << r.dimension << a << r.result.p_return << r.result.quadrature_error << to_string(r.classification);
    const double weight = r.alpha ? lattice_zeta(r.dimension, *r.alpha) : 2.0 * r.dimension;
    const double jc = r.result.recurrent ? 0.0 : weight / ((q - 2) * r.result.green_sum);
    j.row() << r.dimension << a << jc;
  }
  sink.write("phase_diagram.csv", t, {"", "", "probability", "probability", "recurrent|transient"}, rep);
  sink.write("critical_coupling.csv", j, {"", "", "J/V"}, rep);
  return rep;
}

inline RunReport run_percolation(const ExperimentConfig& c, OutputSink& sink) {
  RunReport rep;
  const std::string law = c.string("parameters.law", "mixed");
  const int gens = static_cast<int>(c.integer("parameters.max_generations"));
  const auto samples = static_cast<std::uint64_t>(c.integer("parameters.samples"));
  const auto cap = static_cast<std::uint64_t>(c.integer("parameters.cap", 10'000));
  CsvTable t({"p", "survival", "stderr", "generations"});
  std::uint64_t capped = 0;
  if (law == "walker") {
    const int n_i = static_cast<int>(c.integer("parameters.n_i"));
    const double p_r = c.real("parameters.p_r");
    for (double p : c.reals("parameters.p_i")) {
      TreePercolationSpec s = TreePercolationSpec::walker(n_i, p, p_r, gens);
      s.cap = cap;
      const TreeSurvival r = simulate_tree(s, samples, c.seed());
      t.row() << p << r.survival << r.stderr_ << r.generations;
      capped += r.capped;
    }
    const CriticalPi cp = critical_pi(n_i, p_r);
    rep.summary["critical_p_i"] = cp.value;
  } else {
    const double n = c.real("parameters.branching");
    for (double p : c.reals("parameters.edge_keep_prob")) {
      TreePercolationSpec s;
      s.branching = n;
      s.edge_keep_prob = p;
      s.max_generations = gens;
      s.law = law == "fixed" ? OffspringLaw::Fixed : OffspringLaw::Mixed;
      s.cap = cap;
      const TreeSurvival r = simulate_tree(s, samples, c.seed());
      t.row() << p << r.survival << r.stderr_ << r.generations;
      capped += r.capped;
    }
    rep.summary["threshold"] = tree_threshold(n);
  }
  rep.summary["capped_samples"] = capped;
  sink.write("percolation.csv", t,
             {law == "walker" ? "p_i" : "edge keep probability", "fraction", "fraction", "generations"}, rep);
  return rep;
}

inline HeightBox oracle_box(const ExperimentConfig& c) {
  HeightBox box;
  box.extents = c.integers("parameters.extents");
  const std::string b = c.string("parameters.boundary", "periodic");
  box.boundary = b == "open" ? BoxBoundary::Open : b == "absorbing" ? BoxBoundary::Absorbing : BoxBoundary::Periodic;
  return box;
}

inline RunReport run_oracle_check(const ExperimentConfig& c, OutputSink& sink) {
  RunReport rep;
  const HeightBox box = oracle_box(c);
  const double V = c.real("parameters.V"), J = c.real("parameters.J");
  const std::vector<double> times = c.reals("parameters.times");
  const auto samples = static_cast<std::uint64_t>(c.integer("parameters.samples"));
  const int site = static_cast<int>(c.integer("parameters.initial_site", box.origin()));
  require(site < box.volume(), "oracle_check: initial_site outside the box");
  const RateTable rates = build_rate_table(box, V, J);
  const auto exact = exact_distribution(rates, single_site(site), times);
  CsvTable tv({"t", "tv_distance", "samples", "dt"});
  std::vector<double> final_estimate;
  if (c.string("parameters.engine", "quantum") == "quantum") {
    OracleOptions o;
    o.dt = c.real("parameters.dt", 1e-3);
    o.noise = c.string("parameters.noise", "gaussian") == "binary" ? NoiseKind::Binary : NoiseKind::Gaussian;
    o.initial_site = site;
    const HeightEnsemble ens = ensemble_height_distribution(box, V, J, times, samples, c.seed(), o);
    for (std::size_t k = 0; k < times.size(); ++k)
      tv.row() << times[k] << total_variation(ens.distributions[k], exact[k]) << samples << o.dt;
    final_estimate = ens.distributions.back();
    rep.summary["max_norm_drift"] = ens.max_norm_drift;
    CsvTable h({"height_mask", "probability"});
    for (std::size_t m = 0; m < final_estimate.size(); ++m)
      if (final_estimate[m] != 0.0) h.row() << static_cast<unsigned long>(m) << final_estimate[m];
    sink.write("heights.csv", h, {"bitmask, bit x = site x", "probability"}, rep);
  } else {
    for (std::size_t k = 0; k < times.size(); ++k) {
      const auto g = gillespie_distribution(rates, single_site(site), times[k], samples, c.seed());
      tv.row() << times[k] << total_variation(g, exact[k]) << samples << 0.0;
    }
    if (c.boolean("parameters.dump_trajectory")) {
      Rng rng = make_stream(c.seed(), "trajectory", 0);
      const HeightTrajectory tr = gillespie_run(rates, single_site(site), times.back(), rng);
      CsvTable d({"t", "event_type", "popcount"});
      d.row() << tr.times[0] << "initial" << std::popcount(tr.configs[0]);
      for (std::size_t i = 1; i < tr.times.size(); ++i) {
        const bool pad = tr.padded && i + 1 == tr.times.size();
        d.row() << tr.times[i] << (pad ? std::string("end") : to_string(tr.kinds[i - 1])) << std::popcount(tr.configs[i]);
      }
      sink.write("trajectory.csv", d, {"time (1/V units of the rates)", "bond|sink|plaquette|initial|end", "sites"},
                 rep);
      rep.summary["trajectory_absorbed"] = tr.absorbed;
    }
  }
  CsvTable e({"config_index", "probability"});
  for (std::size_t m = 0; m < exact.back().size(); ++m)
    if (exact.back()[m] != 0.0) e.row() << static_cast<unsigned long>(m) << exact.back()[m];
  sink.write("tv_distance.csv", tv, {"time", "probability", "realizations", "time (0 = continuous)"}, rep);
  sink.write("exact_distribution.csv", e, {"bitmask, bit x = site x", "probability"}, rep);
  rep.summary["exact_mean_size"] = mean_size_exact(exact.back());
  return rep;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Runs the experiment, writing its CSV files and manifest.json under
/// output_path (or `output_override` when non-empty).
inline RunReport run_experiment(const ExperimentConfig& c, const std::string& output_override = "") {
  const std::filesystem::path dir = output_override.empty() ? c.output_path() : output_override;
  detail::OutputSink sink(dir);
  const auto start = std::chrono::steady_clock::now();
  const std::string started = detail::utc_timestamp();
  const std::string name = c.experiment();
  RunReport rep;
  if (name == "size_trace") rep = detail::run_size_trace(c, sink);
  else if (name == "walker_scan") rep = detail::run_walker_scan(c, sink);
  else if (name == "return_prob") rep = detail::run_return_prob(c, sink);
  else if (name == "lyapunov_curve") rep = detail::run_lyapunov_curve(c, sink);
  else if (name == "phase_diagram") rep = detail::run_phase_diagram(c, sink);
  else if (name == "percolation") rep = detail::run_percolation(c, sink);
  else if (name == "oracle_check") rep = detail::run_oracle_check(c, sink);
  else throw InvalidArgument("unknown experiment '" + name + "'");
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  nlohmann::json m;
  m["experiment"] = name;
  m["toolkit_version"] = toolkit_version;
  m["config"] = c.json();
  m["started_at"] = started;
  m["elapsed_seconds"] = elapsed;
  m["workers"] = worker_count();
  m["summary"] = rep.summary;
  for (const auto& f : rep.outputs) {
    nlohmann::json cols = nlohmann::json::object();
    for (const auto& [col, unit] : f.columns) cols[col] = unit;
    m["outputs"].push_back({{"file", f.name}, {"columns", cols}});
  }
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
  return rep;
}

}  // namespace scrambling
