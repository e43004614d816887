#pragma once

// JSON run configuration. Every validation error names the offending field.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fwdrates/cashflow.hpp"
#include "fwdrates/conditioning.hpp"
#include "fwdrates/core.hpp"
#include "fwdrates/path.hpp"
#include "fwdrates/simulate.hpp"

namespace fwdrates {

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct NamedCashflow {
  std::string name;
  CashflowSpec1D spec;
  bool second_moment = true;
};

struct CheckSettings {
  double k_sigma = 3.0;
  double c_h = 0.01;             // discretization allowance per unit of h
  double residual_tol = 1e-9;    // round trip and solved-vs-estimated agreement
  double identity_tol = 1e-12;   // normalized empirical identities
  double dual_tol = 1e-9;        // relative, second moment computed two ways
  double variance_eps = 1e-6;    // relative to max(1, S+)
};

struct RunConfig {
  std::string name;
  StateSpace space;
  IntensityModel model;
  TimeGrid grid;
  DiscountCurve kappa;
  std::vector<NamedCashflow> cashflows;
  std::optional<FreePolicySpec> free_policy;
  std::string free_policy_name;
  ConditioningScheme conditioning = ConditioningScheme::as_if_markov();
  std::vector<std::string> labels;  // empty: every non-empty cell
  std::size_t n_paths = 10000;
  std::uint64_t base_seed = 1;
  std::size_t min_cell_paths = 30;
  CheckSettings checks;
};

namespace detail {

using nlohmann::json;

inline std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }
inline std::string index_path(const std::string& base, std::size_t k) { return base + "[" + std::to_string(k) + "]"; }

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

inline const json& need(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) config_fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) config_fail(join_path(path, key), "missing");
  return *it;
}

inline const json* maybe(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) config_fail(path, "expected a number");
  double x = v.get<double>();
  if (!std::isfinite(x)) config_fail(path, "must be finite");
  return x;
}

inline double number(const json& obj, const std::string& key, const std::string& path) {
  return number(need(obj, key, path), join_path(path, key));
}

inline double number_or(const json& obj, const std::string& key, const std::string& path, double fallback) {
  const json* v = maybe(obj, key);
  return v ? number(*v, join_path(path, key)) : fallback;
}

inline std::string text(const json& obj, const std::string& key, const std::string& path) {
  const json& v = need(obj, key, path);
  if (!v.is_string()) config_fail(join_path(path, key), "expected a string");
  return v.get<std::string>();
}

inline const json& array(const json& obj, const std::string& key, const std::string& path) {
  const json& v = need(obj, key, path);
  if (!v.is_array()) config_fail(join_path(path, key), "expected an array");
  return v;
}

inline int state_ref(const StateSpace& space, const json& obj, const std::string& key, const std::string& path) {
  const std::string name = text(obj, key, path);
  try {
    return space.index_of(name);
  } catch (const ValidationError&) {
    config_fail(join_path(path, key), "unknown state '" + name + "'");
  }
}

inline int grid_index(const TimeGrid& grid, double t, const std::string& path) {
  const double ratio = t / grid.step();
  const double r = std::round(ratio);
  if (std::abs(ratio - r) > 1e-9 * std::max(1.0, std::abs(ratio))) config_fail(path, "time is not on the grid");
  if (r < 0 || r > grid.steps()) config_fail(path, "time lies outside [0, T]");
  return static_cast<int>(r);
}

inline std::vector<double> grid_table(const json& v, const TimeGrid& grid, const std::string& path) {
  if (!v.is_array()) config_fail(path, "expected an array");
  if (static_cast<int>(v.size()) != grid.size())
    config_fail(path, "expected " + std::to_string(grid.size()) + " values (one per grid point)");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(number(v[k], index_path(path, k)));
  return out;
}

inline Intensity parse_intensity(const json& obj, const std::string& path) {
  const std::string family = text(obj, "family", path);
  auto p = [&](const char* key, double fallback = 0.0) { return number_or(obj, key, path, fallback); };
  if (family == "constant") return Intensity::constant(number(obj, "level", path));
  if (family == "gompertz") return Intensity::gompertz(p("level"), number(obj, "scale", path), number(obj, "growth", path));
  if (family == "duration_decay")
    return Intensity::duration_decay(p("level"), number(obj, "scale", path), number(obj, "decay", path));
  if (family == "select_gompertz")
    return Intensity::select_gompertz(p("level"), number(obj, "scale", path), number(obj, "growth", path),
                                      number(obj, "select", path), number(obj, "decay", path));
  config_fail(join_path(path, "family"), "unknown intensity family '" + family + "'");
}

/// Payment windows are (start, end] in time; defaults cover the whole grid.
inline IndexRange time_window(const json& obj, const TimeGrid& grid, const std::string& path) {
  const double start = number_or(obj, "start", path, -1.0);
  const double end = number_or(obj, "end", path, grid.horizon());
  if (end < start) config_fail(join_path(path, "end"), "must not precede start");
  return grid.window(start, end);
}

inline void parse_sojourn(const json& e, const TimeGrid& grid, const StateSpace& space, CashflowSpec1D& spec,
                          const std::string& path) {
  const int i = state_ref(space, e, "state", path);
  const std::string type = text(e, "type", path);
  Measure1D& mu = spec.sojourn(i);
  if (type == "atom") {
    mu[grid_index(grid, number(e, "time", path), join_path(path, "time"))] += number(e, "amount", path);
  } else if (type == "density") {
    const double rate = number(e, "rate", path);
    const IndexRange w = time_window(e, grid, path);
    for (int m = std::max(w.first, 1); m <= w.last; ++m) mu[m] += rate * grid.step();
  } else if (type == "periodic") {
    const double amount = number(e, "amount", path);
    const int first = grid_index(grid, number(e, "first", path), join_path(path, "first"));
    const int last = grid_index(grid, number(e, "last", path), join_path(path, "last"));
    const double period = number(e, "period", path);
    const int every = grid_index(grid, period, join_path(path, "period"));
    if (every <= 0) config_fail(join_path(path, "period"), "must be a positive multiple of the grid step");
    for (int m = first; m <= last; m += every) mu[m] += amount;
  } else if (type == "table") {
    const auto values = grid_table(need(e, "values", path), grid, join_path(path, "values"));
    for (int m = 0; m < grid.size(); ++m) mu[m] += values[static_cast<std::size_t>(m)];
  } else {
    config_fail(join_path(path, "type"), "expected atom, density, periodic or table");
  }
}

inline void parse_transition(const json& e, const TimeGrid& grid, const StateSpace& space, CashflowSpec1D& spec,
                             const std::string& path) {
  const int i = state_ref(space, e, "from", path);
  const int j = state_ref(space, e, "to", path);
  if (i == j) config_fail(join_path(path, "to"), "transition payoff needs two different states");
  std::vector<double> b(static_cast<std::size_t>(grid.size()), 0.0);
  if (const json* values = maybe(e, "values")) {
    b = grid_table(*values, grid, join_path(path, "values"));
  } else {
    const double amount = number(e, "amount", path);
    const double slope = number_or(e, "slope", path, 0.0);
    const IndexRange w = time_window(e, grid, path);
    for (int m = w.first; m <= w.last; ++m) b[static_cast<std::size_t>(m)] = amount + slope * grid.time(m);
  }
  if (spec.has_transition(i, j)) {
    auto old = spec.transition(i, j);
    for (std::size_t m = 0; m < b.size(); ++m) b[m] += old[m];
  }
  spec.set_transition(i, j, std::move(b));
}

inline NamedCashflow parse_cashflow(const json& c, const TimeGrid& grid, const StateSpace& space,
                                    const std::string& path) {
  NamedCashflow out{text(c, "name", path), CashflowSpec1D(space.size(), grid.size()), true};
  if (const json* v = maybe(c, "second_moment")) {
    if (!v->is_boolean()) config_fail(join_path(path, "second_moment"), "expected true or false");
    out.second_moment = v->get<bool>();
  }
  if (const json* s = maybe(c, "sojourn")) {
    if (!s->is_array()) config_fail(join_path(path, "sojourn"), "expected an array");
    for (std::size_t k = 0; k < s->size(); ++k)
      parse_sojourn((*s)[k], grid, space, out.spec, index_path(join_path(path, "sojourn"), k));
  }
  if (const json* t = maybe(c, "transition")) {
    if (!t->is_array()) config_fail(join_path(path, "transition"), "expected an array");
    for (std::size_t k = 0; k < t->size(); ++k)
      parse_transition((*t)[k], grid, space, out.spec, index_path(join_path(path, "transition"), k));
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& root) {
  using namespace detail;
  if (!root.is_object()) config_fail("<root>", "expected an object");
  RunConfig cfg;
  cfg.name = maybe(root, "name") ? text(root, "name", "") : std::string("run");

  std::vector<std::string> labels, exercised;
  const json& states = array(root, "states", "");
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (!states[k].is_string()) config_fail(index_path("states", k), "expected a string");
    labels.push_back(states[k].get<std::string>());
    if (labels.back().empty() || labels.back().find_first_of(",;|\" \t\n") != std::string::npos)
      config_fail(index_path("states", k), "state names must be non-empty without separators or spaces");
  }
  if (const json* fp = maybe(root, "free_policy_states")) {
    if (!fp->is_array()) config_fail("free_policy_states", "expected an array");
    for (std::size_t k = 0; k < fp->size(); ++k) {
      if (!(*fp)[k].is_string()) config_fail(index_path("free_policy_states", k), "expected a string");
      exercised.push_back((*fp)[k].get<std::string>());
    }
  }
  try {
    cfg.space = StateSpace(labels, exercised);
  } catch (const ValidationError& e) {
    config_fail(exercised.empty() ? "states" : "free_policy_states", e.what());
  }

  const json& g = need(root, "grid", "");
  const double horizon = number(g, "horizon", "grid"), step = number(g, "step", "grid");
  const double pivot = number(g, "pivot", "grid");
  if (!(step > 0.0)) config_fail("grid.step", "must be positive");
  if (!(horizon > 0.0)) config_fail("grid.horizon", "must be positive");
  try {
    (void)TimeGrid(horizon, step, 0.0);
  } catch (const ValidationError& e) {
    config_fail("grid.horizon", e.what());
  }
  try {
    cfg.grid = TimeGrid(horizon, step, pivot);
  } catch (const ValidationError& e) {
    config_fail("grid.pivot", e.what());
  }

  const int initial = state_ref(cfg.space, root, "initial_state", "");
  const double initial_duration = number_or(root, "initial_duration", "", 0.0);
  if (initial_duration < 0.0) config_fail("initial_duration", "must be non-negative");
  cfg.model = IntensityModel(cfg.space, initial, initial_duration);
  const json& transitions = array(root, "transitions", "");
  for (std::size_t k = 0; k < transitions.size(); ++k) {
    const std::string path = index_path("transitions", k);
    const int from = state_ref(cfg.space, transitions[k], "from", path);
    const int to = state_ref(cfg.space, transitions[k], "to", path);
    if (from == to) config_fail(join_path(path, "to"), "must differ from 'from'");
    if (cfg.space.in_s1(from) && cfg.space.in_s0(to)) config_fail(path, "free-policy states cannot return to S0");
    cfg.model.set(from, to, parse_intensity(need(transitions[k], "intensity", path), join_path(path, "intensity")));
  }
  try {
    cfg.model.validate_grid(cfg.grid);
  } catch (const std::exception& e) {
    config_fail("grid.step", e.what());
  }

  const json& disc = need(root, "discount", "");
  if (const json* table = maybe(disc, "kappa")) {
    try {
      cfg.kappa = DiscountCurve(grid_table(*table, cfg.grid, "discount.kappa"));
    } catch (const ConfigError&) {
      throw;
    } catch (const ValidationError& e) {
      config_fail("discount.kappa", e.what());
    }
  } else {
    cfg.kappa = DiscountCurve::flat(number(disc, "rate", "discount"), cfg.grid);
  }

  const json& flows = array(root, "cashflows", "");
  for (std::size_t k = 0; k < flows.size(); ++k) {
    NamedCashflow c = parse_cashflow(flows[k], cfg.grid, cfg.space, index_path("cashflows", k));
    for (const auto& other : cfg.cashflows)
      if (other.name == c.name) config_fail(join_path(index_path("cashflows", k), "name"), "duplicate name");
    cfg.cashflows.push_back(std::move(c));
  }

  if (const json* fp = maybe(root, "free_policy")) {
    if (!cfg.space.partitioned()) config_fail("free_policy", "needs free_policy_states");
    const std::string scheme = text(*fp, "scheme", "free_policy");
    const NamedCashflow* base = nullptr;
    for (const auto& c : cfg.cashflows)
      if (c.name == scheme) base = &c;
    if (!base) config_fail("free_policy.scheme", "no cash-flow named '" + scheme + "'");
    FreePolicySpec spec{cfg.space, base->spec, {}};
    if (const json* rescale = maybe(*fp, "rescale")) {
      if (!rescale->is_array()) config_fail("free_policy.rescale", "expected an array");
      for (std::size_t k = 0; k < rescale->size(); ++k) {
        const std::string path = index_path("free_policy.rescale", k);
        const json& r = (*rescale)[k];
        const int from = state_ref(cfg.space, r, "from", path);
        const int to = state_ref(cfg.space, r, "to", path);
        if (!cfg.space.in_s0(from) || !cfg.space.in_s1(to)) config_fail(path, "rescaling needs an S0 -> S1 pair");
        std::vector<double> rho;
        if (const json* values = maybe(r, "values")) {
          rho = grid_table(*values, cfg.grid, join_path(path, "values"));
        } else {
          const double a = number(r, "intercept", path), b = number_or(r, "slope", path, 0.0);
          for (int m = 0; m < cfg.grid.size(); ++m) rho.push_back(a + b * cfg.grid.time(m));
        }
        spec.rescale[{from, to}] = std::move(rho);
      }
    }
    cfg.free_policy = std::move(spec);
    cfg.free_policy_name = maybe(*fp, "name") ? text(*fp, "name", "free_policy") : "free_policy";
  }

  if (const json* cond = maybe(root, "conditioning")) {
    const std::string scheme = text(*cond, "scheme", "conditioning");
    if (scheme == "as_if_markov") {
      cfg.conditioning = ConditioningScheme::as_if_markov();
    } else if (scheme == "state_duration") {
      const json& edges = array(*cond, "edges", "conditioning");
      std::vector<double> e;
      for (std::size_t k = 0; k < edges.size(); ++k) e.push_back(number(edges[k], index_path("conditioning.edges", k)));
      try {
        cfg.conditioning = ConditioningScheme::state_duration(e);
      } catch (const ValidationError& err) {
        config_fail("conditioning.edges", err.what());
      }
    } else {
      config_fail("conditioning.scheme", "expected as_if_markov or state_duration");
    }
    if (const json* l = maybe(*cond, "labels")) {
      if (!l->is_array()) config_fail("conditioning.labels", "expected an array");
      for (std::size_t k = 0; k < l->size(); ++k) {
        if (!(*l)[k].is_string()) config_fail(index_path("conditioning.labels", k), "expected a string");
        const std::string name = (*l)[k].get<std::string>();
        try {
          cfg.conditioning.parse(name, cfg.space);
        } catch (const ValidationError& err) {
          config_fail(index_path("conditioning.labels", k), err.what());
        }
        cfg.labels.push_back(name);
      }
    }
  }

  const json& ens = need(root, "ensemble", "");
  const double n_paths = number(ens, "n_paths", "ensemble");
  if (n_paths < 2 || n_paths != std::floor(n_paths)) config_fail("ensemble.n_paths", "must be an integer >= 2");
  cfg.n_paths = static_cast<std::size_t>(n_paths);
  const json& seed = need(ens, "base_seed", "ensemble");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
    config_fail("ensemble.base_seed", "expected a non-negative integer");
  cfg.base_seed = seed.get<std::uint64_t>();
  cfg.min_cell_paths = static_cast<std::size_t>(std::max(2.0, number_or(ens, "min_cell_paths", "ensemble", 30.0)));

  if (const json* c = maybe(root, "checks")) {
    cfg.checks.k_sigma = number_or(*c, "k_sigma", "checks", cfg.checks.k_sigma);
    cfg.checks.c_h = number_or(*c, "c_h", "checks", cfg.checks.c_h);
    cfg.checks.residual_tol = number_or(*c, "residual_tol", "checks", cfg.checks.residual_tol);
    cfg.checks.identity_tol = number_or(*c, "identity_tol", "checks", cfg.checks.identity_tol);
    cfg.checks.dual_tol = number_or(*c, "dual_tol", "checks", cfg.checks.dual_tol);
    cfg.checks.variance_eps = number_or(*c, "variance_eps", "checks", cfg.checks.variance_eps);
  }
  return cfg;
}

namespace detail {

/// Replaces every {"csv": "file"} object by the numbers in that file, resolved
/// against the config's directory. Commas, semicolons and whitespace separate values.
inline void resolve_side_tables(json& node, const std::filesystem::path& dir, const std::string& path) {
  if (node.is_object() && node.size() == 1 && node.contains("csv") && node["csv"].is_string()) {
    const std::filesystem::path file = dir / node["csv"].get<std::string>();
    std::ifstream in(file);
    if (!in) config_fail(path, "cannot read table file '" + file.string() + "'");
    json values = json::array();
    std::string token;
    char c;
    auto flush = [&] {
      if (token.empty()) return;
      try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        values.push_back(v);
      } catch (const std::exception&) {
        config_fail(path, "non-numeric entry '" + token + "' in '" + file.string() + "'");
      }
      token.clear();
    };
    while (in.get(c)) {
      if (c == ',' || c == ';' || std::isspace(static_cast<unsigned char>(c)))
        flush();
      else
        token += c;
    }
    flush();
    node = std::move(values);
    return;
  }
  if (node.is_object())
    for (auto it = node.begin(); it != node.end(); ++it) resolve_side_tables(it.value(), dir, join_path(path, it.key()));
  else if (node.is_array())
    for (std::size_t k = 0; k < node.size(); ++k) resolve_side_tables(node[k], dir, index_path(path, k));
}

}  // namespace detail

/// Parse errors report the line and column of the offending byte.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string body = buffer.str();
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < body.size(); ++k) {
      if (body[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
  detail::resolve_side_tables(root, std::filesystem::path(path).parent_path(), "");
  return parse_config(root);
}

}  // namespace fwdrates
