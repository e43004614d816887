#pragma once

// simulate -> estimate -> rates -> solve -> reserve -> oracle comparison, and
// the on-disk artifacts of each stage.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fwdrates/cashflow.hpp"
#include "fwdrates/conditioning.hpp"
#include "fwdrates/config.hpp"
#include "fwdrates/estimate.hpp"
#include "fwdrates/kolmogorov.hpp"
#include "fwdrates/oracle.hpp"
#include "fwdrates/reserve.hpp"
#include "fwdrates/simulate.hpp"

namespace fwdrates {

enum class Stage { Simulate, Estimate, Solve, Value, Check, All };

struct PipelineOptions {
  Stage stage = Stage::All;
  std::filesystem::path out = "out";
  unsigned threads = 1;
  bool strict_determinism = false;
  bool dump_surfaces = false;
  bool dump_paths = false;
  std::size_t dump_path_limit = 100;
};

struct CheckRecord {
  std::string name;
  std::string label;
  std::string subject;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
};

struct ReportRow {
  ValuationReport report;
  std::optional<OracleEstimate> oracle_v_plus, oracle_v_minus, oracle_s_plus;
  std::optional<Comparison> cmp_v_plus, cmp_v_minus, cmp_s_plus;
};

struct LabelSummary {
  std::string label;
  std::size_t n_paths = 0;
  std::optional<ResidualReport> residual;
};

struct PipelineResult {
  std::vector<ReportRow> rows;
  std::vector<CheckRecord> checks;
  std::vector<LabelSummary> labels;
  std::vector<std::string> notes;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  return buf;
}

/// RFC 4180 quoting for fields such as duration-bucket labels.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + '"';
}

// ---------------------------------------------------------------------------
// Ensemble artifact
// ---------------------------------------------------------------------------

inline void write_ensemble(const std::filesystem::path& file, const Ensemble& ens, const std::string& name) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  std::string states;
  for (int i = 0; i < ens.space.size(); ++i) states += (i ? ";" : "") + ens.space.label(i);
  out << "# config=" << name << "\n# states=" << states << "\n# steps=" << ens.grid.steps()
      << "\n# step=" << format_number(ens.grid.step()) << "\n# pivot=" << ens.grid.pivot()
      << "\n# initial_duration=" << format_number(ens.initial_duration) << "\n# base_seed=" << ens.base_seed
      << "\n# n_paths=" << ens.paths.size() << "\npath,index,from,to\n";
  for (std::size_t k = 0; k < ens.paths.size(); ++k) {
    const Path& p = ens.paths[k];
    out << k << ",0," << ens.space.label(p.initial_state()) << ',' << ens.space.label(p.initial_state()) << '\n';
    for (const Jump& j : p.jumps())
      out << k << ',' << j.index << ',' << ens.space.label(j.from) << ',' << ens.space.label(j.to) << '\n';
  }
}

/// Loads ensemble.csv; returns nothing if it was produced for a different
/// configuration (states, grid, seed or size).
inline std::optional<Ensemble> read_ensemble(const std::filesystem::path& file, const RunConfig& cfg) {
  std::ifstream in(file);
  if (!in) return std::nullopt;
  std::map<std::string, std::string> meta;
  std::string line;
  while (in.peek() == '#' && std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
  }
  std::string states;
  for (int i = 0; i < cfg.space.size(); ++i) states += (i ? ";" : "") + cfg.space.label(i);
  if (meta["states"] != states || meta["steps"] != std::to_string(cfg.grid.steps()) ||
      meta["step"] != format_number(cfg.grid.step()) || meta["pivot"] != std::to_string(cfg.grid.pivot()) ||
      meta["initial_duration"] != format_number(cfg.model.initial_duration()) ||
      meta["base_seed"] != std::to_string(cfg.base_seed) || meta["n_paths"] != std::to_string(cfg.n_paths))
    return std::nullopt;

  Ensemble ens{cfg.grid, cfg.space, cfg.model.initial_duration(), cfg.base_seed, {}};
  ens.paths.reserve(cfg.n_paths);
  std::getline(in, line);  // header
  std::vector<Jump> jumps;
  long current = -1;
  int initial = 0;
  auto flush = [&] {
    if (current >= 0) ens.paths.emplace_back(initial, std::move(jumps), cfg.grid.size());
    jumps.clear();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string path, index, from, to;
    std::getline(ss, path, ',');
    std::getline(ss, index, ',');
    std::getline(ss, from, ',');
    std::getline(ss, to, ',');
    const long k = std::stol(path);
    const int m = std::stoi(index);
    if (m == 0) {
      flush();
      if (k != current + 1) throw ValidationError("ensemble file is out of order at path " + path);
      current = k;
      initial = cfg.space.index_of(from);
    } else {
      jumps.push_back({m, cfg.space.index_of(from), cfg.space.index_of(to)});
    }
  }
  flush();
  if (ens.paths.size() != cfg.n_paths) return std::nullopt;
  return ens;
}

inline SimulationOptions simulation_options(const RunConfig& cfg) {
  SimulationOptions opt;
  if (cfg.free_policy) opt.blocked_exercise = cfg.free_policy->lump_sum_indices();
  return opt;
}

inline Ensemble simulate_config(const RunConfig& cfg, unsigned threads) {
  return simulate_ensemble(cfg.model, cfg.grid, cfg.n_paths, cfg.base_seed, simulation_options(cfg), threads);
}

// ---------------------------------------------------------------------------
// Dumps
// ---------------------------------------------------------------------------

namespace detail {

inline std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

inline void write_matrix(const std::filesystem::path& file, const Matrix& m) {
  std::ofstream out(file);
  for (int r = 0; r < m.size(); ++r) {
    for (int c = 0; c < m.size(); ++c) out << (c ? "," : "") << format_number(m(r, c));
    out << '\n';
  }
}

inline void write_columns(const std::filesystem::path& file, const TimeGrid& grid, const std::vector<std::string>& names,
                          const std::vector<std::vector<double>>& cols) {
  std::ofstream out(file);
  out << "index,time";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (int m = 0; m < grid.size(); ++m) {
    out << m << ',' << format_number(grid.time(m));
    for (const auto& c : cols) out << ',' << format_number(c[static_cast<std::size_t>(m)]);
    out << '\n';
  }
}

inline void dump_surfaces(const std::filesystem::path& dir, const StateSpace& space, const OccupationSurfaces& est,
                          const RateSystem& rates, const OccupationSurfaces* solved) {
  std::filesystem::create_directories(dir);
  const int n = space.size();
  write_columns(dir / "estimated_P1.csv", est.grid, space.labels(), est.p1);
  std::vector<std::string> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pairs.push_back(space.label(i) + "->" + space.label(j));
  write_columns(dir / "dLambda1.csv", est.grid, pairs, rates.d1);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const std::string tag = file_safe(space.label(i)) + "_" + file_safe(space.label(k));
      if (est.has_joint()) write_matrix(dir / ("estimated_P2_" + tag + ".csv"), est.p2[static_cast<std::size_t>(i * n + k)]);
      if (solved && solved->has_joint())
        write_matrix(dir / ("solved_P2_" + tag + ".csv"), solved->p2[static_cast<std::size_t>(i * n + k)]);
    }
  if (solved) write_columns(dir / "solved_P1.csv", solved->grid, space.labels(), solved->p1);
  for (const auto& [key, block] : rates.d2) {
    const std::string tag = file_safe(space.label(pair_from(key.first, n))) + "_" +
                            file_safe(space.label(pair_to(key.first, n))) + "_" +
                            file_safe(space.label(pair_from(key.second, n))) + "_" +
                            file_safe(space.label(pair_to(key.second, n)));
    write_matrix(dir / ("dLambda2_" + tag + ".csv"), block);
  }
}

inline void dump_paths(const std::filesystem::path& file, const Ensemble& ens, std::size_t limit) {
  std::ofstream out(file);
  const int n = ens.space.size();
  out << "path,index,time,state";
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out << ",dN_" << ens.space.label(i) << '_' << ens.space.label(j);
  out << '\n';
  for (std::size_t k = 0; k < std::min(limit, ens.paths.size()); ++k) {
    const CountingProcesses cp(ens.paths[k], ens.grid, n);
    for (int m = 0; m < ens.grid.size(); ++m) {
      out << k << ',' << m << ',' << format_number(ens.grid.time(m)) << ',' << ens.space.label(ens.paths[k].state(m));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out << ',' << cp.increment(i, j, m);
      out << '\n';
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

/// Indicator reconstruction from the counting processes and the signed
/// diagonal row/column identities, on every path. Returns the number of
/// violating paths.
inline std::size_t path_identity_violations(const Ensemble& ens) {
  const int n = ens.space.size(), p = ens.grid.pivot();
  std::size_t bad = 0;
  for (const Path& path : ens.paths) {
    const CountingProcesses cp(path, ens.grid, n);
    bool ok = true;
    for (int m = 0; m < ens.grid.size() && ok; ++m) {
      for (int i = 0; i < n && ok; ++i) {
        if (cp.reconstruct_indicator(i, m, path.state(p), ens.grid) != path.indicator(i, m)) ok = false;
        int off = 0;
        for (int j = 0; j < n; ++j)
          if (j != i) off += ens.grid.future(m) ? cp.increment(i, j, m) : cp.increment(j, i, m);
        if (cp.increment(i, i, m) != -off) ok = false;
      }
    }
    if (!ok) ++bad;
  }
  return bad;
}

struct IdentityResiduals {
  double sum_p1 = 0.0;      // max |Σ_i P_i - 1|
  double sum_p2 = 0.0;      // max |Σ_ik P_ik - 1|
  double marginal = 0.0;    // max |Σ_k P_ik(t1,t2) - P_i(t1)|
  double diagonal = 0.0;    // max |P_ii(t,t) - P_i(t)|
  double pivot = 0.0;       // max |P_i(s) - 1{i = Z(s)}|
  bool counts_exact = true; // the same identities on the integer counts
};

inline IdentityResiduals empirical_identities(const MomentSurfaces& ms) {
  IdentityResiduals r;
  const OccupationSurfaces& occ = ms.occupation;
  const CountTables& c = *ms.counts;
  const int n = occ.n, size = occ.grid.size();
  for (int m = 0; m < size; ++m) {
    double s = 0.0;
    std::int64_t cs = 0;
    for (int i = 0; i < n; ++i) {
      s += occ.p(i, m);
      cs += c.occupancy[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
    }
    r.sum_p1 = std::max(r.sum_p1, std::abs(s - 1.0));
    if (cs != c.n_paths) r.counts_exact = false;
  }
  for (int i = 0; i < n; ++i)
    r.pivot = std::max(r.pivot, std::abs(occ.p(i, occ.grid.pivot()) - (i == ms.pivot_state ? 1.0 : 0.0)));
  if (!occ.has_joint()) return r;
  for (int m1 = 0; m1 < size; ++m1)
    for (int m2 = 0; m2 < size; ++m2) {
      double total = 0.0;
      std::int64_t ctotal = 0;
      for (int i = 0; i < n; ++i) {
        double row = 0.0;
        std::int64_t crow = 0;
        for (int k = 0; k < n; ++k) {
          row += occ.joint(i, k, m1, m2);
          crow += c.joint[static_cast<std::size_t>(i * n + k)](m1, m2);
        }
        r.marginal = std::max(r.marginal, std::abs(row - occ.p(i, m1)));
        if (crow != c.occupancy[static_cast<std::size_t>(i)][static_cast<std::size_t>(m1)]) r.counts_exact = false;
        total += row;
        ctotal += crow;
      }
      r.sum_p2 = std::max(r.sum_p2, std::abs(total - 1.0));
      if (ctotal != c.n_paths) r.counts_exact = false;
    }
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < size; ++m) {
      r.diagonal = std::max(r.diagonal, std::abs(occ.joint(i, i, m, m) - occ.p(i, m)));
      if (c.joint[static_cast<std::size_t>(i * n + i)](m, m) != c.occupancy[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)])
        r.counts_exact = false;
    }
  return r;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

namespace detail {

inline double relative_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

struct Recorder {
  PipelineResult& result;
  void operator()(std::string name, const std::string& label, const std::string& subject, bool pass, double value,
                  double tolerance) {
    result.checks.push_back({std::move(name), label, subject, pass, value, tolerance});
  }
};

}  // namespace detail

inline PipelineResult run_pipeline(const RunConfig& cfg, const Ensemble& ens, const PipelineOptions& opt) {
  PipelineResult result;
  detail::Recorder record{result};
  const unsigned threads = opt.strict_determinism ? 1u : std::max(1u, opt.threads);
  const bool solve = opt.stage != Stage::Estimate;
  const bool value = opt.stage == Stage::Value || opt.stage == Stage::Check || opt.stage == Stage::All;
  const bool check = opt.stage == Stage::Check || opt.stage == Stage::All;
  const TimeGrid& grid = cfg.grid;
  const int p = grid.pivot();
  const double h = grid.step();
  const CheckSettings& tol = cfg.checks;

  if (check) {
    const std::size_t bad = path_identity_violations(ens);
    record("path_identities", "*", "paths", bad == 0, static_cast<double>(bad), 0.0);
  }

  // One pass of classification, members kept in path order.
  std::map<Label, std::vector<std::size_t>> cells;
  for (std::size_t k = 0; k < ens.paths.size(); ++k)
    cells[cfg.conditioning.classify(ens.paths[k], grid, ens.initial_duration)].push_back(k);

  std::vector<Label> labels;
  if (cfg.labels.empty()) {
    labels = cfg.conditioning.all_labels(cfg.space);
  } else {
    for (const auto& name : cfg.labels) {
      Label l = cfg.conditioning.parse(name, cfg.space);
      if (!cells.count(l)) throw EmptyCellError("conditioning cell '" + name + "' is empty");
      labels.push_back(l);
    }
  }

  std::optional<FreePolicySpec> fp_discounted;
  if (cfg.free_policy) fp_discounted = cfg.free_policy->discounted(cfg.kappa, p);
  if (check && cfg.free_policy) {
    std::size_t lumps = 0;
    for (const Path& path : ens.paths)
      if (eval_free_policy_direct(*fp_discounted, path, IndexRange::none()).lump_at_exercise) ++lumps;
    record("free_policy_no_lump_at_exercise", "*", cfg.free_policy_name, lumps == 0, static_cast<double>(lumps), 0.0);
  }

  for (const Label& label : labels) {
    const std::string name = cfg.conditioning.name(label, cfg.space);
    auto it = cells.find(label);
    if (it == cells.end()) {
      result.notes.push_back("label " + name + ": empty cell, skipped");
      continue;
    }
    const auto& members = it->second;
    if (members.size() < cfg.min_cell_paths) {
      result.notes.push_back("label " + name + ": " + std::to_string(members.size()) + " paths < min_cell_paths, skipped");
      continue;
    }

    MomentSurfaces ms = estimate_moment_surfaces(ens, members, true);
    ms.label = label;
    ms.label_name = name;
    LabelSummary summary{name, members.size(), std::nullopt};

    if (check) {
      const IdentityResiduals id = empirical_identities(ms);
      record("counts_identities_exact", name, "surfaces", id.counts_exact, id.counts_exact ? 0.0 : 1.0, 0.0);
      record("sum_P_i", name, "surfaces", id.sum_p1 <= tol.identity_tol, id.sum_p1, tol.identity_tol);
      record("sum_P_ik", name, "surfaces", id.sum_p2 <= tol.identity_tol, id.sum_p2, tol.identity_tol);
      record("marginal_P_ik", name, "surfaces", id.marginal <= tol.identity_tol, id.marginal, tol.identity_tol);
      record("diagonal_P_ii", name, "surfaces", id.diagonal <= tol.identity_tol, id.diagonal, tol.identity_tol);
      record("pivot_P_i", name, "surfaces", id.pivot == 0.0, id.pivot, 0.0);
    }

    if (!solve) {
      if (opt.dump_surfaces) {
        const RateSystem rates = transition_rates(ms);
        detail::dump_surfaces(opt.out / "surfaces" / detail::file_safe(name), cfg.space, ms.occupation, rates, nullptr);
      }
      result.labels.push_back(summary);
      continue;
    }

    const RateSystem rates = transition_rates(ms);
    const SolvedProbabilities solved = solve_forward(rates, ms.pivot_state);
    const ResidualReport res = residual_and_consistency(solved.surfaces, ms.occupation);
    summary.residual = res;
    result.labels.push_back(summary);
    if (opt.dump_surfaces)
      detail::dump_surfaces(opt.out / "surfaces" / detail::file_safe(name), cfg.space, ms.occupation, rates,
                            &solved.surfaces);
    if (check) {
      record("round_trip_P_i", name, "solver", res.p1 <= tol.residual_tol, res.p1, tol.residual_tol);
      record("round_trip_P_ik", name, "solver", res.p2 <= tol.residual_tol, res.p2, tol.residual_tol);
      record("solved_bounds", name, "solver", res.within_bounds(tol.residual_tol),
             std::max(-res.min_value, res.max_value - 1.0), tol.residual_tol);
    }
    if (!value) continue;

    const OccupationSurfaces& occ = ms.occupation;
    for (const NamedCashflow& cf : cfg.cashflows) {
      ReportRow row;
      row.report = value_cashflow(cf.name, name, cf.spec, occ, rates, cfg.kappa, members.size(), cf.second_moment);
      const double vp = row.report.v_plus, vm = row.report.v_minus;

      row.oracle_v_plus = summarize(
          evaluate_members(ens, members, [&](const Path& path) { return path_payout_future(path, cf.spec, cfg.kappa, grid); }, threads),
          name);
      row.oracle_v_minus = summarize(
          evaluate_members(ens, members, [&](const Path& path) { return path_payout_past(path, cf.spec, cfg.kappa, grid); }, threads),
          name);
      row.cmp_v_plus = compare(vp, *row.oracle_v_plus, tol.k_sigma, tol.c_h, h);
      row.cmp_v_minus = compare(vm, *row.oracle_v_minus, tol.k_sigma, tol.c_h, h);
      if (row.report.s_plus) {
        row.oracle_s_plus = summarize(evaluate_members(ens, members,
                                                       [&](const Path& path) {
                                                         const double y = path_payout_future(path, cf.spec, cfg.kappa, grid);
                                                         return y * y;
                                                       },
                                                       threads),
                                      name);
        row.cmp_s_plus = compare(*row.report.s_plus, *row.oracle_s_plus, tol.k_sigma, tol.c_h, h);
      }

      if (check) {
        record("oracle_V_plus", name, cf.name, row.cmp_v_plus->pass, row.cmp_v_plus->difference, row.cmp_v_plus->allowance);
        record("oracle_V_minus", name, cf.name, row.cmp_v_minus->pass, row.cmp_v_minus->difference, row.cmp_v_minus->allowance);
        const double vp_solved = expected_future_1d(cf.spec, solved.surfaces, rates, cfg.kappa);
        const double vm_solved = expected_past_1d(cf.spec, solved.surfaces, rates, cfg.kappa);
        const double gap = std::max(detail::relative_gap(vp, vp_solved), detail::relative_gap(vm, vm_solved));
        record("solved_vs_estimated_V", name, cf.name, gap <= tol.residual_tol, gap, tol.residual_tol);
        if (row.report.s_plus) {
          const double s = *row.report.s_plus;
          record("oracle_S_plus", name, cf.name, row.cmp_s_plus->pass, row.cmp_s_plus->difference, row.cmp_s_plus->allowance);
          const CashflowSpec2D sq = square_cashflow(cf.spec, cfg.kappa, p).restricted({grid.future_range(), grid.future_range()});
          const double s_dual = expected_2d(sq, occ, rates);
          const double dual = detail::relative_gap(s, s_dual);
          record("dual_S_plus", name, cf.name, dual <= tol.dual_tol, dual, tol.dual_tol);
          const double eps = tol.variance_eps * std::max(1.0, s);
          record("variance_nonnegative", name, cf.name, *row.report.variance >= -eps, *row.report.variance, -eps);
        }
      }
      result.rows.push_back(std::move(row));
    }

    if (cfg.free_policy) {
      const FreePolicySpec& fp = *cfg.free_policy;
      ReportRow row;
      row.report.spec = cfg.free_policy_name;
      row.report.label = name;
      row.report.v_plus = free_policy_prospective(fp, occ, rates, cfg.kappa);
      row.report.v_minus = free_policy_retrospective(fp, occ, rates, cfg.kappa);
      row.report.pivot_time = grid.pivot_time();
      row.report.horizon = grid.horizon();
      row.report.step = h;
      row.report.n_paths = members.size();
      row.oracle_v_plus = summarize(
          evaluate_members(ens, members,
                           [&](const Path& path) { return eval_free_policy_direct(*fp_discounted, path, grid.future_range()).value; },
                           threads),
          name);
      row.oracle_v_minus = summarize(
          evaluate_members(ens, members,
                           [&](const Path& path) { return eval_free_policy_direct(*fp_discounted, path, grid.past()).value; },
                           threads),
          name);
      row.cmp_v_plus = compare(row.report.v_plus, *row.oracle_v_plus, tol.k_sigma, tol.c_h, h);
      row.cmp_v_minus = compare(row.report.v_minus, *row.oracle_v_minus, tol.k_sigma, tol.c_h, h);
      if (check) {
        record("oracle_V_plus", name, cfg.free_policy_name, row.cmp_v_plus->pass, row.cmp_v_plus->difference,
               row.cmp_v_plus->allowance);
        record("oracle_V_minus", name, cfg.free_policy_name, row.cmp_v_minus->pass, row.cmp_v_minus->difference,
               row.cmp_v_minus->allowance);
        // The printed formulas against the generic route through the decomposed cash-flow.
        const FreePolicyParts parts = build_free_policy_cashflow(*fp_discounted);
        const double vp_generic =
            expected_future_1d(build_free_policy_cashflow(fp).before_exercise, occ, rates, cfg.kappa) +
            expected_2d(parts.after_exercise.restricted({grid.future_range(), grid.all()}), occ, rates);
        const double vm_generic =
            expected_past_1d(build_free_policy_cashflow(fp).before_exercise, occ, rates, cfg.kappa) +
            expected_2d(parts.after_exercise.restricted({grid.past(), grid.past()}), occ, rates);
        const double gap = std::max(detail::relative_gap(row.report.v_plus, vp_generic),
                                    detail::relative_gap(row.report.v_minus, vm_generic));
        record("free_policy_decomposition", name, cfg.free_policy_name, gap <= tol.dual_tol, gap, tol.dual_tol);
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline void write_report_csv(const std::filesystem::path& file, const PipelineResult& r) {
  std::ofstream out(file);
  out << "label,cashflow,n_paths,pivot_time,horizon,step,V_plus,V_minus,S_plus,variance,"
         "oracle_V_plus,se_V_plus,z_V_plus,oracle_V_minus,se_V_minus,z_V_minus,"
         "oracle_S_plus,se_S_plus,z_S_plus,pass\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const ReportRow& row : r.rows) {
    const ValuationReport& v = row.report;
    bool pass = true;
    for (const auto* c : {&row.cmp_v_plus, &row.cmp_v_minus, &row.cmp_s_plus})
      if (*c && !(*c)->pass) pass = false;
    out << csv_field(v.label) << ',' << csv_field(v.spec) << ',' << v.n_paths << ',' << format_number(v.pivot_time) << ','
        << format_number(v.horizon) << ',' << format_number(v.step) << ',' << format_number(v.v_plus) << ','
        << format_number(v.v_minus) << ',' << opt(v.s_plus) << ',' << opt(v.variance);
    auto oracle = [&](const std::optional<OracleEstimate>& o, const std::optional<Comparison>& c) {
      if (o)
        out << ',' << format_number(o->mean) << ',' << format_number(o->standard_error) << ',' << format_number(c->z);
      else
        out << ",,,";
    };
    oracle(row.oracle_v_plus, row.cmp_v_plus);
    oracle(row.oracle_v_minus, row.cmp_v_minus);
    oracle(row.oracle_s_plus, row.cmp_s_plus);
    out << ',' << (pass ? "true" : "false") << '\n';
  }
}

inline void write_report_text(const std::filesystem::path& file, const RunConfig& cfg, const PipelineResult& r) {
  std::ofstream out(file);
  out << "config=" << cfg.name << "\nhorizon=" << format_number(cfg.grid.horizon())
      << "\nstep=" << format_number(cfg.grid.step()) << "\npivot_time=" << format_number(cfg.grid.pivot_time())
      << "\nn_paths=" << cfg.n_paths << "\nbase_seed=" << cfg.base_seed << '\n';
  for (const LabelSummary& l : r.labels) {
    out << "label." << l.label << ".n_paths=" << l.n_paths << '\n';
    if (l.residual)
      out << "label." << l.label << ".residual_P_i=" << format_number(l.residual->p1) << "\nlabel." << l.label
          << ".residual_P_ik=" << format_number(l.residual->p2) << '\n';
  }
  for (const ReportRow& row : r.rows) {
    const std::string key = row.report.label + "." + row.report.spec;
    out << key << ".V_plus=" << format_number(row.report.v_plus) << '\n'
        << key << ".V_minus=" << format_number(row.report.v_minus) << '\n';
    if (row.report.s_plus)
      out << key << ".S_plus=" << format_number(*row.report.s_plus) << '\n'
          << key << ".variance=" << format_number(*row.report.variance) << '\n';
    if (row.oracle_v_plus)
      out << key << ".oracle_V_plus=" << format_number(row.oracle_v_plus->mean) << " +- "
          << format_number(row.oracle_v_plus->standard_error) << '\n';
    if (row.oracle_v_minus)
      out << key << ".oracle_V_minus=" << format_number(row.oracle_v_minus->mean) << " +- "
          << format_number(row.oracle_v_minus->standard_error) << '\n';
    if (row.oracle_s_plus)
      out << key << ".oracle_S_plus=" << format_number(row.oracle_s_plus->mean) << " +- "
          << format_number(row.oracle_s_plus->standard_error) << '\n';
  }
  for (const auto& note : r.notes) out << "note=" << note << '\n';
}

inline void write_checks_json(const std::filesystem::path& file, const RunConfig& cfg, const PipelineResult& r) {
  nlohmann::json j;
  j["config"] = cfg.name;
  j["all_pass"] = r.all_pass();
  j["checks"] = nlohmann::json::array();
  for (const CheckRecord& c : r.checks)
    j["checks"].push_back({{"name", c.name}, {"label", c.label}, {"subject", c.subject}, {"pass", c.pass},
                           {"value", c.value}, {"tolerance", c.tolerance}});
  j["notes"] = r.notes;
  std::ofstream(file) << j.dump(2) << '\n';
}

inline void write_estimate_summary(const std::filesystem::path& file, const PipelineResult& r) {
  std::ofstream out(file);
  out << "label,n_paths,residual_P_i,residual_P_ik,min_solved,max_solved\n";
  for (const LabelSummary& l : r.labels) {
    out << csv_field(l.label) << ',' << l.n_paths;
    if (l.residual)
      out << ',' << format_number(l.residual->p1) << ',' << format_number(l.residual->p2) << ','
          << format_number(l.residual->min_value) << ',' << format_number(l.residual->max_value);
    else
      out << ",,,,";
    out << '\n';
  }
}

/// Runs `opt.stage` and everything it depends on; returns the process exit status.
inline int run_stage(const RunConfig& cfg, const PipelineOptions& opt) {
  std::filesystem::create_directories(opt.out);
  const unsigned threads = opt.strict_determinism ? 1u : std::max(1u, opt.threads);
  const auto ensemble_file = opt.out / "ensemble.csv";

  std::optional<Ensemble> ens;
  if (opt.stage != Stage::Simulate && opt.stage != Stage::All) ens = read_ensemble(ensemble_file, cfg);
  if (!ens) {
    ens = simulate_config(cfg, threads);
    write_ensemble(ensemble_file, *ens, cfg.name);
  }
  if (opt.dump_paths) detail::dump_paths(opt.out / "paths.csv", *ens, opt.dump_path_limit);
  if (opt.stage == Stage::Simulate) return 0;

  const PipelineResult result = run_pipeline(cfg, *ens, opt);
  if (opt.stage == Stage::Estimate || opt.stage == Stage::Solve) {
    write_estimate_summary(opt.out / (opt.stage == Stage::Estimate ? "estimate.csv" : "solve.csv"), result);
    return 0;
  }
  write_report_csv(opt.out / "report.csv", result);
  write_report_text(opt.out / "report.txt", cfg, result);
  if (opt.stage == Stage::Value) return 0;
  write_checks_json(opt.out / "checks.json", cfg, result);
  return result.all_pass() ? 0 : 1;
}

}  // namespace fwdrates
