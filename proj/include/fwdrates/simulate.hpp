#pragma once

// Discrete-time competing-risks simulation of (generally non-Markov) jump
// processes on the grid, plus per-path discounted payouts.

#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include "fwdrates/cashflow.hpp"
#include "fwdrates/core.hpp"
#include "fwdrates/path.hpp"

namespace fwdrates {

class GridTooCoarse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What an intensity may look at. Deliberately small: the estimation side
/// never sees it, only the realised states.
struct HistorySummary {
  int state = 0;
  double duration = 0.0;  // time since entering `state`
  bool exercised = false;
};

/// Parametric intensity families λ(t, duration).
struct Intensity {
  enum class Family { Constant, Gompertz, DurationDecay, SelectGompertz };

  Family family = Family::Constant;
  double level = 0.0;
  double scale = 0.0;
  double growth = 0.0;
  double decay = 0.0;
  double select = 0.0;

  static Intensity constant(double v) { return {Family::Constant, v}; }
  static Intensity gompertz(double level, double scale, double growth) {
    return {Family::Gompertz, level, scale, growth};
  }
  static Intensity duration_decay(double level, double scale, double decay) {
    return {Family::DurationDecay, level, scale, 0.0, decay};
  }
  static Intensity select_gompertz(double level, double scale, double growth, double select, double decay) {
    return {Family::SelectGompertz, level, scale, growth, decay, select};
  }

  bool duration_dependent() const {
    return family == Family::DurationDecay || family == Family::SelectGompertz;
  }

  double operator()(double t, double duration) const {
    switch (family) {
      case Family::Constant:
        return level;
      case Family::Gompertz:
        return level + scale * std::exp(growth * t);
      case Family::DurationDecay:
        return level + scale * std::exp(-decay * duration);
      case Family::SelectGompertz:
        return (level + scale * std::exp(growth * t)) * (1.0 + select * std::exp(-decay * duration));
    }
    return 0.0;
  }
};

class IntensityModel {
 public:
  struct Exit {
    int to;
    Intensity intensity;
  };

  IntensityModel() = default;
  IntensityModel(StateSpace space, int initial_state, double initial_duration = 0.0)
      : space_(std::move(space)), initial_(initial_state), initial_duration_(initial_duration),
        exits_(static_cast<std::size_t>(space_.size())) {
    if (initial_state < 0 || initial_state >= space_.size()) throw ValidationError("initial state out of range");
  }

  void set(int from, int to, Intensity intensity) {
    if (from == to) throw ValidationError("intensity needs from != to");
    auto& list = exits_.at(static_cast<std::size_t>(from));
    for (auto& e : list)
      if (e.to == to) {
        e.intensity = intensity;
        return;
      }
    list.push_back({to, intensity});
  }

  const StateSpace& space() const { return space_; }
  int initial_state() const { return initial_; }
  double initial_duration() const { return initial_duration_; }
  const std::vector<Exit>& exits(int from) const { return exits_.at(static_cast<std::size_t>(from)); }

  double rate(int from, int to, double t, const HistorySummary& h) const {
    for (const auto& e : exits(from))
      if (e.to == to) return e.intensity(t, h.duration);
    return 0.0;
  }

  bool markov() const {
    for (const auto& list : exits_)
      for (const auto& e : list)
        if (e.intensity.duration_dependent()) return false;
    return true;
  }

  /// Rejects grids on which some exit probability Σ_j λ_ij h could exceed one.
  /// Durations are probed at 0 and at the horizon, where the monotone families peak.
  void validate_grid(const TimeGrid& grid) const {
    for (int i = 0; i < space_.size(); ++i)
      for (int m = 0; m < grid.steps(); ++m)
        for (double d : {0.0, grid.horizon() + initial_duration_}) {
          double total = 0.0;
          for (const auto& e : exits(i)) {
            double lam = e.intensity(grid.time(m), d);
            if (!(lam >= 0.0) || !std::isfinite(lam))
              throw ValidationError("intensity " + space_.label(i) + "->" + space_.label(e.to) +
                                    " is negative or non-finite");
            total += lam;
          }
          if (total * grid.step() > 1.0)
            throw GridTooCoarse("exit probability from '" + space_.label(i) + "' exceeds one; refine the grid");
        }
  }

 private:
  StateSpace space_;
  int initial_ = 0;
  double initial_duration_ = 0.0;
  std::vector<std::vector<Exit>> exits_;
};

struct SimulationOptions {
  /// Grid indices at which S0 -> S1 transitions are suppressed (see
  /// FreePolicySpec::lump_sum_indices). Empty means nothing is blocked.
  std::vector<bool> blocked_exercise;
};

/// One path; at most one transition per step, chosen by a single uniform
/// draw partitioned proportionally to λ_ij(t_{m-1}) h.
inline Path simulate_path(const IntensityModel& model, const TimeGrid& grid, std::uint64_t seed,
                          const SimulationOptions& options = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const StateSpace& space = model.space();
  const double h = grid.step();

  int state = model.initial_state();
  double entered = -model.initial_duration();
  std::vector<Jump> jumps;
  std::vector<double> cumulative;
  for (int m = 1; m <= grid.steps(); ++m) {
    const auto& exits = model.exits(state);
    if (exits.empty()) continue;
    const double t = grid.time(m - 1);
    const HistorySummary summary{state, t - entered, space.in_s1(state)};
    const bool blocked = !options.blocked_exercise.empty() && options.blocked_exercise[static_cast<std::size_t>(m)];
    cumulative.clear();
    double total = 0.0;
    for (const auto& e : exits) {
      double p = e.intensity(t, summary.duration) * h;
      if (blocked && space.in_s0(state) && space.in_s1(e.to)) p = 0.0;
      total += p;
      cumulative.push_back(total);
    }
    if (total > 1.0) throw GridTooCoarse("transition probability exceeds one at t = " + std::to_string(t));
    const double u = uniform(rng);
    for (std::size_t k = 0; k < exits.size(); ++k) {
      if (u < cumulative[k]) {
        jumps.push_back({m, state, exits[k].to});
        state = exits[k].to;
        entered = grid.time(m);
        break;
      }
    }
  }
  return Path(model.initial_state(), std::move(jumps), grid.size());
}

struct Ensemble {
  TimeGrid grid;
  StateSpace space;
  double initial_duration = 0.0;
  std::uint64_t base_seed = 0;
  std::vector<Path> paths;
};

/// Path k uses seed base_seed + k, so results do not depend on `threads`.
inline Ensemble simulate_ensemble(const IntensityModel& model, const TimeGrid& grid, std::size_t n_paths,
                                  std::uint64_t base_seed, const SimulationOptions& options = {},
                                  unsigned threads = 1) {
  model.validate_grid(grid);
  Ensemble ens{grid, model.space(), model.initial_duration(), base_seed, std::vector<Path>(n_paths)};
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n_paths, 1))));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) ens.paths[k] = simulate_path(model, grid, base_seed + k, options);
  };
  if (threads == 1) {
    work(0, n_paths);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n_paths + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      std::size_t b = t * chunk, e = std::min(n_paths, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  return ens;
}

/// Y+ = ∫_(s,T] κ(s)/κ(u) B(du) on one path.
inline double path_payout_future(const Path& path, const CashflowSpec1D& spec, const DiscountCurve& kappa,
                                 const TimeGrid& grid) {
  double acc = 0.0;
  for (int m = grid.pivot() + 1; m <= grid.steps(); ++m)
    acc += kappa.weight(m, grid.pivot()) * cashflow_increment(spec, path, m);
  return acc;
}

/// Y- = ∫_[0,s] κ(s)/κ(u) B(du) on one path.
inline double path_payout_past(const Path& path, const CashflowSpec1D& spec, const DiscountCurve& kappa,
                               const TimeGrid& grid) {
  double acc = 0.0;
  for (int m = 0; m <= grid.pivot(); ++m) acc += kappa.weight(m, grid.pivot()) * cashflow_increment(spec, path, m);
  return acc;
}

/// Free-policy payouts; the direct evaluation flags lump sums at exercise.
inline FreePolicyValue path_payout_future(const Path& path, const FreePolicySpec& fp, const DiscountCurve& kappa,
                                          const TimeGrid& grid) {
  return eval_free_policy_direct(fp.discounted(kappa, grid.pivot()), path, grid.future_range());
}

inline FreePolicyValue path_payout_past(const Path& path, const FreePolicySpec& fp, const DiscountCurve& kappa,
                                        const TimeGrid& grid) {
  return eval_free_policy_direct(fp.discounted(kappa, grid.pivot()), path, grid.past());
}

}  // namespace fwdrates
