#pragma once

// Empirical conditional moment surfaces and the one- and two-dimensional
// forward/backward transition rates derived from them.

#include <cstdint>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "fwdrates/conditioning.hpp"
#include "fwdrates/core.hpp"
#include "fwdrates/path.hpp"
#include "fwdrates/simulate.hpp"

namespace fwdrates {

/// Denominators at or below this are treated as zero in the rate indicator.
inline constexpr double kDenominatorThreshold = 1e-12;

class InconsistentEnsemble : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using BlockKey = std::pair<int, int>;  // (pair index of (i,j), pair index of (k,l))

/// P_i(t) and P_ik(t1, t2) on the grid, with the P̃ accessors that resolve the
/// pivot conventions.
struct OccupationSurfaces {
  TimeGrid grid;
  int n = 0;
  std::vector<std::vector<double>> p1;  // [i][m]
  std::vector<Matrix> p2;               // [i*n + k](m1, m2)

  double p(int i, int m) const { return p1[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)]; }
  double joint(int i, int k, int m1, int m2) const { return p2[static_cast<std::size_t>(i * n + k)](m1, m2); }
  bool has_joint() const { return !p2.empty(); }

  /// P̃_ij(u^±): P_i(u^-) on the future side, P_j(u) on the past side.
  double tilde(int i, int j, int m) const { return grid.future(m) ? p(i, m - 1) : p(j, m); }

  /// P̃_ijkl(u1^±, u2^±) per quadrant: P_ik, P_jk, P_il or P_jl.
  double tilde(int i, int j, int k, int l, int m1, int m2) const {
    const int a = grid.future(m1) ? i : j;
    const int b = grid.future(m2) ? k : l;
    return joint(a, b, grid.settle(m1), grid.settle(m2));
  }
};

/// Raw integer sums behind the empirical surfaces; every surface is one of
/// these divided by n_paths.
struct CountTables {
  std::int64_t n_paths = 0;
  std::vector<std::vector<std::int64_t>> occupancy;  // [i][m]
  std::vector<Grid2D<std::int64_t>> joint;           // [i*n + k]
  std::vector<std::vector<std::int64_t>> dq1;        // [pair][m]
  std::map<BlockKey, Grid2D<std::int64_t>> dq2;
};

/// Empirical conditional surfaces for one conditioning cell.
struct MomentSurfaces {
  Label label;
  std::string label_name;
  std::size_t n_paths = 0;
  int pivot_state = 0;
  OccupationSurfaces occupation;
  std::vector<std::vector<double>> dq1;  // ΔQ_ij(t_m), [pair][m]
  std::map<BlockKey, Matrix> dq2;        // ΔQ_ijkl rectangle masses
  std::shared_ptr<const CountTables> counts;

  const TimeGrid& grid() const { return occupation.grid; }
  int states() const { return occupation.n; }
  double dq(int i, int j, int m) const {
    return dq1[static_cast<std::size_t>(pair_index(i, j, states()))][static_cast<std::size_t>(m)];
  }
};

/// Averages over exactly the paths listed in `members`. Occupation counts are
/// accumulated as integers, so the result does not depend on path order.
inline MomentSurfaces estimate_moment_surfaces(const Ensemble& ens, const std::vector<std::size_t>& members,
                                               bool two_dim = true) {
  if (members.empty()) throw EmptyCellError("conditioning cell is empty");
  const TimeGrid& grid = ens.grid;
  const int n = ens.space.size();
  const int size = grid.size();
  const int p = grid.pivot();

  MomentSurfaces out;
  out.n_paths = members.size();
  out.pivot_state = ens.paths[members.front()].state(p);
  out.occupation.grid = grid;
  out.occupation.n = n;

  std::vector<std::vector<std::int64_t>> occ_diff(static_cast<std::size_t>(n),
                                                  std::vector<std::int64_t>(static_cast<std::size_t>(size + 1), 0));
  std::vector<Grid2D<std::int64_t>> joint_diff;
  if (two_dim) joint_diff.assign(static_cast<std::size_t>(n * n), Grid2D<std::int64_t>(size + 1, 0));
  std::vector<std::vector<std::int64_t>> dq1_raw(static_cast<std::size_t>(n * n),
                                                 std::vector<std::int64_t>(static_cast<std::size_t>(size), 0));
  std::map<BlockKey, Grid2D<std::int64_t>> dq2_raw;

  struct Segment {
    int state, first, last;
  };
  std::vector<Segment> segments;
  for (std::size_t k : members) {
    const Path& path = ens.paths[k];
    if (path.state(p) != out.pivot_state)
      throw InconsistentEnsemble("conditioning cell mixes paths with different Z(s)");

    segments.clear();
    int start = 0;
    for (const Jump& j : path.jumps()) {
      segments.push_back({j.from, start, j.index - 1});
      start = j.index;
    }
    segments.push_back({path.state(size - 1), start, size - 1});

    for (const Segment& s : segments) {
      auto& d = occ_diff[static_cast<std::size_t>(s.state)];
      d[static_cast<std::size_t>(s.first)] += 1;
      d[static_cast<std::size_t>(s.last + 1)] -= 1;
    }
    if (two_dim) {
      for (const Segment& a : segments)
        for (const Segment& b : segments) {
          auto& d = joint_diff[static_cast<std::size_t>(a.state * n + b.state)];
          d(a.first, b.first) += 1;
          d(a.first, b.last + 1) -= 1;
          d(a.last + 1, b.first) -= 1;
          d(a.last + 1, b.last + 1) += 1;
        }
    }

    const auto incs = count_increments(path, grid, n);
    for (const CountIncrement& c : incs)
      dq1_raw[static_cast<std::size_t>(c.pair)][static_cast<std::size_t>(c.index)] += c.value;
    if (two_dim) {
      for (const CountIncrement& a : incs)
        for (const CountIncrement& b : incs) {
          auto it = dq2_raw.find({a.pair, b.pair});
          if (it == dq2_raw.end()) it = dq2_raw.emplace(BlockKey{a.pair, b.pair}, Grid2D<std::int64_t>(size, 0)).first;
          it->second(a.index, b.index) += static_cast<std::int64_t>(a.value) * b.value;
        }
    }
  }

  const double inv = 1.0 / static_cast<double>(members.size());
  const double count = static_cast<double>(members.size());
  auto tables = std::make_shared<CountTables>();
  tables->n_paths = static_cast<std::int64_t>(members.size());
  tables->occupancy.assign(static_cast<std::size_t>(n), std::vector<std::int64_t>(static_cast<std::size_t>(size)));
  out.occupation.p1.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(size)));
  for (int i = 0; i < n; ++i) {
    std::int64_t acc = 0;
    for (int m = 0; m < size; ++m) {
      acc += occ_diff[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
      tables->occupancy[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = acc;
      out.occupation.p1[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = static_cast<double>(acc) / count;
    }
  }

  out.dq1.assign(static_cast<std::size_t>(n * n), std::vector<double>(static_cast<std::size_t>(size), 0.0));
  for (std::size_t q = 0; q < dq1_raw.size(); ++q)
    for (int m = 0; m < size; ++m)
      out.dq1[q][static_cast<std::size_t>(m)] = static_cast<double>(dq1_raw[q][static_cast<std::size_t>(m)]) * inv;

  if (two_dim) {
    tables->joint.reserve(static_cast<std::size_t>(n * n));
    out.occupation.p2.reserve(static_cast<std::size_t>(n * n));
    for (auto& d : joint_diff) {
      d.prefix_sum();
      Grid2D<std::int64_t> counts(size, 0);
      Matrix probs(size, 0.0);
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
          counts(r, c) = d(r, c);
          probs(r, c) = static_cast<double>(d(r, c)) / count;
        }
      tables->joint.push_back(std::move(counts));
      out.occupation.p2.push_back(std::move(probs));
    }
    for (auto& [key, raw] : dq2_raw) {
      Matrix q(size, 0.0);
      for (std::size_t c = 0; c < raw.raw().size(); ++c) q.raw()[c] = static_cast<double>(raw.raw()[c]) * inv;
      out.dq2.emplace(key, std::move(q));
    }
    tables->dq2 = std::move(dq2_raw);
  }
  tables->dq1 = std::move(dq1_raw);
  out.counts = std::move(tables);
  return out;
}

inline MomentSurfaces estimate_moment_surfaces(const Ensemble& ens, const ConditioningScheme& scheme,
                                               const Label& label, bool two_dim = true) {
  MomentSurfaces out = estimate_moment_surfaces(ens, cell_members(ens, scheme, label), two_dim);
  out.label = label;
  out.label_name = scheme.name(label, ens.space);
  return out;
}

// ---------------------------------------------------------------------------
// Transition rates
// ---------------------------------------------------------------------------

/// Increments ΔΛ_ij(t_m) and ΔΛ_ijkl(t_m1, t_m2) for one conditioning cell.
struct RateSystem {
  TimeGrid grid;
  int n = 0;
  std::vector<std::vector<double>> d1;  // [pair][m]
  std::map<BlockKey, Matrix> d2;
  /// Counts the increments were estimated from, if any. The solver uses them to
  /// recover each increment as an exact ratio wherever it still matches.
  std::shared_ptr<const CountTables> counts;

  double inc(int i, int j, int m) const {
    return d1[static_cast<std::size_t>(pair_index(i, j, n))][static_cast<std::size_t>(m)];
  }
  const Matrix* block(int i, int j, int k, int l) const {
    auto it = d2.find({pair_index(i, j, n), pair_index(k, l, n)});
    return it == d2.end() ? nullptr : &it->second;
  }
  double inc(int i, int j, int k, int l, int m1, int m2) const {
    const Matrix* b = block(i, j, k, l);
    return b ? (*b)(m1, m2) : 0.0;
  }

  /// Λ̃_ij: Λ_ij on the future side, Λ_ji on the past side.
  double tilde_inc(int i, int j, int m) const { return grid.future(m) ? inc(i, j, m) : inc(j, i, m); }

  /// Λ̃_ijkl: Λ_ijkl, Λ_jikl, Λ_ijlk or Λ_jilk by quadrant.
  const Matrix* tilde_block(int i, int j, int k, int l, bool future1, bool future2) const {
    return block(future1 ? i : j, future1 ? j : i, future2 ? k : l, future2 ? l : k);
  }

  bool has_two_dim() const { return !d2.empty(); }

  static RateSystem zero(const TimeGrid& grid, int n) {
    RateSystem r;
    r.grid = grid;
    r.n = n;
    r.d1.assign(static_cast<std::size_t>(n * n), std::vector<double>(static_cast<std::size_t>(grid.size()), 0.0));
    return r;
  }
};

/// ΔΛ_ij(t_m) = ΔQ_ij(t_m) / P̃_ij(t_m^±), zero where the denominator vanishes.
inline RateSystem transition_rates_1d(const MomentSurfaces& s) {
  const OccupationSurfaces& occ = s.occupation;
  RateSystem r = RateSystem::zero(occ.grid, occ.n);
  for (int i = 0; i < occ.n; ++i)
    for (int j = 0; j < occ.n; ++j) {
      auto& out = r.d1[static_cast<std::size_t>(pair_index(i, j, occ.n))];
      for (int m = 1; m < occ.grid.size(); ++m) {
        const double dq = s.dq(i, j, m);
        if (dq == 0.0) continue;
        const double den = occ.tilde(i, j, m);
        if (den <= kDenominatorThreshold)
          throw InconsistentEnsemble("transition mass at an unoccupied state (1D rate " + std::to_string(i) + "," +
                                     std::to_string(j) + " at index " + std::to_string(m) + ")");
        out[static_cast<std::size_t>(m)] = dq / den;
      }
    }
  r.counts = s.counts;
  return r;
}

/// ΔΛ_ijkl = ΔQ_ijkl / P̃_ijkl(u1^±, u2^±); fills only the two-dimensional part.
inline RateSystem transition_rates_2d(const MomentSurfaces& s) {
  const OccupationSurfaces& occ = s.occupation;
  if (!occ.has_joint()) throw ValidationError("two-dimensional surfaces were not estimated");
  RateSystem r;
  r.grid = occ.grid;
  r.n = occ.n;
  const int n = occ.n, size = occ.grid.size();
  for (const auto& [key, dq] : s.dq2) {
    const int i = pair_from(key.first, n), j = pair_to(key.first, n);
    const int k = pair_from(key.second, n), l = pair_to(key.second, n);
    Matrix out(size, 0.0);
    for (int m1 = 1; m1 < size; ++m1)
      for (int m2 = 1; m2 < size; ++m2) {
        const double q = dq(m1, m2);
        if (q == 0.0) continue;
        const double den = occ.tilde(i, j, k, l, m1, m2);
        if (den <= kDenominatorThreshold)
          throw InconsistentEnsemble("transition mass at an unoccupied state pair (2D rate)");
        out(m1, m2) = q / den;
      }
    r.d2.emplace(key, std::move(out));
  }
  r.counts = s.counts;
  return r;
}

inline RateSystem transition_rates(const MomentSurfaces& s) {
  RateSystem r = transition_rates_1d(s);
  if (s.occupation.has_joint()) r.d2 = transition_rates_2d(s).d2;
  r.counts = s.counts;
  return r;
}

/// Forward one-dimensional rates of a duration-free hazard model:
/// ΔΛ_ij(t_m) = λ_ij(t_{m-1}) h, diagonals from row sums. Past-side increments
/// stay zero, so this is only a complete rate system for s = 0.
inline RateSystem forward_rates_from_hazards(const IntensityModel& model, const TimeGrid& grid) {
  if (!model.markov()) throw ValidationError("hazard rates need a duration-free model");
  const int n = model.space().size();
  RateSystem r = RateSystem::zero(grid, n);
  for (int i = 0; i < n; ++i)
    for (const auto& e : model.exits(i))
      for (int m = grid.pivot() + 1; m < grid.size(); ++m) {
        const double d = e.intensity(grid.time(m - 1), 0.0) * grid.step();
        r.d1[static_cast<std::size_t>(pair_index(i, e.to, n))][static_cast<std::size_t>(m)] += d;
        r.d1[static_cast<std::size_t>(pair_index(i, i, n))][static_cast<std::size_t>(m)] -= d;
      }
  return r;
}

}  // namespace fwdrates
