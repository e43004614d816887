#pragma once

// Explicit grid sweeps for the generalized one- and two-dimensional forward
// equations, plus the residual checks against estimated surfaces.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fwdrates/core.hpp"
#include "fwdrates/estimate.hpp"

namespace fwdrates {

struct SolvedProbabilities {
  enum class Source { Solved, Estimated };
  OccupationSurfaces surfaces;
  Source source = Source::Solved;
  int pivot_state = 0;
};

#if defined(__SIZEOF_FLOAT128__)
using WideReal = __float128;
#else
using WideReal = long double;
#endif

namespace detail {

/// Index whose increment drives the step m -> toward_pivot(m): m itself on the
/// future side, m + 1 on the past side.
inline int driving_index(const TimeGrid& grid, int m) { return grid.future(m) ? m : m + 1; }

/// The stored increment, or the exact count ratio behind it when that still
/// reproduces the stored value (it will not after the rates were edited).
template <class Real>
Real sweep_increment(double stored, std::int64_t num, std::int64_t den) {
  if (num != 0 && den > 0) {
    const Real exact = Real(num) / Real(den);
    const double rounded = static_cast<double>(exact);
    if (std::abs(rounded - stored) <= 1e-14 * std::abs(stored)) return exact;
  }
  return Real(stored);
}

template <class Real>
std::vector<std::vector<Real>> sweep_1d(const RateSystem& rates, int pivot_state) {
  const TimeGrid& grid = rates.grid;
  const int n = rates.n, p = grid.pivot();
  if (pivot_state < 0 || pivot_state >= n) throw ValidationError("pivot state out of range");
  const CountTables* counts = rates.counts.get();
  std::vector<std::vector<Real>> prob(static_cast<std::size_t>(n), std::vector<Real>(static_cast<std::size_t>(grid.size()), Real(0)));
  prob[static_cast<std::size_t>(pivot_state)][static_cast<std::size_t>(p)] = Real(1);
  for (int m : grid.sweep_order()) {
    if (m == p) continue;
    const int from = grid.toward_pivot(m), d = driving_index(grid, m);
    for (int i = 0; i < n; ++i) {
      Real v = prob[static_cast<std::size_t>(i)][static_cast<std::size_t>(from)];
      for (int j = 0; j < n; ++j) {
        const Real pj = prob[static_cast<std::size_t>(j)][static_cast<std::size_t>(from)];
        if (pj == Real(0)) continue;
        // Λ̃_ji: the pair (j,i) on the future side, (i,j) on the past side; the
        // denominator is P_j at `from` either way.
        const int pair = grid.future(d) ? pair_index(j, i, n) : pair_index(i, j, n);
        const double stored = rates.d1[static_cast<std::size_t>(pair)][static_cast<std::size_t>(d)];
        if (stored == 0.0) continue;
        const Real lam = counts ? sweep_increment<Real>(stored, counts->dq1[static_cast<std::size_t>(pair)][static_cast<std::size_t>(d)],
                                                        counts->occupancy[static_cast<std::size_t>(j)][static_cast<std::size_t>(from)])
                                : Real(stored);
        v += pj * lam;
      }
      prob[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = v;
    }
  }
  return prob;
}

template <class Real>
std::vector<std::vector<double>> narrow(const std::vector<std::vector<Real>>& v) {
  std::vector<std::vector<double>> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    for (const Real& x : v[i]) out[i].push_back(static_cast<double>(x));
  return out;
}

}  // namespace detail

/// P_i(t_m) = P_i(n) + Σ_j P_j(n) ΔΛ̃_ji(t_new), sweeping away from the pivot.
/// Accumulated in extended precision and rounded once at the end.
inline std::vector<std::vector<double>> solve_forward_1d(const RateSystem& rates, int pivot_state) {
  return detail::narrow(detail::sweep_1d<WideReal>(rates, pivot_state));
}

/// Two-dimensional sweep. P_ik = I_i I_k + I_k (P_i - I_i) + I_i (P_k - I_k) + S_ik,
/// where S accumulates Σ_jl P_jl ΔΛ̃_jilk over the rectangle ((s,t1]] x ((s,t2]].
///
/// The recursion amplifies rounding in the rates and in P by many orders of
/// magnitude when the empirical 2D rate measure has large total variation
/// (sparse pair cells, models with recovery), so the sweep runs in `Real`
/// and rebuilds estimated increments from their integer counts.
template <class Real = WideReal>
std::vector<Matrix> solve_forward_2d(const RateSystem& rates, int pivot_state) {
  const TimeGrid& grid = rates.grid;
  const int n = rates.n, size = grid.size(), p = grid.pivot();
  const auto p1 = detail::sweep_1d<Real>(rates, pivot_state);
  const CountTables* counts = rates.counts.get();
  if (counts && counts->joint.empty()) counts = nullptr;

  // Every rate block (x,y),(z,w) feeds one target pair from one source pair per quadrant:
  // future coordinate: target y from source x; past coordinate: target x from source y.
  // The source pair at the toward-pivot cell is also the P̃ denominator of the block.
  struct Route {
    const Matrix* block;
    const Grid2D<std::int64_t>* num;
    std::array<int, 4> target;  // index by quadrant (future1 * 2 + future2)
    std::array<int, 4> source;
  };
  std::vector<Route> routes;
  for (const auto& [key, block] : rates.d2) {
    const int x = pair_from(key.first, n), y = pair_to(key.first, n);
    const int z = pair_from(key.second, n), w = pair_to(key.second, n);
    Route r{&block, nullptr, {}, {}};
    if (counts) {
      auto it = counts->dq2.find(key);
      if (it != counts->dq2.end()) r.num = &it->second;
    }
    for (int f1 = 0; f1 < 2; ++f1)
      for (int f2 = 0; f2 < 2; ++f2) {
        const int ti = f1 ? y : x, si = f1 ? x : y;
        const int tk = f2 ? w : z, sk = f2 ? z : w;
        r.target[static_cast<std::size_t>(f1 * 2 + f2)] = ti * n + tk;
        r.source[static_cast<std::size_t>(f1 * 2 + f2)] = si * n + sk;
      }
    routes.push_back(r);
  }

  auto ind = [&](int i) { return i == pivot_state ? Real(1) : Real(0); };
  std::vector<Grid2D<Real>> out(static_cast<std::size_t>(n * n), Grid2D<Real>(size, Real(0)));
  std::vector<Grid2D<Real>> s(static_cast<std::size_t>(n * n), Grid2D<Real>(size, Real(0)));
  const auto order = grid.sweep_order();
  std::vector<Real> d(static_cast<std::size_t>(n * n));
  for (int m1 : order)
    for (int m2 : order) {
      if (m1 != p && m2 != p) {
        const int n1 = grid.toward_pivot(m1), n2 = grid.toward_pivot(m2);
        const int d1 = detail::driving_index(grid, m1), d2 = detail::driving_index(grid, m2);
        const std::size_t q = static_cast<std::size_t>((grid.future(m1) ? 2 : 0) + (grid.future(m2) ? 1 : 0));
        std::fill(d.begin(), d.end(), Real(0));
        for (const Route& r : routes) {
          const double stored = (*r.block)(d1, d2);
          if (stored == 0.0) continue;
          const std::size_t src = static_cast<std::size_t>(r.source[q]);
          const Real lam = r.num ? detail::sweep_increment<Real>(stored, (*r.num)(d1, d2), counts->joint[src](n1, n2))
                                 : Real(stored);
          d[static_cast<std::size_t>(r.target[q])] += out[src](n1, n2) * lam;
        }
        for (std::size_t ik = 0; ik < d.size(); ++ik) {
          Grid2D<Real>& sm = s[ik];
          sm(m1, m2) = sm(n1, m2) + sm(m1, n2) - sm(n1, n2) + d[ik];
        }
      }
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
          const Real ii = ind(i), ik = ind(k);
          const Real pi = p1[static_cast<std::size_t>(i)][static_cast<std::size_t>(m1)];
          const Real pk = p1[static_cast<std::size_t>(k)][static_cast<std::size_t>(m2)];
          out[static_cast<std::size_t>(i * n + k)](m1, m2) =
              ii * ik + ik * (pi - ii) + ii * (pk - ik) + s[static_cast<std::size_t>(i * n + k)](m1, m2);
        }
    }
  std::vector<Matrix> result(static_cast<std::size_t>(n * n), Matrix(size, 0.0));
  for (std::size_t b = 0; b < out.size(); ++b)
    for (std::size_t c = 0; c < out[b].raw().size(); ++c) result[b].raw()[c] = static_cast<double>(out[b].raw()[c]);
  return result;
}

inline SolvedProbabilities solve_forward(const RateSystem& rates, int pivot_state, bool two_dim = true) {
  SolvedProbabilities out;
  out.pivot_state = pivot_state;
  out.surfaces.grid = rates.grid;
  out.surfaces.n = rates.n;
  out.surfaces.p1 = solve_forward_1d(rates, pivot_state);
  if (two_dim) out.surfaces.p2 = solve_forward_2d(rates, pivot_state);
  return out;
}

struct ResidualReport {
  double p1 = 0.0;  // max |P_i solved - estimated|
  double p2 = 0.0;  // max |P_ik solved - estimated|, 0 when 2D is absent
  double min_value = 0.0;
  double max_value = 0.0;

  /// Solved values within [-eps, 1 + eps].
  bool within_bounds(double eps) const { return min_value >= -eps && max_value <= 1.0 + eps; }
};

inline ResidualReport residual_and_consistency(const OccupationSurfaces& solved, const OccupationSurfaces& estimated) {
  if (!(solved.grid == estimated.grid) || solved.n != estimated.n)
    throw ValidationError("solved and estimated surfaces live on different grids");
  ResidualReport r;
  r.min_value = std::numeric_limits<double>::infinity();
  r.max_value = -std::numeric_limits<double>::infinity();
  auto track = [&](double v) {
    r.min_value = std::min(r.min_value, v);
    r.max_value = std::max(r.max_value, v);
  };
  for (std::size_t i = 0; i < solved.p1.size(); ++i)
    for (std::size_t m = 0; m < solved.p1[i].size(); ++m) {
      r.p1 = std::max(r.p1, std::abs(solved.p1[i][m] - estimated.p1[i][m]));
      track(solved.p1[i][m]);
    }
  if (solved.has_joint() && estimated.has_joint())
    for (std::size_t b = 0; b < solved.p2.size(); ++b)
      for (std::size_t c = 0; c < solved.p2[b].raw().size(); ++c) {
        const double v = solved.p2[b].raw()[c];
        r.p2 = std::max(r.p2, std::abs(v - estimated.p2[b].raw()[c]));
        track(v);
      }
  return r;
}

}  // namespace fwdrates
