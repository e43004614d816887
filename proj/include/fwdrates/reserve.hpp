#pragma once

// Reserves, second moments and conditional variances from occupation
// surfaces and transition rates.

#include <optional>
#include <string>
#include <vector>

#include "fwdrates/cashflow.hpp"
#include "fwdrates/core.hpp"
#include "fwdrates/estimate.hpp"
#include "fwdrates/path.hpp"

namespace fwdrates {

namespace detail {

inline void require_joint(const OccupationSurfaces& occ, const RateSystem& rates, bool need_rates) {
  if (!occ.has_joint()) throw ValidationError("two-dimensional occupation probabilities are missing");
  if (need_rates && !rates.has_two_dim()) throw ValidationError("two-dimensional transition rates are missing");
  if (!(occ.grid == rates.grid) || occ.n != rates.n) throw ValidationError("surfaces and rates live on different grids");
}

inline void require_same_grid(const OccupationSurfaces& occ, const RateSystem& rates) {
  if (!(occ.grid == rates.grid) || occ.n != rates.n) throw ValidationError("surfaces and rates live on different grids");
}

inline double pivot_indicator(const OccupationSurfaces& occ, int i) { return occ.p(i, occ.grid.pivot()); }

/// E[ΔN_ab(t_m1) ΔN_cd(t_m2) | G_s] reassembled from P̃ and ΔΛ.
inline double joint_moment(const OccupationSurfaces& occ, const Matrix& block, int a, int b, int c, int d, int m1,
                           int m2) {
  const double lam = block(m1, m2);
  return lam == 0.0 ? 0.0 : lam * occ.tilde(a, b, c, d, m1, m2);
}

/// Y(m2, m3) for the indicator correction of I_i(u1^-) against N_kl(du2):
/// past side Σ_j ΔΛ_klij with P̃_klij, future side Σ_j ΔΛ_klji with P̃_klji.
/// Returned already cumulated along m3 so that row m2 at column m1 holds the
/// sum over m3 in [m1, s] (m1 <= s) or (s, m1) (m1 > s).
inline Matrix indicator_correction(const OccupationSurfaces& occ, const RateSystem& rates, int i, int k, int l) {
  const TimeGrid& grid = occ.grid;
  const int n = occ.n, size = grid.size(), p = grid.pivot();
  Matrix y(size, 0.0);
  for (int j = 0; j < n; ++j) {
    if (const Matrix* past = rates.block(k, l, i, j))
      for (int m2 = 1; m2 < size; ++m2)
        for (int m3 = 1; m3 <= p; ++m3) y(m2, m3) += joint_moment(occ, *past, k, l, i, j, m2, m3);
    if (const Matrix* fut = rates.block(k, l, j, i))
      for (int m2 = 1; m2 < size; ++m2)
        for (int m3 = p + 1; m3 < size; ++m3) y(m2, m3) += joint_moment(occ, *fut, k, l, j, i, m2, m3);
  }
  Matrix c(size, 0.0);
  for (int m2 = 0; m2 < size; ++m2) {
    double acc = 0.0;
    for (int m1 = p; m1 >= 0; --m1) c(m2, m1) = acc += y(m2, m1);
    acc = 0.0;
    for (int m1 = p + 1; m1 < size; ++m1) {
      c(m2, m1) = acc;
      acc += y(m2, m1);
    }
  }
  return c;
}

/// E[ΔN_kl(t_m)] = P̃_kl(t_m^±) ΔΛ_kl(t_m).
inline std::vector<double> expected_increments(const OccupationSurfaces& occ, const RateSystem& rates, int k, int l) {
  std::vector<double> e(static_cast<std::size_t>(occ.grid.size()), 0.0);
  for (int m = 1; m < occ.grid.size(); ++m) e[static_cast<std::size_t>(m)] = occ.tilde(k, l, m) * rates.inc(k, l, m);
  return e;
}

}  // namespace detail

/// V+ = E[∫_(s,T] κ(s)/κ(u) B(du) | G_s].
inline double expected_future_1d(const CashflowSpec1D& spec, const OccupationSurfaces& occ, const RateSystem& rates,
                                 const DiscountCurve& kappa) {
  detail::require_same_grid(occ, rates);
  const TimeGrid& grid = occ.grid;
  const int n = occ.n, p = grid.pivot();
  double acc = 0.0;
  for (int m = p + 1; m < grid.size(); ++m) {
    double inc = 0.0;
    for (int i = 0; i < n; ++i) {
      inc += occ.p(i, m - 1) * spec.sojourn(i)[m];
      for (int j = 0; j < n; ++j)
        if (j != i && spec.has_transition(i, j)) inc += spec.transition_at(i, j, m) * occ.p(i, m - 1) * rates.inc(i, j, m);
    }
    acc += kappa.weight(m, p) * inc;
  }
  return acc;
}

/// V- = E[∫_[0,s] κ(s)/κ(u) B(du) | G_s]; transitions are weighted by P_j(u).
inline double expected_past_1d(const CashflowSpec1D& spec, const OccupationSurfaces& occ, const RateSystem& rates,
                               const DiscountCurve& kappa) {
  detail::require_same_grid(occ, rates);
  const TimeGrid& grid = occ.grid;
  const int n = occ.n, p = grid.pivot();
  double acc = 0.0;
  for (int m = 0; m <= p; ++m) {
    double inc = 0.0;
    for (int i = 0; i < n; ++i) {
      inc += occ.p(i, grid.left(m)) * spec.sojourn(i)[m];
      for (int j = 0; j < n; ++j)
        if (j != i && spec.has_transition(i, j)) inc += spec.transition_at(i, j, m) * occ.p(j, m) * rates.inc(i, j, m);
    }
    acc += kappa.weight(m, p) * inc;
  }
  return acc;
}

/// E[A(T) | G_s] for a two-dimensional canonical representation over the full
/// grid square. Any discounting or region restriction is carried by `spec`.
inline double expected_2d(const CashflowSpec2D& spec, const OccupationSurfaces& occ, const RateSystem& rates) {
  const bool need_rates = !spec.mixed_terms().empty() || !spec.double_terms().empty();
  detail::require_joint(occ, rates, need_rates);
  const TimeGrid& grid = occ.grid;
  const int size = grid.size();
  const IndexRect full{grid.all(), grid.all()};
  double acc = 0.0;

  for (const auto& [ij, a] : spec.sojourn_terms()) {
    const Matrix& pij = occ.p2[static_cast<std::size_t>(ij.first * occ.n + ij.second)];
    acc += integrate_2d([&](int m1, int m2) { return pij(grid.left(m1), grid.left(m2)); }, a, full);
  }

  for (const auto& [ikl, a] : spec.mixed_terms()) {
    const auto [i, k, l] = ikl;
    const Measure1D& mu = spec.mixed_measure(i);
    if (mu.is_zero()) continue;
    const double ii = detail::pivot_indicator(occ, i);
    const std::vector<double> e = detail::expected_increments(occ, rates, k, l);
    const Matrix corr = detail::indicator_correction(occ, rates, i, k, l);
    for (int m1 = 0; m1 < size; ++m1) {
      if (mu[m1] == 0.0) continue;
      double inner = 0.0;
      for (int m2 = 1; m2 < size; ++m2) {
        const double v = ii * e[static_cast<std::size_t>(m2)] + corr(m2, m1);
        if (v != 0.0) inner += a.at(m1, m2) * v;
      }
      acc += mu[m1] * inner;
    }
  }

  for (const auto& [ijkl, a] : spec.double_terms()) {
    const auto [i, j, k, l] = ijkl;
    const Matrix* block = rates.block(i, j, k, l);
    if (!block) continue;
    for (int m1 = 1; m1 < size; ++m1)
      for (int m2 = 1; m2 < size; ++m2) {
        const double mom = detail::joint_moment(occ, *block, i, j, k, l, m1, m2);
        if (mom != 0.0) acc += a.at(m1, m2) * mom;
      }
  }
  return acc;
}

/// S+ = E[(Y+)^2 | G_s], evaluated term by term from B without building the
/// squared representation.
inline double second_moment_future(const CashflowSpec1D& spec, const OccupationSurfaces& occ, const RateSystem& rates,
                                   const DiscountCurve& kappa) {
  detail::require_joint(occ, rates, false);
  const TimeGrid& grid = occ.grid;
  const int n = occ.n, size = grid.size(), p = grid.pivot();
  const std::vector<double> w = kappa.weights(p);
  auto wm = [&](int m) { return w[static_cast<std::size_t>(m)]; };

  std::vector<int> paying;
  for (int i = 0; i < n; ++i)
    if (!spec.sojourn(i).is_zero()) paying.push_back(i);
  std::vector<std::pair<int, int>> jumping;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && spec.has_transition(i, j)) jumping.emplace_back(i, j);
  if (!jumping.empty() && !rates.has_two_dim()) throw ValidationError("two-dimensional transition rates are missing");

  double sojourn_pairs = 0.0;
  for (int i : paying)
    for (int j : paying) {
      const Matrix& pij = occ.p2[static_cast<std::size_t>(i * n + j)];
      for (int m1 = p + 1; m1 < size; ++m1) {
        const double bi = wm(m1) * spec.sojourn(i)[m1];
        if (bi == 0.0) continue;
        for (int m2 = p + 1; m2 < size; ++m2) sojourn_pairs += bi * wm(m2) * spec.sojourn(j)[m2] * pij(m1 - 1, m2 - 1);
      }
    }

  double mixed_at_pivot = 0.0, mixed_correction = 0.0;
  for (int i : paying) {
    double paid = 0.0;
    for (int m1 = p + 1; m1 < size; ++m1) paid += wm(m1) * spec.sojourn(i)[m1];
    for (auto [k, l] : jumping) {
      double benefit = 0.0;
      for (int m2 = p + 1; m2 < size; ++m2)
        benefit += wm(m2) * spec.transition_at(k, l, m2) * occ.p(k, m2 - 1) * rates.inc(k, l, m2);
      mixed_at_pivot += occ.p(i, p) * paid * benefit;

      // H(m3) = Σ_m2 w b_kl(m2) Σ_j P_kj(m2-1, m3-1) ΔΛ_klji(m2, m3), then summed over m3 < m1.
      std::vector<double> h(static_cast<std::size_t>(size), 0.0);
      for (int j = 0; j < n; ++j) {
        const Matrix* block = rates.block(k, l, j, i);
        if (!block) continue;
        const Matrix& pkj = occ.p2[static_cast<std::size_t>(k * n + j)];
        for (int m2 = p + 1; m2 < size; ++m2) {
          const double b = wm(m2) * spec.transition_at(k, l, m2);
          if (b == 0.0) continue;
          for (int m3 = p + 1; m3 < size; ++m3) {
            const double lam = (*block)(m2, m3);
            if (lam != 0.0) h[static_cast<std::size_t>(m3)] += b * pkj(m2 - 1, m3 - 1) * lam;
          }
        }
      }
      double below = 0.0;
      for (int m1 = p + 1; m1 < size; ++m1) {
        mixed_correction += wm(m1) * spec.sojourn(i)[m1] * below;
        below += h[static_cast<std::size_t>(m1)];
      }
    }
  }

  double double_jumps = 0.0;
  for (auto [i, j] : jumping)
    for (auto [k, l] : jumping) {
      const Matrix* block = rates.block(i, j, k, l);
      if (!block) continue;
      const Matrix& pik = occ.p2[static_cast<std::size_t>(i * n + k)];
      for (int m1 = p + 1; m1 < size; ++m1) {
        const double b1 = wm(m1) * spec.transition_at(i, j, m1);
        if (b1 == 0.0) continue;
        for (int m2 = p + 1; m2 < size; ++m2) {
          const double lam = (*block)(m1, m2);
          if (lam != 0.0) double_jumps += b1 * wm(m2) * spec.transition_at(k, l, m2) * pik(m1 - 1, m2 - 1) * lam;
        }
      }
    }

  return sojourn_pairs + 2.0 * mixed_at_pivot + 2.0 * mixed_correction + double_jumps;
}

inline double conditional_variance(double second_moment, double mean) { return second_moment - mean * mean; }

// ---------------------------------------------------------------------------
// Free-policy reserves
// ---------------------------------------------------------------------------

namespace detail {

/// The post-exercise part: ρ(u2,k,l)-rescaled S1 payments with u1 in `rows`
/// and the exercise jump N_kl(du2) in `cols`.
inline double free_policy_after_exercise(const FreePolicySpec& fp, const OccupationSurfaces& occ,
                                         const RateSystem& rates, const std::vector<double>& w, IndexRange rows,
                                         IndexRange cols) {
  const TimeGrid& grid = occ.grid;
  const int n = occ.n, size = grid.size(), p = grid.pivot();
  const StateSpace& space = fp.space;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    if (!space.in_s0(k)) continue;
    for (int l = 0; l < n; ++l) {
      if (!space.in_s1(l)) continue;
      const std::vector<double> rho = fp.rho_curve(k, l);
      auto rho_at = [&](int m) { return cols.contains(m) ? rho[static_cast<std::size_t>(m)] : 0.0; };
      const std::vector<double> e = expected_increments(occ, rates, k, l);
      double exercised = 0.0;
      for (int m2 = cols.first; m2 <= cols.last; ++m2) exercised += rho_at(m2) * e[static_cast<std::size_t>(m2)];

      for (int i = 0; i < n; ++i) {
        if (!space.in_s1(i)) continue;
        const Measure1D& ci = fp.scheme.sojourn(i);
        if (!ci.is_zero()) {
          double paid = 0.0;
          for (int m1 = rows.first; m1 <= rows.last; ++m1) paid += w[static_cast<std::size_t>(m1)] * ci[m1];
          acc += pivot_indicator(occ, i) * paid * exercised;

          // G(m3) = Σ_m2 ρ(m2) Σ_j E[ΔN_kl(m2) ΔN(m3)], with the pair (i,j) on the
          // past side and (j,i) on the future side; then m3 summed over the
          // region between u1 and the pivot.
          std::vector<double> g(static_cast<std::size_t>(size), 0.0);
          for (int j = 0; j < n; ++j) {
            if (const Matrix* past = rates.block(k, l, i, j))
              for (int m2 = cols.first; m2 <= cols.last; ++m2)
                for (int m3 = 1; m3 <= p; ++m3)
                  g[static_cast<std::size_t>(m3)] += rho_at(m2) * joint_moment(occ, *past, k, l, i, j, m2, m3);
            if (const Matrix* fut = rates.block(k, l, j, i))
              for (int m2 = cols.first; m2 <= cols.last; ++m2)
                for (int m3 = p + 1; m3 < size; ++m3)
                  g[static_cast<std::size_t>(m3)] += rho_at(m2) * joint_moment(occ, *fut, k, l, j, i, m2, m3);
          }
          std::vector<double> region(static_cast<std::size_t>(size), 0.0);
          double run = 0.0;
          for (int m1 = p; m1 >= 0; --m1) region[static_cast<std::size_t>(m1)] = run += g[static_cast<std::size_t>(m1)];
          run = 0.0;
          for (int m1 = p + 1; m1 < size; ++m1) {
            region[static_cast<std::size_t>(m1)] = run;
            run += g[static_cast<std::size_t>(m1)];
          }
          for (int m1 = rows.first; m1 <= rows.last; ++m1)
            acc += w[static_cast<std::size_t>(m1)] * ci[m1] * region[static_cast<std::size_t>(m1)];
        }

        for (int j = 0; j < n; ++j) {
          if (j == i || !space.in_s1(j) || !fp.scheme.has_transition(i, j)) continue;
          const Matrix* block = rates.block(i, j, k, l);
          if (!block) continue;
          for (int m1 = std::max(rows.first, 1); m1 <= rows.last; ++m1) {
            const double c = w[static_cast<std::size_t>(m1)] * fp.scheme.transition_at(i, j, m1);
            if (c == 0.0) continue;
            for (int m2 = std::max(cols.first, 1); m2 <= cols.last; ++m2)
              acc += c * rho_at(m2) * joint_moment(occ, *block, i, j, k, l, m1, m2);
          }
        }
      }
    }
  }
  return acc;
}

inline CashflowSpec1D premium_paying_part(const FreePolicySpec& fp) {
  return build_free_policy_cashflow(fp).before_exercise;
}

}  // namespace detail

/// Retrospective free-policy reserve: everything on [0, s], the exercise included.
inline double free_policy_retrospective(const FreePolicySpec& fp, const OccupationSurfaces& occ,
                                        const RateSystem& rates, const DiscountCurve& kappa) {
  fp.validate();
  detail::require_joint(occ, rates, true);
  const TimeGrid& grid = occ.grid;
  return expected_past_1d(detail::premium_paying_part(fp), occ, rates, kappa) +
         detail::free_policy_after_exercise(fp, occ, rates, kappa.weights(grid.pivot()), grid.past(), grid.past());
}

/// Prospective free-policy reserve: payments on (s, T], exercise anywhere in [0, T].
inline double free_policy_prospective(const FreePolicySpec& fp, const OccupationSurfaces& occ,
                                      const RateSystem& rates, const DiscountCurve& kappa) {
  fp.validate();
  detail::require_joint(occ, rates, true);
  const TimeGrid& grid = occ.grid;
  return expected_future_1d(detail::premium_paying_part(fp), occ, rates, kappa) +
         detail::free_policy_after_exercise(fp, occ, rates, kappa.weights(grid.pivot()), grid.future_range(),
                                            grid.all());
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct ValuationReport {
  std::string spec;
  std::string label;
  double v_plus = 0.0;
  double v_minus = 0.0;
  std::optional<double> s_plus;
  std::optional<double> variance;
  double pivot_time = 0.0;
  double horizon = 0.0;
  double step = 0.0;
  std::size_t n_paths = 0;
};

inline ValuationReport value_cashflow(const std::string& name, const std::string& label, const CashflowSpec1D& spec,
                                      const OccupationSurfaces& occ, const RateSystem& rates,
                                      const DiscountCurve& kappa, std::size_t n_paths, bool second_moment = true) {
  ValuationReport r;
  r.spec = name;
  r.label = label;
  r.v_plus = expected_future_1d(spec, occ, rates, kappa);
  r.v_minus = expected_past_1d(spec, occ, rates, kappa);
  if (second_moment) {
    r.s_plus = second_moment_future(spec, occ, rates, kappa);
    r.variance = conditional_variance(*r.s_plus, r.v_plus);
  }
  r.pivot_time = occ.grid.pivot_time();
  r.horizon = occ.grid.horizon();
  r.step = occ.grid.step();
  r.n_paths = n_paths;
  return r;
}

}  // namespace fwdrates
