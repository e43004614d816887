#include <gtest/gtest.h>

#include <cmath>

#include "fwdrates/kolmogorov.hpp"
#include "test_support.hpp"

using namespace fwdrates;
using namespace fwdrates::testing;

namespace {

struct RoundTrip {
  MomentSurfaces ms;
  RateSystem rates;
  SolvedProbabilities solved;
};

RoundTrip disability_round_trip(std::size_t n_paths, int pivot_state) {
  const TimeGrid grid(10.0, 0.05, 4.0);
  const Ensemble ens = simulate_ensemble(disability_model(), grid, n_paths, 31);
  RoundTrip out;
  out.ms = estimate_moment_surfaces(ens, with_state_at_pivot(ens, pivot_state));
  out.rates = transition_rates(out.ms);
  out.solved = solve_forward(out.rates, pivot_state);
  return out;
}

}  // namespace

TEST(Forward1D, ZeroRatesKeepPivotState) {
  const TimeGrid grid = TimeGrid::from_steps(30, 0.1, 12);
  const auto p = solve_forward_1d(RateSystem::zero(grid, 3), 1);
  for (int i = 0; i < 3; ++i)
    for (int m = 0; m < grid.size(); ++m) EXPECT_EQ(p[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)], i == 1 ? 1.0 : 0.0);
}

TEST(Forward1D, ConstantHazardSurvival) {
  const double mu = 0.1;
  const TimeGrid grid(10.0, 0.001, 0.0);
  const auto p = solve_forward_1d(forward_rates_from_hazards(two_state_model(mu), grid), 0);
  for (int m = 0; m < grid.size(); m += 500) {
    const double alive = p[0][static_cast<std::size_t>(m)];
    EXPECT_NEAR(alive, std::pow(1.0 - mu * grid.step(), m), 1e-12);
    EXPECT_NEAR(alive, std::exp(-mu * grid.time(m)), 1e-3 * mu * grid.time(m) + 1e-15);
    EXPECT_NEAR(alive + p[1][static_cast<std::size_t>(m)], 1.0, 1e-14);
  }
}

TEST(Forward1D, ConservesMass) {
  const RoundTrip rt = disability_round_trip(800, 0);
  const auto& p = rt.solved.surfaces.p1;
  for (std::size_t m = 0; m < p[0].size(); ++m) EXPECT_NEAR(p[0][m] + p[1][m] + p[2][m], 1.0, 1e-12);
}

TEST(Forward2D, ZeroRatesGiveIndicatorProduct) {
  const TimeGrid grid = TimeGrid::from_steps(12, 0.5, 5);
  const auto p2 = solve_forward_2d(RateSystem::zero(grid, 2), 0);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k)
      for (int m1 = 0; m1 < grid.size(); ++m1)
        for (int m2 = 0; m2 < grid.size(); ++m2)
          EXPECT_EQ(p2[static_cast<std::size_t>(i * 2 + k)](m1, m2), (i == 0 && k == 0) ? 1.0 : 0.0);
}

TEST(Forward2D, PivotColumnAndRowReduceToOneDimension) {
  const RoundTrip rt = disability_round_trip(800, 1);
  const OccupationSurfaces& s = rt.solved.surfaces;
  const int p = s.grid.pivot();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      for (int m = 0; m < s.grid.size(); ++m) {
        const double ik = k == 1 ? 1.0 : 0.0, ii = i == 1 ? 1.0 : 0.0;
        EXPECT_NEAR(s.joint(i, k, m, p), s.p(i, m) * ik, 1e-13);
        EXPECT_NEAR(s.joint(i, k, p, m), ii * s.p(k, m), 1e-13);
      }
}

TEST(Forward2D, DiagonalAndMarginalsOfSolvedSurfaces) {
  const RoundTrip rt = disability_round_trip(800, 0);
  const OccupationSurfaces& s = rt.solved.surfaces;
  for (int m1 = 0; m1 < s.grid.size(); m1 += 7)
    for (int m2 = 0; m2 < s.grid.size(); m2 += 5) {
      double total = 0.0;
      for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int k = 0; k < 3; ++k) {
          row += s.joint(i, k, m1, m2);
          total += s.joint(i, k, m1, m2);
        }
        EXPECT_NEAR(row, s.p(i, m1), 1e-10);
        if (m1 == m2) {
          for (int k = 0; k < 3; ++k) EXPECT_NEAR(s.joint(i, k, m1, m1), i == k ? s.p(i, m1) : 0.0, 1e-10);
        }
      }
      EXPECT_NEAR(total, 1.0, 1e-10);
    }
}

TEST(RoundTrip, SolvedMatchesEstimated) {
  for (int state : {0, 1}) {
    const RoundTrip rt = disability_round_trip(3000, state);
    const ResidualReport r = residual_and_consistency(rt.solved.surfaces, rt.ms.occupation);
    EXPECT_LE(r.p1, 1e-9) << "pivot state " << state;
    EXPECT_LE(r.p2, 1e-9) << "pivot state " << state;
    EXPECT_TRUE(r.within_bounds(1e-9));
  }
}

TEST(RoundTrip, ZeroRatesHaveZeroResidual) {
  const TimeGrid grid = TimeGrid::from_steps(20, 0.5, 6);
  Ensemble ens{grid, two_states(), 0.0, 0, {Path(0, {}, grid.size()), Path(0, {}, grid.size())}};
  const MomentSurfaces ms = estimate_moment_surfaces(ens, everyone(ens));
  const RateSystem rates = transition_rates(ms);
  const ResidualReport r = residual_and_consistency(solve_forward(rates, 0).surfaces, ms.occupation);
  EXPECT_EQ(r.p1, 0.0);
  EXPECT_EQ(r.p2, 0.0);
}

TEST(RoundTrip, ResidualDetectsPerturbedRate) {
  RoundTrip rt = disability_round_trip(3000, 0);
  const int m = rt.rates.grid.pivot() + 40;
  const double den = rt.ms.occupation.tilde(0, 1, m);
  ASSERT_GT(den, 0.5);
  for (double delta : {1e-3, 1e-6}) {
    RateSystem bumped = rt.rates;
    bumped.d1[static_cast<std::size_t>(pair_index(0, 1, 3))][static_cast<std::size_t>(m)] += delta;
    bumped.d1[static_cast<std::size_t>(pair_index(0, 0, 3))][static_cast<std::size_t>(m)] -= delta;
    const ResidualReport r = residual_and_consistency(solve_forward(bumped, 0, false).surfaces, rt.ms.occupation);
    EXPECT_GE(r.p1, 0.5 * delta * den) << delta;
  }
}

TEST(RoundTrip, RejectsGridMismatch) {
  const TimeGrid a = TimeGrid::from_steps(10, 0.5, 2), b = TimeGrid::from_steps(10, 0.5, 3);
  const auto sa = solve_forward(RateSystem::zero(a, 2), 0, false);
  const auto sb = solve_forward(RateSystem::zero(b, 2), 0, false);
  EXPECT_THROW(residual_and_consistency(sa.surfaces, sb.surfaces), ValidationError);
  EXPECT_THROW(solve_forward_1d(RateSystem::zero(a, 2), 2), ValidationError);
}
