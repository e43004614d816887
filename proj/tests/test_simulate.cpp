#include <gtest/gtest.h>

#include <cmath>

#include "fwdrates/simulate.hpp"
#include "test_support.hpp"

using namespace fwdrates;
using namespace fwdrates::testing;

TEST(SimulatePath, ZeroIntensitiesGiveConstantPath) {
  const TimeGrid grid = TimeGrid::from_steps(50, 0.1, 20);
  const Path p = simulate_path(IntensityModel(two_states(), 0), grid, 1);
  EXPECT_TRUE(p.jumps().empty());
  const CountingProcesses cp(p, grid, 2);
  for (int m = 0; m < grid.size(); ++m)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) EXPECT_EQ(cp(i, j, m), 0);
}

TEST(SimulatePath, SeedDeterminism) {
  const TimeGrid grid = TimeGrid::from_steps(500, 0.02, 200);
  const IntensityModel model = disability_model();
  for (std::uint64_t seed : {1u, 2u, 99u}) EXPECT_EQ(simulate_path(model, grid, seed), simulate_path(model, grid, seed));
  const Ensemble a = simulate_ensemble(model, grid, 400, 5, {}, 1);
  const Ensemble b = simulate_ensemble(model, grid, 400, 5, {}, 3);
  EXPECT_EQ(a.paths, b.paths);
}

TEST(SimulatePath, ConstantHazardSurvival) {
  const TimeGrid grid(5.0, 0.01, 0.0);
  const Ensemble ens = simulate_ensemble(two_state_model(0.2), grid, 100000, 42);
  double alive = 0.0;
  for (const Path& p : ens.paths) alive += p.indicator(0, grid.steps());
  const double n = static_cast<double>(ens.paths.size());
  const double mean = alive / n, se = std::sqrt(mean * (1 - mean) / n);
  EXPECT_NEAR(mean, std::exp(-1.0), 3 * se);
}

TEST(SimulatePath, DurationDependentRecoveryIsNonMarkov) {
  // Recovery within one year, for lives disabled at t = 4 with short vs long duration.
  const TimeGrid grid(10.0, 0.02, 4.0);
  const Ensemble ens = simulate_ensemble(disability_model(), grid, 60000, 3);
  const int p = grid.pivot(), later = p + 50;
  double n[2] = {0, 0}, rec[2] = {0, 0};
  for (const Path& path : ens.paths) {
    if (path.state(p) != 1) continue;
    const int cohort = grid.time(p) - grid.time(path.entry_index(p)) < 1.0 ? 0 : 1;
    n[cohort] += 1;
    bool recovered = false;
    for (const Jump& j : path.jumps())
      if (j.index > p && j.index <= later && j.to == 0) recovered = true;
    rec[cohort] += recovered;
  }
  ASSERT_GT(n[0], 500);
  ASSERT_GT(n[1], 500);
  const double p0 = rec[0] / n[0], p1 = rec[1] / n[1];
  const double se = std::sqrt(p0 * (1 - p0) / n[0] + p1 * (1 - p1) / n[1]);
  EXPECT_GT(std::abs(p0 - p1), 5 * se);
}

TEST(SimulatePath, CoarseGridIsRejected) {
  const TimeGrid grid(10.0, 1.0, 0.0);
  EXPECT_THROW(simulate_ensemble(two_state_model(2.0), grid, 10, 1), GridTooCoarse);
}

TEST(SimulatePath, BlockedExerciseIndices) {
  const StateSpace space({"a0", "a1"}, {"a1"});
  IntensityModel model(space, 0);
  model.set(0, 1, Intensity::constant(0.5));
  const TimeGrid grid = TimeGrid::from_steps(40, 0.25, 0);
  SimulationOptions opt;
  opt.blocked_exercise.assign(static_cast<std::size_t>(grid.size()), false);
  for (int m = 0; m < grid.size(); m += 2) opt.blocked_exercise[static_cast<std::size_t>(m)] = true;
  const Ensemble ens = simulate_ensemble(model, grid, 2000, 4, opt);
  for (const Path& p : ens.paths)
    for (const Jump& j : p.jumps()) EXPECT_EQ(j.index % 2, 1);
}

TEST(CountingProcesses, SingleFutureJump) {
  const TimeGrid grid = TimeGrid::from_steps(10, 1.0, 3);
  const Path p(0, {{6, 0, 1}}, grid.size());
  const CountingProcesses cp(p, grid, 2);
  for (int m = 0; m < grid.size(); ++m) {
    EXPECT_EQ(cp(0, 1, m), m >= 6 ? 1 : 0);
    EXPECT_EQ(cp(0, 0, m), m >= 6 ? -1 : 0);
    EXPECT_EQ(cp(1, 1, m), 0);
  }
}

TEST(CountingProcesses, PastJumpAnchorsDiagonalAtPivot) {
  const TimeGrid grid = TimeGrid::from_steps(10, 1.0, 7);
  const Path p(0, {{4, 0, 1}}, grid.size());
  const CountingProcesses cp(p, grid, 2);
  // Past side: the entry into d is counted on N_dd, zero at the pivot.
  for (int m = 0; m < grid.size(); ++m) {
    EXPECT_EQ(cp(1, 1, m), m >= 4 ? 0 : 1);
    EXPECT_EQ(cp(0, 0, m), 0);
  }
  EXPECT_EQ(cp.increment(1, 1, 4), -1);
}

TEST(CountingProcesses, IdentitiesOnSimulatedPaths) {
  const TimeGrid grid(10.0, 0.05, 4.0);
  const Ensemble ens = simulate_ensemble(disability_model(), grid, 2000, 77);
  const int n = 3, p = grid.pivot();
  for (const Path& path : ens.paths) {
    const CountingProcesses cp(path, grid, n);
    for (int m = 0; m < grid.size(); ++m) {
      int occupied = 0;
      for (int i = 0; i < n; ++i) {
        occupied += path.indicator(i, m);
        ASSERT_EQ(cp.reconstruct_indicator(i, m, path.state(p), grid), path.indicator(i, m));
        int off = 0;
        for (int j = 0; j < n; ++j)
          if (j != i) off += grid.future(m) ? cp.increment(i, j, m) : cp.increment(j, i, m);
        ASSERT_EQ(cp.increment(i, i, m), -off);
      }
      ASSERT_EQ(occupied, 1);
      int jumps = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) jumps += cp.increment(i, j, m);
      ASSERT_LE(jumps, 1);
    }
  }
}

TEST(Path, RejectsInconsistentJumps) {
  EXPECT_THROW(Path(0, {{0, 0, 1}}, 5), ValidationError);
  EXPECT_THROW(Path(0, {{2, 1, 0}}, 5), ValidationError);
  EXPECT_THROW(Path(0, {{2, 0, 1}, {2, 1, 0}}, 5), ValidationError);
  EXPECT_THROW(Path(0, {{5, 0, 1}}, 5), ValidationError);
}

TEST(PathPayout, Examples) {
  const TimeGrid grid(10.0, 0.1, 0.0);
  CashflowSpec1D zero(2, grid.size());
  const Path alive(0, {}, grid.size());
  EXPECT_EQ(path_payout_future(alive, zero, DiscountCurve::unit(grid), grid), 0.0);

  CashflowSpec1D endow(2, grid.size());
  endow.sojourn(0)[grid.steps()] = 1.0;
  EXPECT_EQ(path_payout_future(alive, endow, DiscountCurve::unit(grid), grid), 1.0);
  EXPECT_NEAR(path_payout_future(alive, endow, DiscountCurve::flat(0.03, grid), grid), std::exp(-0.3), 1e-14);
  EXPECT_EQ(path_payout_past(alive, endow, DiscountCurve::unit(grid), grid), 0.0);
}
