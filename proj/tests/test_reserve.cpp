#include <gtest/gtest.h>

#include <cmath>

#include "fwdrates/kolmogorov.hpp"
#include "fwdrates/oracle.hpp"
#include "fwdrates/reserve.hpp"
#include "test_support.hpp"

using namespace fwdrates;
using namespace fwdrates::testing;

namespace {

struct Fitted {
  Ensemble ens;
  std::vector<std::size_t> members;
  MomentSurfaces ms;
  RateSystem rates;
};

Fitted fit(const IntensityModel& model, const TimeGrid& grid, std::size_t n, std::uint64_t seed, int pivot_state,
           const SimulationOptions& opt = {}) {
  Fitted f{simulate_ensemble(model, grid, n, seed, opt), {}, {}, {}};
  f.members = with_state_at_pivot(f.ens, pivot_state);
  f.ms = estimate_moment_surfaces(f.ens, f.members);
  f.rates = transition_rates(f.ms);
  return f;
}

/// Occupation surfaces solved from hazard rates; s = 0, alive.
struct Analytic {
  TimeGrid grid;
  RateSystem rates;
  OccupationSurfaces occ;
};

Analytic analytic_two_state(double mu, double step) {
  Analytic a{TimeGrid(10.0, step, 0.0), {}, {}};
  a.rates = forward_rates_from_hazards(two_state_model(mu), a.grid);
  a.occ = solve_forward(a.rates, 0, false).surfaces;
  return a;
}

CashflowSpec1D endowment(int n, const TimeGrid& grid, int state) {
  CashflowSpec1D spec(n, grid.size());
  spec.sojourn(state)[grid.steps()] = 1.0;
  return spec;
}

CashflowSpec1D disability_mix(const TimeGrid& grid) {
  CashflowSpec1D spec(3, grid.size());
  for (int m = 1; m < grid.size(); ++m) spec.sojourn(1)[m] = grid.step();
  for (int m = 0; m < grid.size(); m += 20) spec.sojourn(0)[m] = -0.1;
  spec.set_transition(0, 2, std::vector<double>(static_cast<std::size_t>(grid.size()), 2.0));
  spec.set_transition(1, 2, std::vector<double>(static_cast<std::size_t>(grid.size()), 1.0));
  spec.set_transition(1, 0, std::vector<double>(static_cast<std::size_t>(grid.size()), 0.5));
  return spec;
}

StateSpace free_policy_states() { return StateSpace({"a0", "d0", "a1", "d1"}, {"a1", "d1"}); }

IntensityModel free_policy_model(double exercise) {
  IntensityModel m(free_policy_states(), 0);
  m.set(0, 1, Intensity::constant(0.02));
  if (exercise > 0) m.set(0, 2, Intensity::constant(exercise));
  m.set(2, 3, Intensity::constant(0.03));
  return m;
}

FreePolicySpec free_policy_spec(const TimeGrid& grid, double rho) {
  FreePolicySpec fp{free_policy_states(), CashflowSpec1D(4, grid.size()), {}};
  const int year = static_cast<int>(std::lround(1.0 / grid.step()));
  for (int m = 0; m < grid.steps(); m += year) fp.scheme.sojourn(0)[m] = -0.08;
  fp.scheme.sojourn(0)[grid.steps()] = 1.0;
  fp.scheme.sojourn(2)[grid.steps()] = 1.0;
  fp.scheme.set_transition(0, 1, std::vector<double>(static_cast<std::size_t>(grid.size()), 1.0));
  fp.scheme.set_transition(2, 3, std::vector<double>(static_cast<std::size_t>(grid.size()), 1.0));
  if (rho != 1.0) fp.rescale[{0, 2}] = std::vector<double>(static_cast<std::size_t>(grid.size()), rho);
  return fp;
}

SimulationOptions blocked(const FreePolicySpec& fp) {
  SimulationOptions opt;
  opt.blocked_exercise = fp.lump_sum_indices();
  return opt;
}

}  // namespace

TEST(Reserve1D, ZeroSpecIsZero) {
  const Analytic a = analytic_two_state(0.1, 0.01);
  const CashflowSpec1D zero(2, a.grid.size());
  const DiscountCurve kappa = DiscountCurve::flat(0.03, a.grid);
  EXPECT_EQ(expected_future_1d(zero, a.occ, a.rates, kappa), 0.0);
  EXPECT_EQ(expected_past_1d(zero, a.occ, a.rates, kappa), 0.0);
}

TEST(Reserve1D, EndowmentAndTermInsurance) {
  const double mu = 0.1, r = 0.03;
  const Analytic a = analytic_two_state(mu, 0.001);
  const DiscountCurve unit = DiscountCurve::unit(a.grid), flat = DiscountCurve::flat(r, a.grid);
  EXPECT_NEAR(expected_future_1d(endowment(2, a.grid, 0), a.occ, a.rates, unit), std::exp(-1.0), 1e-4);

  CashflowSpec1D term(2, a.grid.size());
  term.set_transition(0, 1, std::vector<double>(static_cast<std::size_t>(a.grid.size()), 1.0));
  const double exact = mu / (mu + r) * (1.0 - std::exp(-(mu + r) * 10.0));
  EXPECT_NEAR(expected_future_1d(term, a.occ, a.rates, flat), exact, 1e-3 * exact);

  // Continuous annuity of rate 1 while alive.
  CashflowSpec1D annuity(2, a.grid.size());
  for (int m = 1; m < a.grid.size(); ++m) annuity.sojourn(0)[m] = a.grid.step();
  const double ann = (1.0 - std::exp(-(mu + r) * 10.0)) / (mu + r);
  EXPECT_NEAR(expected_future_1d(annuity, a.occ, a.rates, flat), ann, 1e-3 * ann);
}

TEST(Reserve1D, PastAtTimeZero) {
  const Analytic a = analytic_two_state(0.1, 0.01);
  const DiscountCurve kappa = DiscountCurve::flat(0.03, a.grid);
  EXPECT_EQ(expected_past_1d(endowment(2, a.grid, 0), a.occ, a.rates, kappa), 0.0);
  CashflowSpec1D premium(2, a.grid.size());
  premium.sojourn(0)[0] = -0.25;
  EXPECT_DOUBLE_EQ(expected_past_1d(premium, a.occ, a.rates, kappa), -0.25);
}

TEST(Reserve1D, RejectsGridMismatch) {
  const Analytic a = analytic_two_state(0.1, 0.01);
  const Analytic b = analytic_two_state(0.1, 0.02);
  EXPECT_THROW(expected_future_1d(CashflowSpec1D(2, a.grid.size()), a.occ, b.rates, DiscountCurve::unit(a.grid)),
               ValidationError);
}

TEST(Reserve1D, MatchesInSampleOracle) {
  const TimeGrid grid(10.0, 0.05, 4.0);
  const DiscountCurve kappa = DiscountCurve::flat(0.03, grid);
  const CashflowSpec1D spec = disability_mix(grid);
  for (int state : {0, 1}) {
    const Fitted f = fit(disability_model(), grid, 20000, 5, state);
    const auto yp = evaluate_members(f.ens, f.members, [&](const Path& p) { return path_payout_future(p, spec, kappa, grid); });
    const auto ym = evaluate_members(f.ens, f.members, [&](const Path& p) { return path_payout_past(p, spec, kappa, grid); });
    EXPECT_NEAR(expected_future_1d(spec, f.ms.occupation, f.rates, kappa), summarize(yp).mean, 1e-10);
    EXPECT_NEAR(expected_past_1d(spec, f.ms.occupation, f.rates, kappa), summarize(ym).mean, 1e-10);
  }
}

TEST(SecondMoment, EndowmentSquareIsItself) {
  const TimeGrid grid(10.0, 0.05, 0.0);
  const Fitted f = fit(two_state_model(0.1), grid, 3000, 1, 0);
  const CashflowSpec1D spec = endowment(2, grid, 0);
  const DiscountCurve unit = DiscountCurve::unit(grid);
  const double v = expected_future_1d(spec, f.ms.occupation, f.rates, unit);
  EXPECT_NEAR(expected_2d(square_cashflow(spec), f.ms.occupation, f.rates), v, 1e-14);
  EXPECT_NEAR(second_moment_future(spec, f.ms.occupation, f.rates, unit), v, 1e-14);
}

TEST(SecondMoment, DeterministicPaymentHasNoVariance) {
  const TimeGrid grid(10.0, 0.05, 4.0);
  const Fitted f = fit(disability_model(), grid, 3000, 2, 0);
  CashflowSpec1D sure(3, grid.size());
  for (int i = 0; i < 3; ++i) sure.sojourn(i)[grid.steps()] = 2.0;
  const DiscountCurve kappa = DiscountCurve::flat(0.03, grid);
  const double v = expected_future_1d(sure, f.ms.occupation, f.rates, kappa);
  const double s = second_moment_future(sure, f.ms.occupation, f.rates, kappa);
  EXPECT_NEAR(v, 2.0 * std::exp(-0.03 * 6.0), 1e-12);
  EXPECT_NEAR(conditional_variance(s, v), 0.0, 1e-12);
}

TEST(SecondMoment, DirectAndSquaredRepresentationAgree) {
  const TimeGrid grid(10.0, 0.05, 4.0);
  const DiscountCurve kappa = DiscountCurve::flat(0.03, grid);
  const CashflowSpec1D spec = disability_mix(grid);
  for (int state : {0, 1}) {
    const Fitted f = fit(disability_model(), grid, 4000, 9, state);
    const double direct = second_moment_future(spec, f.ms.occupation, f.rates, kappa);
    const CashflowSpec2D sq = square_cashflow(spec.restricted(grid.future_range()), kappa, grid.pivot());
    const double dual = expected_2d(sq, f.ms.occupation, f.rates);
    EXPECT_NEAR(direct, dual, 1e-10 * std::max(1.0, std::abs(direct)));

    const auto y2 = evaluate_members(f.ens, f.members, [&](const Path& p) {
      const double y = path_payout_future(p, spec, kappa, grid);
      return y * y;
    });
    const OracleEstimate o = summarize(y2);
    EXPECT_NEAR(direct, o.mean, 1e-9 * std::max(1.0, o.mean));
    EXPECT_GE(conditional_variance(direct, expected_future_1d(spec, f.ms.occupation, f.rates, kappa)), -1e-12);
  }
}

TEST(SecondMoment, NeedsTwoDimensionalInputs) {
  const TimeGrid grid(10.0, 0.05, 4.0);
  const Ensemble ens = simulate_ensemble(disability_model(), grid, 500, 3);
  const MomentSurfaces flat = estimate_moment_surfaces(ens, with_state_at_pivot(ens, 0), false);
  const RateSystem r1 = transition_rates(flat);
  const DiscountCurve unit = DiscountCurve::unit(grid);
  const CashflowSpec1D spec = disability_mix(grid);
  EXPECT_THROW(second_moment_future(spec, flat.occupation, r1, unit), ValidationError);
  EXPECT_THROW(expected_2d(square_cashflow(spec), flat.occupation, r1), ValidationError);

  const MomentSurfaces full = estimate_moment_surfaces(ens, with_state_at_pivot(ens, 0));
  EXPECT_THROW(second_moment_future(spec, full.occupation, r1, unit), ValidationError);
}

TEST(FreePolicy, UnitRescaleMatchesPlainReserve) {
  const TimeGrid grid(10.0, 0.05, 5.0);
  const FreePolicySpec fp = free_policy_spec(grid, 1.0);
  const DiscountCurve kappa = DiscountCurve::flat(0.03, grid);
  for (int state : {0, 2}) {
    const Fitted f = fit(free_policy_model(0.06), grid, 6000, 4, state, blocked(fp));
    const OccupationSurfaces& occ = f.ms.occupation;
    EXPECT_NEAR(free_policy_prospective(fp, occ, f.rates, kappa), expected_future_1d(fp.scheme, occ, f.rates, kappa), 1e-9);
    EXPECT_NEAR(free_policy_retrospective(fp, occ, f.rates, kappa), expected_past_1d(fp.scheme, occ, f.rates, kappa), 1e-9);
  }
}

TEST(FreePolicy, MatchesDirectPathEvaluation) {
  const TimeGrid grid(10.0, 0.05, 5.0);
  const FreePolicySpec fp = free_policy_spec(grid, 0.4);
  const DiscountCurve kappa = DiscountCurve::flat(0.03, grid);
  for (int state : {0, 2}) {
    const Fitted f = fit(free_policy_model(0.06), grid, 6000, 8, state, blocked(fp));
    std::vector<double> fut, past;
    for (std::size_t k : f.members) {
      const FreePolicyValue a = path_payout_future(f.ens.paths[k], fp, kappa, grid);
      const FreePolicyValue b = path_payout_past(f.ens.paths[k], fp, kappa, grid);
      ASSERT_FALSE(a.lump_at_exercise);
      fut.push_back(a.value);
      past.push_back(b.value);
    }
    EXPECT_NEAR(free_policy_prospective(fp, f.ms.occupation, f.rates, kappa), summarize(fut).mean, 1e-9);
    EXPECT_NEAR(free_policy_retrospective(fp, f.ms.occupation, f.rates, kappa), summarize(past).mean, 1e-9);
  }
}

TEST(FreePolicy, WithoutExerciseOnlyPremiumPartRemains) {
  const TimeGrid grid(10.0, 0.05, 5.0);
  const FreePolicySpec fp = free_policy_spec(grid, 0.4);
  const DiscountCurve kappa = DiscountCurve::flat(0.03, grid);
  const Fitted f = fit(free_policy_model(0.0), grid, 2000, 6, 0);
  CashflowSpec1D s0_only(4, grid.size());
  s0_only.sojourn(0) = fp.scheme.sojourn(0);
  s0_only.set_transition(0, 1, std::vector<double>(static_cast<std::size_t>(grid.size()), 1.0));
  EXPECT_NEAR(free_policy_prospective(fp, f.ms.occupation, f.rates, kappa),
              expected_future_1d(s0_only, f.ms.occupation, f.rates, kappa), 1e-12);
}

TEST(FreePolicy, ZeroSchemeAndMonotoneRescale) {
  const TimeGrid grid(10.0, 0.05, 5.0);
  const DiscountCurve kappa = DiscountCurve::flat(0.03, grid);
  const FreePolicySpec base = free_policy_spec(grid, 1.0);
  const Fitted f = fit(free_policy_model(0.06), grid, 4000, 10, 0, blocked(base));
  const FreePolicySpec zero{free_policy_states(), CashflowSpec1D(4, grid.size()), {}};
  EXPECT_EQ(free_policy_prospective(zero, f.ms.occupation, f.rates, kappa), 0.0);
  // S1 payments are non-negative, so lowering ρ can only lower the value.
  double previous = -INFINITY;
  for (double rho : {0.0, 0.3, 0.7, 1.0}) {
    const double v = free_policy_prospective(free_policy_spec(grid, rho), f.ms.occupation, f.rates, kappa);
    EXPECT_GE(v, previous - 1e-12);
    previous = v;
  }
}

TEST(FreePolicy, NeedsPartitionedSpace) {
  const TimeGrid grid(10.0, 0.05, 5.0);
  const Fitted f = fit(two_state_model(0.1), grid, 200, 1, 0);
  const FreePolicySpec fp{two_states(), CashflowSpec1D(2, grid.size()), {}};
  EXPECT_THROW(free_policy_prospective(fp, f.ms.occupation, f.rates, DiscountCurve::unit(grid)), ValidationError);
}

TEST(ValueCashflow, ReportFields) {
  const TimeGrid grid(10.0, 0.05, 4.0);
  const Fitted f = fit(disability_model(), grid, 1000, 2, 1);
  const DiscountCurve kappa = DiscountCurve::flat(0.03, grid);
  const ValuationReport r = value_cashflow("mix", "i", disability_mix(grid), f.ms.occupation, f.rates, kappa, 1000);
  ASSERT_TRUE(r.s_plus && r.variance);
  EXPECT_DOUBLE_EQ(*r.variance, *r.s_plus - r.v_plus * r.v_plus);
  EXPECT_EQ(r.pivot_time, 4.0);
  const ValuationReport no2 = value_cashflow("mix", "i", disability_mix(grid), f.ms.occupation, f.rates, kappa, 1000, false);
  EXPECT_FALSE(no2.s_plus.has_value());
}
