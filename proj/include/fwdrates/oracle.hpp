#pragma once

// Brute-force Monte Carlo conditional means straight from the paths. Nothing
// here touches transition rates or the forward-equation solvers.

#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "fwdrates/conditioning.hpp"
#include "fwdrates/path.hpp"
#include "fwdrates/simulate.hpp"

namespace fwdrates {

struct OracleEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t n_paths = 0;
  std::string label;
};

using PathFunctional = std::function<double(const Path&)>;

/// Evaluates `f` per member (optionally in parallel), then reduces serially in
/// member order, so the result never depends on the thread count.
inline std::vector<double> evaluate_members(const Ensemble& ens, const std::vector<std::size_t>& members,
                                            const PathFunctional& f, unsigned threads = 1) {
  std::vector<double> values(members.size());
  auto work = [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) values[k] = f(ens.paths[members[k]]);
  };
  threads = std::max(1u, threads);
  if (threads == 1 || members.size() < 2 * threads) {
    work(0, members.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (members.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      std::size_t b = t * chunk, e = std::min(members.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  return values;
}

inline OracleEstimate summarize(const std::vector<double>& values, std::string label = {}) {
  if (values.size() < 2) throw ValidationError("an oracle estimate needs at least two paths");
  OracleEstimate out;
  out.n_paths = values.size();
  out.label = std::move(label);
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double var = ss / static_cast<double>(values.size() - 1);
  out.standard_error = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

inline OracleEstimate mc_conditional_mean(const Ensemble& ens, const ConditioningScheme& scheme, const Label& label,
                                          const PathFunctional& f, unsigned threads = 1) {
  const auto members = cell_members(ens, scheme, label);
  return summarize(evaluate_members(ens, members, f, threads), scheme.name(label, ens.space));
}

struct Comparison {
  bool pass = false;
  double z = 0.0;          // (pipeline - oracle) / SE; 0 when both agree exactly
  double difference = 0.0;
  double allowance = 0.0;  // k SE + c_h h
};

/// Pass iff |pipeline - oracle| <= k_sigma SE + c_h h.
inline Comparison compare(double pipeline, const OracleEstimate& oracle, double k_sigma, double c_h = 0.0,
                          double h = 0.0) {
  Comparison c;
  c.difference = pipeline - oracle.mean;
  c.allowance = k_sigma * oracle.standard_error + c_h * h;
  c.pass = std::abs(c.difference) <= c.allowance;
  if (oracle.standard_error > 0.0)
    c.z = c.difference / oracle.standard_error;
  else
    c.z = c.difference == 0.0 ? 0.0 : std::copysign(INFINITY, c.difference);
  return c;
}

}  // namespace fwdrates
