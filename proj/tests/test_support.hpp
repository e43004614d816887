#pragma once

#include <numeric>
#include <random>
#include <vector>

#include "fwdrates/simulate.hpp"

namespace fwdrates::testing {

inline StateSpace two_states() { return StateSpace({"a", "d"}); }
inline StateSpace disability_states() { return StateSpace({"a", "i", "d"}); }

inline IntensityModel two_state_model(double mu) {
  IntensityModel m(two_states(), 0);
  m.set(0, 1, Intensity::constant(mu));
  return m;
}

/// a -> i -> a with recovery 0.5 e^{-duration}, deaths from both.
inline IntensityModel disability_model() {
  IntensityModel m(disability_states(), 0);
  m.set(0, 1, Intensity::constant(0.1));
  m.set(0, 2, Intensity::gompertz(0.0, 0.005, 0.08));
  m.set(1, 0, Intensity::duration_decay(0.0, 0.5, 1.0));
  m.set(1, 2, Intensity::constant(0.05));
  return m;
}

inline std::vector<std::size_t> everyone(const Ensemble& ens) {
  std::vector<std::size_t> out(ens.paths.size());
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

inline std::vector<std::size_t> with_state_at_pivot(const Ensemble& ens, int state) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < ens.paths.size(); ++k)
    if (ens.paths[k].state(ens.grid.pivot()) == state) out.push_back(k);
  return out;
}

}  // namespace fwdrates::testing
