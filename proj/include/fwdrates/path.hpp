#pragma once

// Realised careers on the grid and the counting processes derived from them.

#include <optional>
#include <vector>

#include "fwdrates/core.hpp"

namespace fwdrates {

/// A transition Z(t_{m-1}) = from -> Z(t_m) = to landing on grid index m >= 1.
struct Jump {
  int index = 0;
  int from = 0;
  int to = 0;
  bool operator==(const Jump&) const = default;
};

/// One realised trajectory of Z on the grid. Z(0-) = Z(0), so no jump can
/// sit on index 0, and at most one jump happens per grid step.
class Path {
 public:
  Path() = default;

  Path(int initial_state, std::vector<Jump> jumps, int grid_size)
      : jumps_(std::move(jumps)) {
    if (grid_size < 2) throw ValidationError("path needs a grid with at least two points");
    states_.assign(static_cast<std::size_t>(grid_size), initial_state);
    int current = initial_state;
    int last_index = 0;
    for (const Jump& j : jumps_) {
      if (j.index <= last_index || j.index >= grid_size)
        throw ValidationError("path jumps must have strictly increasing indices in [1, M]");
      if (j.from != current) throw ValidationError("path jump does not start in the current state");
      if (j.from == j.to) throw ValidationError("path jump must change state");
      for (int m = j.index; m < grid_size; ++m) states_[static_cast<std::size_t>(m)] = j.to;
      current = j.to;
      last_index = j.index;
    }
  }

  int grid_size() const { return static_cast<int>(states_.size()); }
  int initial_state() const { return states_.front(); }
  int state(int m) const { return states_[static_cast<std::size_t>(m)]; }
  /// Z(t_m -), with Z(0-) = Z(0).
  int state_before(int m) const { return states_[static_cast<std::size_t>(m > 0 ? m - 1 : 0)]; }
  int indicator(int i, int m) const { return state(m) == i ? 1 : 0; }
  const std::vector<int>& states() const { return states_; }
  const std::vector<Jump>& jumps() const { return jumps_; }

  /// Jump landing exactly on index m, if any.
  const Jump* jump_at(int m) const {
    if (m <= 0 || m >= grid_size() || state(m) == state(m - 1)) return nullptr;
    for (const Jump& j : jumps_)
      if (j.index == m) return &j;
    return nullptr;
  }

  /// Realised exercise index: the first jump from S0 into S1.
  std::optional<int> exercise_index(const StateSpace& space) const {
    if (!space.partitioned()) return std::nullopt;
    for (const Jump& j : jumps_)
      if (space.in_s0(j.from) && space.in_s1(j.to)) return j.index;
    return std::nullopt;
  }

  /// Index of the last jump at or before m (0 if none).
  int entry_index(int m) const {
    int entry = 0;
    for (const Jump& j : jumps_) {
      if (j.index > m) break;
      entry = j.index;
    }
    return entry;
  }

  bool operator==(const Path&) const = default;

 private:
  std::vector<int> states_;
  std::vector<Jump> jumps_;
};

/// Nonzero increment ΔN_ij(t_m) of a counting process, diagonals included.
struct CountIncrement {
  int pair = 0;
  int index = 0;
  int value = 0;
};

/// All nonzero increments of (N_ij) on a path. The signed diagonal N_ii is
/// anchored at the pivot: on the future side it decreases by the exits out of
/// i, on the past side by the entries into i.
inline std::vector<CountIncrement> count_increments(const Path& path, const TimeGrid& grid, int n_states) {
  std::vector<CountIncrement> out;
  out.reserve(path.jumps().size() * 2);
  for (const Jump& j : path.jumps()) {
    out.push_back({pair_index(j.from, j.to, n_states), j.index, 1});
    int diag = grid.future(j.index) ? j.from : j.to;
    out.push_back({pair_index(diag, diag, n_states), j.index, -1});
  }
  return out;
}

/// Cumulative counting processes N_ij(t_m) for all ordered pairs. Off-diagonal
/// processes start at zero at t_0; the diagonal ones are zero at the pivot.
class CountingProcesses {
 public:
  CountingProcesses(const Path& path, const TimeGrid& grid, int n_states)
      : n_(n_states), size_(grid.size()),
        values_(static_cast<std::size_t>(n_states * n_states), std::vector<int>(static_cast<std::size_t>(grid.size()), 0)) {
    std::vector<std::vector<int>> inc(values_.size(), std::vector<int>(static_cast<std::size_t>(size_), 0));
    for (const CountIncrement& c : count_increments(path, grid, n_states))
      inc[static_cast<std::size_t>(c.pair)][static_cast<std::size_t>(c.index)] += c.value;
    const int p = grid.pivot();
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        auto& v = values_[static_cast<std::size_t>(pair_index(i, j, n_))];
        const auto& d = inc[static_cast<std::size_t>(pair_index(i, j, n_))];
        if (i != j) {
          int acc = 0;
          for (int m = 0; m < size_; ++m) v[static_cast<std::size_t>(m)] = acc += d[static_cast<std::size_t>(m)];
        } else {
          // N_ii(s) = 0; forward accumulation, and backward N(t_{m-1}) = N(t_m) - ΔN(t_m).
          v[static_cast<std::size_t>(p)] = 0;
          for (int m = p + 1; m < size_; ++m)
            v[static_cast<std::size_t>(m)] = v[static_cast<std::size_t>(m - 1)] + d[static_cast<std::size_t>(m)];
          for (int m = p; m >= 1; --m)
            v[static_cast<std::size_t>(m - 1)] = v[static_cast<std::size_t>(m)] - d[static_cast<std::size_t>(m)];
        }
      }
  }

  int states() const { return n_; }
  int operator()(int i, int j, int m) const {
    return values_[static_cast<std::size_t>(pair_index(i, j, n_))][static_cast<std::size_t>(m)];
  }
  int increment(int i, int j, int m) const { return m == 0 ? 0 : (*this)(i, j, m) - (*this)(i, j, m - 1); }

  /// Rebuild I_i(t_m) from I_i(s) and the counting processes:
  /// forward I_i(t) = I_i(s) + Σ_j N_ji((s,t]), backward I_i(t) = I_i(s) + Σ_j N_ij((t,s]).
  int reconstruct_indicator(int i, int m, int state_at_pivot, const TimeGrid& grid) const {
    const int p = grid.pivot();
    int value = state_at_pivot == i ? 1 : 0;
    for (int j = 0; j < n_; ++j) {
      if (m > p)
        value += (*this)(j, i, m) - (*this)(j, i, p);
      else
        value += (*this)(i, j, p) - (*this)(i, j, m);
    }
    return value;
  }

 private:
  int n_;
  int size_;
  std::vector<std::vector<int>> values_;
};

/// Savings-account value κ(t_m) > 0 on the grid.
class DiscountCurve {
 public:
  DiscountCurve() = default;
  explicit DiscountCurve(std::vector<double> kappa) : kappa_(std::move(kappa)) {
    if (kappa_.empty()) throw ValidationError("discount curve is empty");
    for (double k : kappa_)
      if (!(k > 0.0) || !std::isfinite(k)) throw ValidationError("discount curve must be strictly positive");
  }

  static DiscountCurve flat(double rate, const TimeGrid& grid) {
    std::vector<double> k(static_cast<std::size_t>(grid.size()));
    for (int m = 0; m < grid.size(); ++m) k[static_cast<std::size_t>(m)] = std::exp(rate * grid.time(m));
    return DiscountCurve(std::move(k));
  }
  static DiscountCurve unit(const TimeGrid& grid) { return DiscountCurve(std::vector<double>(static_cast<std::size_t>(grid.size()), 1.0)); }

  int size() const { return static_cast<int>(kappa_.size()); }
  double kappa(int m) const { return kappa_[static_cast<std::size_t>(m)]; }
  /// w(u) = κ(s) / κ(u).
  double weight(int m, int pivot) const { return kappa(pivot) / kappa(m); }
  std::vector<double> weights(int pivot) const {
    std::vector<double> w(kappa_.size());
    for (std::size_t m = 0; m < w.size(); ++m) w[m] = kappa_[static_cast<std::size_t>(pivot)] / kappa_[m];
    return w;
  }

 private:
  std::vector<double> kappa_;
};

}  // namespace fwdrates
