#pragma once

// Canonical cash-flow representations in one and two dimensions, their
// path-wise evaluation, the squaring construction and the free-policy
// decomposition.

#include <array>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "fwdrates/core.hpp"
#include "fwdrates/path.hpp"

namespace fwdrates {

/// One-dimensional canonical representation: sojourn measures B_i and
/// transition payoffs b_ij (i != j), both on the grid.
class CashflowSpec1D {
 public:
  CashflowSpec1D() = default;
  CashflowSpec1D(int n_states, int grid_size)
      : n_(n_states), size_(grid_size),
        sojourn_(static_cast<std::size_t>(n_states), Measure1D(grid_size)),
        transition_(static_cast<std::size_t>(n_states * n_states)) {}

  int states() const { return n_; }
  int grid_size() const { return size_; }

  Measure1D& sojourn(int i) { return sojourn_.at(static_cast<std::size_t>(i)); }
  const Measure1D& sojourn(int i) const { return sojourn_.at(static_cast<std::size_t>(i)); }

  void set_transition(int i, int j, std::vector<double> payoff) {
    if (i == j) throw ValidationError("transition payoff needs i != j");
    if (static_cast<int>(payoff.size()) != size_) throw ValidationError("transition payoff has wrong length");
    for (double v : payoff)
      if (!std::isfinite(v)) throw ValidationError("transition payoff must be finite");
    transition_[static_cast<std::size_t>(pair_index(i, j, n_))] = std::move(payoff);
  }
  bool has_transition(int i, int j) const {
    return !transition_[static_cast<std::size_t>(pair_index(i, j, n_))].empty();
  }
  /// Empty span when b_ij is identically zero.
  std::span<const double> transition(int i, int j) const {
    return transition_[static_cast<std::size_t>(pair_index(i, j, n_))];
  }
  double transition_at(int i, int j, int m) const {
    const auto& b = transition_[static_cast<std::size_t>(pair_index(i, j, n_))];
    return b.empty() ? 0.0 : b[static_cast<std::size_t>(m)];
  }

  bool is_zero() const {
    for (const auto& s : sojourn_)
      if (!s.is_zero()) return false;
    for (const auto& b : transition_)
      for (double v : b)
        if (v != 0.0) return false;
    return true;
  }

  /// B weighted by w(u) = κ(s)/κ(u) in every component.
  CashflowSpec1D discounted(const DiscountCurve& kappa, int pivot) const {
    return scaled(kappa.weights(pivot));
  }

  CashflowSpec1D scaled(std::span<const double> w) const {
    CashflowSpec1D out = *this;
    for (auto& s : out.sojourn_)
      for (int m = 0; m < size_; ++m) s[m] *= w[static_cast<std::size_t>(m)];
    for (auto& b : out.transition_)
      for (std::size_t m = 0; m < b.size(); ++m) b[m] *= w[m];
    return out;
  }

  /// Zero outside the index window.
  CashflowSpec1D restricted(IndexRange window) const {
    std::vector<double> mask(static_cast<std::size_t>(size_), 0.0);
    for (int m = std::max(window.first, 0); m <= std::min(window.last, size_ - 1); ++m)
      mask[static_cast<std::size_t>(m)] = 1.0;
    return scaled(mask);
  }

 private:
  int n_ = 0;
  int size_ = 0;
  std::vector<Measure1D> sojourn_;
  std::vector<std::vector<double>> transition_;
};

/// Two-dimensional canonical representation with sojourn-pair measures A_ij,
/// mixed terms (A_i, a_ikl), and double-transition payoffs a_ijkl.
class CashflowSpec2D {
 public:
  using Triple = std::array<int, 3>;
  using Quad = std::array<int, 4>;

  CashflowSpec2D() = default;
  CashflowSpec2D(int n_states, int grid_size)
      : n_(n_states), size_(grid_size), mixed_measure_(static_cast<std::size_t>(n_states), Measure1D(grid_size)) {}

  int states() const { return n_; }
  int grid_size() const { return size_; }

  void add_sojourn(int i, int j, const Measure2D& a) { merge(sojourn_, std::pair{i, j}, a); }
  Measure1D& mixed_measure(int i) { return mixed_measure_.at(static_cast<std::size_t>(i)); }
  const Measure1D& mixed_measure(int i) const { return mixed_measure_.at(static_cast<std::size_t>(i)); }
  void add_mixed_payoff(int i, int k, int l, const PayoffSurface& a) {
    if (k == l) throw ValidationError("mixed payoff needs k != l");
    merge(mixed_payoff_, Triple{i, k, l}, a);
  }
  void add_double_payoff(int i, int j, int k, int l, const PayoffSurface& a) {
    if (i == j || k == l) throw ValidationError("double payoff needs i != j and k != l");
    merge(double_payoff_, Quad{i, j, k, l}, a);
  }

  const std::map<std::pair<int, int>, Measure2D>& sojourn_terms() const { return sojourn_; }
  const std::map<Triple, PayoffSurface>& mixed_terms() const { return mixed_payoff_; }
  const std::map<Quad, PayoffSurface>& double_terms() const { return double_payoff_; }

  /// Zero outside `rect`: measures and payoffs are masked in both coordinates.
  CashflowSpec2D restricted(IndexRect rect) const {
    CashflowSpec2D out(n_, size_);
    for (const auto& [key, a] : sojourn_) out.sojourn_.emplace(key, a.restricted(rect));
    for (int i = 0; i < n_; ++i)
      for (int m = 0; m < size_; ++m)
        out.mixed_measure_[static_cast<std::size_t>(i)][m] = rect.rows.contains(m) ? mixed_measure_[static_cast<std::size_t>(i)][m] : 0.0;
    for (const auto& [key, a] : mixed_payoff_) out.mixed_payoff_.emplace(key, a.restricted(rect));
    for (const auto& [key, a] : double_payoff_) out.double_payoff_.emplace(key, a.restricted(rect));
    return out;
  }

 private:
  template <class Map, class Key, class Value>
  void merge(Map& map, const Key& key, const Value& v) {
    if (v.size() != size_) throw ValidationError("2D component has wrong grid size");
    auto [it, inserted] = map.emplace(key, v);
    if (!inserted) {
      // Rare: fold by evaluating densely.
      Matrix d(size_, 0.0);
      for (int r = 0; r < size_; ++r)
        for (int c = 0; c < size_; ++c) d(r, c) = it->second.at(r, c) + v.at(r, c);
      it->second = Value::dense(std::move(d));
    }
  }

  int n_ = 0;
  int size_ = 0;
  std::map<std::pair<int, int>, Measure2D> sojourn_;
  std::vector<Measure1D> mixed_measure_;
  std::map<Triple, PayoffSurface> mixed_payoff_;
  std::map<Quad, PayoffSurface> double_payoff_;
};

// ---------------------------------------------------------------------------
// Path-wise evaluation
// ---------------------------------------------------------------------------

/// Cash-flow increment B(dt_m) on a path (no window checks).
inline double cashflow_increment(const CashflowSpec1D& spec, const Path& path, int m) {
  double v = spec.sojourn(path.state_before(m))[m];
  if (m > 0) {
    int from = path.state(m - 1), to = path.state(m);
    if (from != to) v += spec.transition_at(from, to, m);
  }
  return v;
}

inline double eval_cashflow_1d(const CashflowSpec1D& spec, const Path& path, IndexRange window) {
  if (window.empty()) return 0.0;
  if (window.first < 0 || window.last >= spec.grid_size() || spec.grid_size() != path.grid_size())
    throw std::out_of_range("cash-flow window outside grid");
  double acc = 0.0;
  for (int m = window.first; m <= window.last; ++m) acc += cashflow_increment(spec, path, m);
  return acc;
}

/// Evaluates the three double sums of the 2D representation over `rect`,
/// diagonal cells (a jump paired with itself) included.
inline double eval_cashflow_2d(const CashflowSpec2D& spec, const Path& path, IndexRect rect) {
  if (rect.empty()) return 0.0;
  const int size = spec.grid_size();
  if (rect.rows.first < 0 || rect.cols.first < 0 || rect.rows.last >= size || rect.cols.last >= size ||
      size != path.grid_size())
    throw std::out_of_range("cash-flow rectangle outside grid");

  double acc = 0.0;
  for (const auto& [key, a] : spec.sojourn_terms()) {
    auto [i, j] = key;
    for (int m1 = rect.rows.first; m1 <= rect.rows.last; ++m1) {
      if (path.state_before(m1) != i) continue;
      for (int m2 = rect.cols.first; m2 <= rect.cols.last; ++m2)
        if (path.state_before(m2) == j) acc += a.at(m1, m2);
    }
  }

  std::vector<Jump> rows_jumps, cols_jumps;
  for (const Jump& j : path.jumps()) {
    if (rect.rows.contains(j.index)) rows_jumps.push_back(j);
    if (rect.cols.contains(j.index)) cols_jumps.push_back(j);
  }

  for (const auto& [key, a] : spec.mixed_terms()) {
    auto [i, k, l] = key;
    const Measure1D& mu = spec.mixed_measure(i);
    for (const Jump& jump : cols_jumps) {
      if (jump.from != k || jump.to != l) continue;
      for (int m1 = rect.rows.first; m1 <= rect.rows.last; ++m1)
        if (path.state_before(m1) == i && mu[m1] != 0.0) acc += mu[m1] * a.at(m1, jump.index);
    }
  }

  for (const auto& [key, a] : spec.double_terms()) {
    auto [i, j, k, l] = key;
    for (const Jump& j1 : rows_jumps) {
      if (j1.from != i || j1.to != j) continue;
      for (const Jump& j2 : cols_jumps)
        if (j2.from == k && j2.to == l) acc += a.at(j1.index, j2.index);
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Squaring
// ---------------------------------------------------------------------------

/// Two-dimensional representation of B(T)^2 for a one-dimensional B over the
/// full grid square: sojourn pairs B_i ⊗ B_j, mixed terms 2 B_i(du1) b_kl(u2)
/// N_kl(du2), and double terms b_ij(u1) b_kl(u2).
inline CashflowSpec2D square_cashflow(const CashflowSpec1D& spec) {
  const int n = spec.states(), size = spec.grid_size();
  CashflowSpec2D out(n, size);
  auto atoms = [&](int i) {
    auto a = spec.sojourn(i).atoms();
    return std::vector<double>(a.begin(), a.end());
  };
  std::vector<int> paying;
  for (int i = 0; i < n; ++i)
    if (!spec.sojourn(i).is_zero()) paying.push_back(i);

  for (int i : paying)
    for (int j : paying) out.add_sojourn(i, j, Measure2D::outer(atoms(i), atoms(j)));

  const std::vector<double> ones(static_cast<std::size_t>(size), 1.0);
  for (int i : paying) out.mixed_measure(i) = spec.sojourn(i);
  for (int i : paying)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        if (k == l || !spec.has_transition(k, l)) continue;
        auto b = spec.transition(k, l);
        std::vector<double> twice(b.begin(), b.end());
        for (double& v : twice) v *= 2.0;
        out.add_mixed_payoff(i, k, l, PayoffSurface::outer(ones, std::move(twice)));
      }

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j || !spec.has_transition(i, j)) continue;
      auto bij = spec.transition(i, j);
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          if (k == l || !spec.has_transition(k, l)) continue;
          auto bkl = spec.transition(k, l);
          out.add_double_payoff(i, j, k, l,
                                PayoffSurface::outer({bij.begin(), bij.end()}, {bkl.begin(), bkl.end()}));
        }
    }
  return out;
}

/// Square of the discounted cash-flow ∫ κ(s)/κ(u) B(du).
inline CashflowSpec2D square_cashflow(const CashflowSpec1D& spec, const DiscountCurve& kappa, int pivot) {
  return square_cashflow(spec.discounted(kappa, pivot));
}

// ---------------------------------------------------------------------------
// Free-policy option
// ---------------------------------------------------------------------------

/// Payment scheme C on a partitioned state space, rescaled after exercise by
/// ρ(τ, Z(τ-), Z(τ)).
struct FreePolicySpec {
  StateSpace space;
  CashflowSpec1D scheme;
  /// ρ(·, k, l) on the grid for k ∈ S0, l ∈ S1; missing pairs mean ρ ≡ 1.
  std::map<std::pair<int, int>, std::vector<double>> rescale;

  double rho(int m, int k, int l) const {
    auto it = rescale.find({k, l});
    return it == rescale.end() ? 1.0 : it->second[static_cast<std::size_t>(m)];
  }
  std::vector<double> rho_curve(int k, int l) const {
    auto it = rescale.find({k, l});
    return it == rescale.end() ? std::vector<double>(static_cast<std::size_t>(scheme.grid_size()), 1.0) : it->second;
  }

  void validate() const {
    if (!space.partitioned()) throw ValidationError("free-policy cash-flow needs an S0/S1 partition");
    if (scheme.states() != space.size()) throw ValidationError("scheme does not match the state space");
    for (const auto& [kl, curve] : rescale) {
      if (!space.in_s0(kl.first) || !space.in_s1(kl.second))
        throw ValidationError("rescale factors are only defined for S0 -> S1 transitions");
      if (static_cast<int>(curve.size()) != scheme.grid_size()) throw ValidationError("rescale curve has wrong length");
    }
  }

  /// Grid indices at which an exercise would coincide with a lump-sum payment
  /// of the scheme (an S0 sojourn atom or an S0 -> S1 transition payment).
  std::vector<bool> lump_sum_indices() const {
    std::vector<bool> out(static_cast<std::size_t>(scheme.grid_size()), false);
    for (int k = 0; k < space.size(); ++k) {
      if (!space.in_s0(k)) continue;
      for (int m = 0; m < scheme.grid_size(); ++m)
        if (scheme.sojourn(k)[m] != 0.0) out[static_cast<std::size_t>(m)] = true;
      for (int l = 0; l < space.size(); ++l)
        if (space.in_s1(l))
          for (int m = 0; m < scheme.grid_size(); ++m)
            if (scheme.transition_at(k, l, m) != 0.0) out[static_cast<std::size_t>(m)] = true;
    }
    return out;
  }

  /// Same scheme with every component weighted by w(u) = κ(s)/κ(u); ρ is untouched.
  FreePolicySpec discounted(const DiscountCurve& kappa, int pivot) const {
    return {space, scheme.discounted(kappa, pivot), rescale};
  }
};

struct FreePolicyParts {
  CashflowSpec1D before_exercise;  // S0-only one-dimensional part
  CashflowSpec2D after_exercise;   // ρ-weighted two-dimensional part
};

inline FreePolicyParts build_free_policy_cashflow(const FreePolicySpec& fp) {
  fp.validate();
  const int n = fp.space.size(), size = fp.scheme.grid_size();
  FreePolicyParts parts{CashflowSpec1D(n, size), CashflowSpec2D(n, size)};

  for (int i = 0; i < n; ++i) {
    if (fp.space.in_s0(i)) parts.before_exercise.sojourn(i) = fp.scheme.sojourn(i);
    for (int j = 0; j < n; ++j)
      if (i != j && fp.space.in_s0(i) && fp.space.in_s0(j) && fp.scheme.has_transition(i, j)) {
        auto b = fp.scheme.transition(i, j);
        parts.before_exercise.set_transition(i, j, {b.begin(), b.end()});
      }
  }

  const std::vector<double> ones(static_cast<std::size_t>(size), 1.0);
  for (int k = 0; k < n; ++k) {
    if (!fp.space.in_s0(k)) continue;
    for (int l = 0; l < n; ++l) {
      if (!fp.space.in_s1(l)) continue;
      std::vector<double> rho = fp.rho_curve(k, l);
      for (int i = 0; i < n; ++i) {
        if (!fp.space.in_s1(i)) continue;
        if (!fp.scheme.sojourn(i).is_zero()) {
          parts.after_exercise.mixed_measure(i) = fp.scheme.sojourn(i);
          parts.after_exercise.add_mixed_payoff(i, k, l, PayoffSurface::outer(ones, rho));
        }
        for (int j = 0; j < n; ++j) {
          if (j == i || !fp.space.in_s1(j) || !fp.scheme.has_transition(i, j)) continue;
          auto c = fp.scheme.transition(i, j);
          parts.after_exercise.add_double_payoff(i, j, k, l, PayoffSurface::outer({c.begin(), c.end()}, rho));
        }
      }
    }
  }
  return parts;
}

struct FreePolicyValue {
  double value = 0.0;
  /// True when the scheme pays at the exercise time itself (an S0 atom or the
  /// exercise transition payment), which the decomposed representation leaves out.
  bool lump_at_exercise = false;
};

/// Straight-line evaluation of ∫ ρ(τ, Z(τ-), Z(τ))^{1{τ <= u}} C(du) over the window.
inline FreePolicyValue eval_free_policy_direct(const FreePolicySpec& fp, const Path& path, IndexRange window) {
  FreePolicyValue out;
  const std::optional<int> tau = path.exercise_index(fp.space);
  double factor_after = 1.0;
  if (tau) {
    factor_after = fp.rho(*tau, path.state(*tau - 1), path.state(*tau));
    out.lump_at_exercise = cashflow_increment(fp.scheme, path, *tau) != 0.0;
  }
  if (window.empty()) return out;
  if (window.first < 0 || window.last >= path.grid_size()) throw std::out_of_range("window outside grid");
  for (int m = window.first; m <= window.last; ++m) {
    double x = cashflow_increment(fp.scheme, path, m);
    out.value += (tau && m >= *tau) ? factor_after * x : x;
  }
  return out;
}

}  // namespace fwdrates
