#pragma once

// Time grids, atomic signed measures on grids, and the pivot-time index
// conventions shared by every other module.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

namespace fwdrates {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// State space
// ---------------------------------------------------------------------------

class StateSpace {
 public:
  StateSpace() = default;

  // `exercised` lists the states of the free-policy block S1; every other
  // state belongs to the premium-paying block S0. Empty means unpartitioned.
  explicit StateSpace(std::vector<std::string> labels,
                      const std::vector<std::string>& exercised = {})
      : labels_(std::move(labels)) {
    if (labels_.size() < 2) throw ValidationError("state space needs at least two states");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].empty()) throw ValidationError("state labels must be non-empty");
      for (std::size_t j = 0; j < i; ++j)
        if (labels_[i] == labels_[j])
          throw ValidationError("duplicate state label '" + labels_[i] + "'");
    }
    if (!exercised.empty()) {
      in_s1_.assign(labels_.size(), false);
      for (const auto& name : exercised) {
        int idx = index_of(name);
        if (in_s1_[idx]) throw ValidationError("state '" + name + "' listed twice in S1");
        in_s1_[idx] = true;
      }
      if (std::all_of(in_s1_.begin(), in_s1_.end(), [](bool b) { return b; }))
        throw ValidationError("partition leaves S0 empty");
    }
  }

  int size() const { return static_cast<int>(labels_.size()); }
  const std::string& label(int i) const { return labels_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& labels() const { return labels_; }

  int index_of(const std::string& name) const {
    auto it = std::find(labels_.begin(), labels_.end(), name);
    if (it == labels_.end()) throw ValidationError("unknown state '" + name + "'");
    return static_cast<int>(it - labels_.begin());
  }

  bool partitioned() const { return !in_s1_.empty(); }
  bool in_s1(int i) const { return partitioned() && in_s1_[static_cast<std::size_t>(i)]; }
  bool in_s0(int i) const { return !in_s1(i); }

  bool operator==(const StateSpace&) const = default;

 private:
  std::vector<std::string> labels_;
  std::vector<bool> in_s1_;
};

/// Flat index of the ordered pair (i, j) in an n-state space.
constexpr int pair_index(int i, int j, int n) { return i * n + j; }
constexpr int pair_from(int pair, int n) { return pair / n; }
constexpr int pair_to(int pair, int n) { return pair % n; }

// ---------------------------------------------------------------------------
// Index ranges and the time grid
// ---------------------------------------------------------------------------

/// Inclusive range of grid indices; empty when first > last.
struct IndexRange {
  int first = 0;
  int last = -1;

  static constexpr IndexRange none() { return {0, -1}; }
  constexpr bool empty() const { return first > last; }
  constexpr int size() const { return empty() ? 0 : last - first + 1; }
  constexpr bool contains(int m) const { return m >= first && m <= last; }
  constexpr IndexRange intersect(IndexRange o) const {
    IndexRange r{std::max(first, o.first), std::min(last, o.last)};
    return r.empty() ? none() : r;
  }
  constexpr bool operator==(const IndexRange& o) const {
    return (empty() && o.empty()) || (first == o.first && last == o.last);
  }
};

struct IndexRect {
  IndexRange rows;
  IndexRange cols;
  constexpr bool empty() const { return rows.empty() || cols.empty(); }
};

/// Uniform grid 0 = t_0 < ... < t_M = T with the pivot s on a grid point.
///
/// The pivot conventions live here:
///  - `left(m)`   is u^- (the previous grid point; t_0 maps to itself since Z(0-) = Z(0)),
///  - `settle(m)` is u^+- (u^- on the future side m > pivot, u itself otherwise),
///  - `interval(m)` is ((s, t_m]] as an index set.
class TimeGrid {
 public:
  TimeGrid() = default;

  TimeGrid(double horizon, double step, double pivot_time) : horizon_(horizon), step_(step) {
    if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("grid step must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw ValidationError("grid horizon must be positive");
    steps_ = snap(horizon / step, "horizon is not a multiple of the grid step");
    if (pivot_time < 0.0 || pivot_time > horizon * (1.0 + 1e-12))
      throw ValidationError("pivot time must lie in [0, T]");
    pivot_ = snap(pivot_time / step, "pivot time is not on the grid");
  }

  static TimeGrid from_steps(int steps, double step, int pivot) {
    if (steps < 1) throw ValidationError("grid needs at least one step");
    if (pivot < 0 || pivot > steps) throw ValidationError("pivot index outside the grid");
    return TimeGrid(steps * step, step, pivot * step);
  }

  int steps() const { return steps_; }
  int size() const { return steps_ + 1; }
  double step() const { return step_; }
  double horizon() const { return horizon_; }
  int pivot() const { return pivot_; }
  double pivot_time() const { return time(pivot_); }
  double time(int m) const { return m * step_; }

  bool future(int m) const { return m > pivot_; }
  int left(int m) const { return m > 0 ? m - 1 : 0; }
  int settle(int m) const { return m > pivot_ ? m - 1 : m; }

  IndexRange interval(int m) const {
    check(m);
    return m > pivot_ ? IndexRange{pivot_ + 1, m} : IndexRange{m + 1, pivot_};
  }

  /// Neighbour one step closer to the pivot (the pivot maps to itself).
  int toward_pivot(int m) const { return m > pivot_ ? m - 1 : (m < pivot_ ? m + 1 : m); }

  IndexRange all() const { return {0, steps_}; }
  IndexRange past() const { return {0, pivot_}; }
  IndexRange future_range() const { return {pivot_ + 1, steps_}; }

  /// Grid indices whose time lies in (from, to]; clipped to [0, T].
  IndexRange window(double from, double to) const {
    const double eps = 1e-9 * step_;
    int lo = static_cast<int>(std::floor((from + eps) / step_)) + 1;
    int hi = static_cast<int>(std::floor((to + eps) / step_));
    if (from < 0.0) lo = 0;
    IndexRange r{std::max(lo, 0), std::min(hi, steps_)};
    return r.empty() ? IndexRange::none() : r;
  }

  /// Processing order in which every index follows its `toward_pivot` neighbour.
  std::vector<int> sweep_order() const {
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(size()));
    for (int m = pivot_; m <= steps_; ++m) order.push_back(m);
    for (int m = pivot_ - 1; m >= 0; --m) order.push_back(m);
    return order;
  }

  TimeGrid with_pivot(int pivot) const { return from_steps(steps_, step_, pivot); }

  void check(int m) const {
    if (m < 0 || m > steps_) throw std::out_of_range("grid index " + std::to_string(m));
  }
  void check(IndexRange r) const {
    if (!r.empty() && (r.first < 0 || r.last > steps_))
      throw std::out_of_range("index window [" + std::to_string(r.first) + ", " +
                              std::to_string(r.last) + "] outside grid");
  }

  bool operator==(const TimeGrid& o) const {
    return steps_ == o.steps_ && pivot_ == o.pivot_ && step_ == o.step_;
  }

 private:
  static int snap(double ratio, const char* what) {
    double r = std::round(ratio);
    if (std::abs(ratio - r) > 1e-9 * std::max(1.0, std::abs(ratio))) throw ValidationError(what);
    return static_cast<int>(r);
  }

  double horizon_ = 1.0;
  double step_ = 1.0;
  int steps_ = 1;
  int pivot_ = 0;
};

// ---------------------------------------------------------------------------
// Dense square matrices over grid indices
// ---------------------------------------------------------------------------

template <class T>
class Grid2D {
 public:
  Grid2D() = default;
  explicit Grid2D(int n, T fill = T{}) : n_(n), data_(static_cast<std::size_t>(n) * n, fill) {}

  int size() const { return n_; }
  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * n_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * n_ + c]; }
  std::span<T> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * n_, static_cast<std::size_t>(n_)}; }
  std::span<const T> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * n_, static_cast<std::size_t>(n_)};
  }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }
  bool empty() const { return data_.empty(); }

  /// In-place two-dimensional prefix sum (turns a difference array into values).
  void prefix_sum() {
    for (int r = 0; r < n_; ++r)
      for (int c = 1; c < n_; ++c) (*this)(r, c) += (*this)(r, c - 1);
    for (int r = 1; r < n_; ++r)
      for (int c = 0; c < n_; ++c) (*this)(r, c) += (*this)(r - 1, c);
  }

 private:
  int n_ = 0;
  std::vector<T> data_;
};

using Matrix = Grid2D<double>;

// ---------------------------------------------------------------------------
// Atomic signed measures
// ---------------------------------------------------------------------------

/// Purely atomic signed measure on the grid: atoms[m] is the mass at t_m.
class Measure1D {
 public:
  Measure1D() = default;
  explicit Measure1D(int grid_size) : atoms_(static_cast<std::size_t>(grid_size), 0.0) {}
  explicit Measure1D(std::vector<double> atoms) : atoms_(std::move(atoms)) {}

  static Measure1D from_cumulative(std::span<const double> cumulative) {
    std::vector<double> atoms(cumulative.size());
    for (std::size_t m = 0; m < cumulative.size(); ++m)
      atoms[m] = m == 0 ? cumulative[0] : cumulative[m] - cumulative[m - 1];
    return Measure1D(std::move(atoms));
  }

  int size() const { return static_cast<int>(atoms_.size()); }
  double operator[](int m) const { return atoms_[static_cast<std::size_t>(m)]; }
  double& operator[](int m) { return atoms_[static_cast<std::size_t>(m)]; }
  std::span<const double> atoms() const { return atoms_; }
  bool is_zero() const {
    return std::all_of(atoms_.begin(), atoms_.end(), [](double a) { return a == 0.0; });
  }

  std::vector<double> cumulative() const {
    std::vector<double> out(atoms_.size());
    double acc = 0.0;
    for (std::size_t m = 0; m < atoms_.size(); ++m) out[m] = acc += atoms_[m];
    return out;
  }

  Measure1D& operator+=(const Measure1D& o) {
    if (o.atoms_.size() != atoms_.size()) throw std::invalid_argument("measure size mismatch");
    for (std::size_t m = 0; m < atoms_.size(); ++m) atoms_[m] += o.atoms_[m];
    return *this;
  }
  Measure1D& operator*=(double c) {
    for (auto& a : atoms_) a *= c;
    return *this;
  }

 private:
  std::vector<double> atoms_;
};

/// Grid surface stored as an optional dense part plus a sum of rank-one
/// terms f(m1) g(m2). Squared and free-policy cash-flows are almost always
/// separable, so dense storage is only materialised on demand.
template <class Tag>
class SeparableSurface {
 public:
  SeparableSurface() = default;
  explicit SeparableSurface(int grid_size) : n_(grid_size) {}

  static SeparableSurface outer(std::vector<double> f, std::vector<double> g) {
    SeparableSurface s(static_cast<int>(f.size()));
    s.add_outer(std::move(f), std::move(g));
    return s;
  }
  static SeparableSurface dense(Matrix values) {
    SeparableSurface s(values.size());
    s.dense_ = std::move(values);
    return s;
  }

  int size() const { return n_; }

  void add_outer(std::vector<double> f, std::vector<double> g) {
    if (static_cast<int>(f.size()) != n_ || static_cast<int>(g.size()) != n_)
      throw std::invalid_argument("rank-one factor size mismatch");
    terms_.push_back({std::move(f), std::move(g)});
  }
  void add_dense(const Matrix& m) {
    if (m.size() != n_) throw std::invalid_argument("dense part size mismatch");
    if (!dense_) dense_ = Matrix(n_, 0.0);
    for (std::size_t k = 0; k < m.raw().size(); ++k) dense_->raw()[k] += m.raw()[k];
  }

  double at(int m1, int m2) const {
    double v = dense_ ? (*dense_)(m1, m2) : 0.0;
    for (const auto& t : terms_)
      v += t.f[static_cast<std::size_t>(m1)] * t.g[static_cast<std::size_t>(m2)];
    return v;
  }

  bool is_zero() const {
    if (dense_ && std::any_of(dense_->raw().begin(), dense_->raw().end(),
                              [](double x) { return x != 0.0; }))
      return false;
    for (const auto& t : terms_) {
      bool fz = std::all_of(t.f.begin(), t.f.end(), [](double x) { return x == 0.0; });
      bool gz = std::all_of(t.g.begin(), t.g.end(), [](double x) { return x == 0.0; });
      if (!fz && !gz) return false;
    }
    return true;
  }

  /// Zero outside `rect` (rows index the first coordinate).
  SeparableSurface restricted(IndexRect rect) const {
    SeparableSurface out(n_);
    if (dense_) {
      Matrix d(n_, 0.0);
      for (int r = rect.rows.first; r <= rect.rows.last; ++r)
        for (int c = rect.cols.first; c <= rect.cols.last; ++c) d(r, c) = (*dense_)(r, c);
      out.dense_ = std::move(d);
    }
    for (const auto& t : terms_) {
      std::vector<double> f(t.f.size(), 0.0), g(t.g.size(), 0.0);
      for (int r = rect.rows.first; r <= rect.rows.last; ++r) f[static_cast<std::size_t>(r)] = t.f[static_cast<std::size_t>(r)];
      for (int c = rect.cols.first; c <= rect.cols.last; ++c) g[static_cast<std::size_t>(c)] = t.g[static_cast<std::size_t>(c)];
      out.terms_.push_back({std::move(f), std::move(g)});
    }
    return out;
  }

  /// Multiply by row weights a(m1) and column weights b(m2).
  SeparableSurface weighted(std::span<const double> a, std::span<const double> b) const {
    SeparableSurface out(n_);
    if (dense_) {
      Matrix d = *dense_;
      for (int r = 0; r < n_; ++r)
        for (int c = 0; c < n_; ++c) d(r, c) *= a[static_cast<std::size_t>(r)] * b[static_cast<std::size_t>(c)];
      out.dense_ = std::move(d);
    }
    for (const auto& t : terms_) {
      std::vector<double> f(t.f), g(t.g);
      for (std::size_t k = 0; k < f.size(); ++k) f[k] *= a[k];
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= b[k];
      out.terms_.push_back({std::move(f), std::move(g)});
    }
    return out;
  }

 private:
  struct RankOne {
    std::vector<double> f;
    std::vector<double> g;
  };
  int n_ = 0;
  std::optional<Matrix> dense_;
  std::vector<RankOne> terms_;
};

struct MeasureTag;
struct PayoffTag;

/// Atomic signed measure on the grid square; diagonal atoms are meaningful.
using Measure2D = SeparableSurface<MeasureTag>;
/// Bounded payoff function sampled on the grid square.
using PayoffSurface = SeparableSurface<PayoffTag>;

// ---------------------------------------------------------------------------
// Discrete Lebesgue-Stieltjes integrals
// ---------------------------------------------------------------------------

inline double integrate_1d(std::span<const double> values, const Measure1D& mu, IndexRange window) {
  if (window.empty()) return 0.0;
  if (window.first < 0 || window.last >= mu.size() || window.last >= static_cast<int>(values.size()))
    throw std::out_of_range("integration window outside grid");
  double acc = 0.0;
  for (int m = window.first; m <= window.last; ++m) acc += values[static_cast<std::size_t>(m)] * mu[m];
  return acc;
}

template <class Values>
  requires std::is_invocable_r_v<double, Values, int, int>
double integrate_2d(Values&& values, const Measure2D& mu, IndexRect rect) {
  if (rect.empty()) return 0.0;
  if (rect.rows.first < 0 || rect.cols.first < 0 || rect.rows.last >= mu.size() ||
      rect.cols.last >= mu.size())
    throw std::out_of_range("integration rectangle outside grid");
  double acc = 0.0;
  for (int r = rect.rows.first; r <= rect.rows.last; ++r)
    for (int c = rect.cols.first; c <= rect.cols.last; ++c) {
      double a = mu.at(r, c);
      if (a != 0.0) acc += values(r, c) * a;
    }
  return acc;
}

inline double integrate_2d(const Matrix& values, const Measure2D& mu, IndexRect rect) {
  if (!rect.empty() && (rect.rows.last >= values.size() || rect.cols.last >= values.size()))
    throw std::out_of_range("integration rectangle outside value surface");
  return integrate_2d([&](int r, int c) { return values(r, c); }, mu, rect);
}

}  // namespace fwdrates
