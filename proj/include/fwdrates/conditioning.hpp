#pragma once

// Information sets G_s as discrete labels computed from the path on [0, s].

#include <compare>
#include <limits>
#include <string>
#include <vector>

#include "fwdrates/core.hpp"
#include "fwdrates/path.hpp"
#include "fwdrates/simulate.hpp"

namespace fwdrates {

class EmptyCellError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Label {
  int state = 0;    // Z(s); every label determines it
  int bucket = -1;  // duration bucket, -1 when unused
  auto operator<=>(const Label&) const = default;
};

class ConditioningScheme {
 public:
  enum class Kind { AsIfMarkov, StateDuration };

  static ConditioningScheme as_if_markov() { return ConditioningScheme(Kind::AsIfMarkov, {}); }

  /// Buckets [0, e1), [e1, e2), ..., [ek, inf) of the time spent in Z(s).
  static ConditioningScheme state_duration(std::vector<double> edges) {
    for (std::size_t k = 0; k < edges.size(); ++k)
      if (!(edges[k] > 0.0) || (k > 0 && !(edges[k] > edges[k - 1])))
        throw ValidationError("duration bucket edges must be positive and increasing");
    return ConditioningScheme(Kind::StateDuration, std::move(edges));
  }

  Kind kind() const { return kind_; }
  const std::vector<double>& edges() const { return edges_; }
  int buckets() const { return kind_ == Kind::AsIfMarkov ? 0 : static_cast<int>(edges_.size()) + 1; }

  /// Depends only on the path up to and including the pivot.
  Label classify(const Path& path, const TimeGrid& grid, double initial_duration = 0.0) const {
    const int p = grid.pivot();
    Label label{path.state(p), -1};
    if (kind_ == Kind::StateDuration) {
      const int entry = path.entry_index(p);
      double duration = grid.time(p) - grid.time(entry);
      if (entry == 0) duration += initial_duration;
      int b = 0;
      while (b < static_cast<int>(edges_.size()) && duration >= edges_[static_cast<std::size_t>(b)] - 1e-9 * grid.step()) ++b;
      label.bucket = b;
    }
    return label;
  }

  std::string name(const Label& label, const StateSpace& space) const {
    std::string out = space.label(label.state);
    if (label.bucket >= 0) {
      auto fmt = [](double x) {
        std::string s = std::to_string(x);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
      };
      const std::size_t b = static_cast<std::size_t>(label.bucket);
      std::string lo = b == 0 ? "0" : fmt(edges_[b - 1]);
      std::string hi = b < edges_.size() ? fmt(edges_[b]) : "inf";
      out += "|d[" + lo + "," + hi + ")";
    }
    return out;
  }

  /// All labels this scheme can produce on `space`, in canonical order.
  std::vector<Label> all_labels(const StateSpace& space) const {
    std::vector<Label> out;
    for (int i = 0; i < space.size(); ++i) {
      if (kind_ == Kind::AsIfMarkov) {
        out.push_back({i, -1});
      } else {
        for (int b = 0; b < buckets(); ++b) out.push_back({i, b});
      }
    }
    return out;
  }

  Label parse(const std::string& text, const StateSpace& space) const {
    for (const Label& l : all_labels(space))
      if (name(l, space) == text) return l;
    throw ValidationError("label '" + text + "' does not match the conditioning scheme");
  }

 private:
  ConditioningScheme(Kind kind, std::vector<double> edges) : kind_(kind), edges_(std::move(edges)) {}
  Kind kind_ = Kind::AsIfMarkov;
  std::vector<double> edges_;
};

/// Indices of the paths in the conditioning cell of `label`.
inline std::vector<std::size_t> cell_members(const Ensemble& ens, const ConditioningScheme& scheme, const Label& label) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < ens.paths.size(); ++k)
    if (scheme.classify(ens.paths[k], ens.grid, ens.initial_duration) == label) out.push_back(k);
  if (out.empty())
    throw EmptyCellError("conditioning cell '" + scheme.name(label, ens.space) + "' is empty");
  return out;
}

}  // namespace fwdrates
