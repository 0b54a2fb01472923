#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdm/error.hpp"
#include "mdm/expr.hpp"

namespace mdm {

inline constexpr std::string_view kTimestamp = "ts";
inline constexpr std::string_view kModePrefix = "__mode_";
inline constexpr std::string_view kModeAlias = "__mode";

inline std::string mode_var(std::size_t depth) { return std::string(kModePrefix) + std::to_string(depth); }

/// True for names the engine owns: `ts`, `__mode` and `__mode_<d>`.
inline bool is_reserved_name(std::string_view name) {
  return name == kTimestamp || name == kModeAlias || name.starts_with(kModePrefix);
}

/// Named assignment of reals to variables, used for initial states and I/O.
using Valuation = std::map<std::string, double, std::less<>>;

/// Slot layout shared by every state of a simulation.
///
/// Slot 0 is `ts`, then `__mode_0 .. __mode_{D-1}` (with `__mode` as an alias
/// of `__mode_0` when D > 0), then the declared variables sorted by name. This
/// is also the column order of exported traces.
class Schema {
 public:
  Schema(std::vector<std::string> vars, std::size_t mode_depth) : mode_depth_(mode_depth) {
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    names_.emplace_back(kTimestamp);
    for (std::size_t d = 0; d < mode_depth; ++d) names_.push_back(mode_var(d));
    for (auto& v : vars) {
      if (is_reserved_name(v)) throw ModelError("variable name '" + v + "' is reserved");
      names_.push_back(std::move(v));
    }
    for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
    if (mode_depth > 0) index_.emplace(std::string(kModeAlias), 1);
  }

  static std::shared_ptr<const Schema> make(std::vector<std::string> vars, std::size_t mode_depth = 0) {
    return std::make_shared<const Schema>(std::move(vars), mode_depth);
  }

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t mode_depth() const noexcept { return mode_depth_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t slot) const { return names_.at(slot); }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t slot(std::string_view name) const {
    if (auto s = find(name)) return *s;
    throw EvalError("unknown variable '" + std::string(name) + "'");
  }

  static constexpr std::size_t ts_slot() noexcept { return 0; }
  std::size_t mode_slot(std::size_t depth) const noexcept { return 1 + depth; }
  std::size_t first_var_slot() const noexcept { return 1 + mode_depth_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::size_t mode_depth_;
};

/// A valuation of every schema slot. Mode-code slots hold -1 at depths the
/// active mode chain does not reach.
class State {
 public:
  explicit State(std::shared_ptr<const Schema> schema)
      : schema_(std::move(schema)), values_(schema_->size(), 0.0) {
    for (std::size_t d = 0; d < schema_->mode_depth(); ++d) values_[schema_->mode_slot(d)] = -1.0;
  }

  const Schema& schema() const noexcept { return *schema_; }
  const std::shared_ptr<const Schema>& schema_ptr() const noexcept { return schema_; }

  double get(std::string_view name) const { return values_[schema_->slot(name)]; }
  void set(std::string_view name, double v) { values_[schema_->slot(name)] = v; }
  bool has(std::string_view name) const { return schema_->find(name).has_value(); }

  double ts() const noexcept { return values_[Schema::ts_slot()]; }

  double& operator[](std::size_t slot) { return values_[slot]; }
  double operator[](std::size_t slot) const { return values_[slot]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  Valuation to_valuation() const {
    Valuation out;
    for (std::size_t i = 0; i < values_.size(); ++i) out.emplace(schema_->name(i), values_[i]);
    return out;
  }

  friend bool operator==(const State& a, const State& b) { return a.values_ == b.values_; }

 private:
  std::shared_ptr<const Schema> schema_;
  std::vector<double> values_;
};

/// Σ: the recorded states of a run, oldest first; back() is the current state.
using Trace = std::vector<State>;

inline double eval_sexpr(const SExpr& e, const State& sigma) {
  return evaluate(e, [&](std::string_view n) { return sigma.get(n); });
}

inline bool eval_bexpr(const BoolExpr& b, const State& sigma) {
  return evaluate(b, [&](std::string_view n) { return sigma.get(n); });
}

inline double eval_sexpr(const SExpr& e, const Valuation& sigma) {
  return evaluate(e, [&](std::string_view n) {
    auto it = sigma.find(n);
    if (it == sigma.end()) throw EvalError("unknown variable '" + std::string(n) + "'");
    return it->second;
  });
}

inline bool eval_bexpr(const BoolExpr& b, const Valuation& sigma) {
  return evaluate(b, [&](std::string_view n) {
    auto it = sigma.find(n);
    if (it == sigma.end()) throw EvalError("unknown variable '" + std::string(n) + "'");
    return it->second;
  });
}

}  // namespace mdm
