#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mdm/error.hpp"
#include "mdm/expr.hpp"
#include "mdm/model.hpp"
#include "mdm/state.hpp"

namespace mdm {

/// Pseudo-random source. Seeded per trace from (master seed, trace index) so
/// results do not depend on how traces are scheduled onto workers.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of substream `index` under `master`.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return lo + uniform01(rng) * (hi - lo);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Where initial values come from: one closed range per variable plus
/// optional fixed overrides.
struct InitSpec {
  std::map<std::string, Interval, std::less<>> ranges;
  std::map<std::string, double, std::less<>> fixed;

  static InitSpec from_model(const ModelDef& md) {
    InitSpec spec;
    for (const auto& v : md.vars) spec.ranges[v.name] = {v.lo, v.hi};
    return spec;
  }

  /// Throws ModelError if a declared variable has neither a range nor an override.
  void check_covers(const ModelDef& md) const {
    for (const auto& v : md.vars) {
      if (!ranges.count(v.name) && !fixed.count(v.name)) {
        throw ModelError("no initial range for variable '" + v.name + "'");
      }
    }
  }
};

/// Draws each range independently and uniformly, in name order, then applies
/// overrides. `ts` is 0.
inline Valuation random_initial_state(const InitSpec& spec, Rng& rng) {
  Valuation out;
  for (const auto& [name, r] : spec.ranges) {
    if (!(r.lo <= r.hi)) throw ModelError("empty initial range for '" + name + "'");
    out[name] = uniform(rng, r.lo, r.hi);
  }
  for (const auto& [name, v] : spec.fixed) out[name] = v;
  out[std::string(kTimestamp)] = 0.0;
  return out;
}

inline Valuation random_initial_state(const ModelDef& md, const InitSpec& spec, Rng& rng) {
  spec.check_covers(md);
  return random_initial_state(spec, rng);
}

/// Sensor sampling applied at the start of every leaf-mode period.
///
/// Implementations may only change sensor variables; the engine restores
/// everything else. One instance belongs to one simulation at a time.
class EnvironmentHook {
 public:
  virtual ~EnvironmentHook() = default;
  virtual State sampling(State sigma) = 0;
  /// Called before each simulation with that simulation's seed.
  virtual void reset(std::uint64_t /*seed*/) {}
  virtual std::unique_ptr<EnvironmentHook> clone() const = 0;
};

/// Leaves every variable untouched.
class IdentityEnv final : public EnvironmentHook {
 public:
  State sampling(State sigma) override { return sigma; }
  std::unique_ptr<EnvironmentHook> clone() const override { return std::make_unique<IdentityEnv>(); }
};

namespace detail {

inline void require_sensor(const ModelDef& md, const std::string& name) {
  const VarDecl* v = find_var(md, name);
  if (!v) throw ModelError("environment refers to undeclared variable '" + name + "'");
  if (!v->sensor) throw ModelError("environment writes non-sensor variable '" + name + "'");
}

}  // namespace detail

/// Writes the same values at every sampling.
class ConstantEnv final : public EnvironmentHook {
 public:
  ConstantEnv(const ModelDef& md, Valuation values) : values_(std::move(values)) {
    for (const auto& [name, v] : values_) detail::require_sensor(md, name);
  }

  State sampling(State sigma) override {
    for (const auto& [name, v] : values_) sigma.set(name, v);
    return sigma;
  }

  std::unique_ptr<EnvironmentHook> clone() const override { return std::make_unique<ConstantEnv>(*this); }

 private:
  Valuation values_;
};

/// Sensor readings loaded from CSV: a header of variable names, then one row
/// per sampling event.
struct ReplaySchedule {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

inline ReplaySchedule parse_replay_csv(std::string_view text) {
  ReplaySchedule out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line);
    if (out.columns.empty()) {
      out.columns = std::move(cells);
      continue;
    }
    if (cells.size() != out.columns.size()) {
      throw Error("replay schedule line " + std::to_string(lineno) + ": expected " +
                  std::to_string(out.columns.size()) + " values");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw Error("replay schedule line " + std::to_string(lineno) + ": bad number '" + c + "'");
      }
    }
    out.rows.push_back(std::move(row));
  }
  if (out.columns.empty()) throw Error("replay schedule has no header");
  if (out.rows.empty()) throw Error("replay schedule has no rows");
  return out;
}

/// Writes row j of a schedule at the j-th sampling call, repeating the last
/// row once the schedule is exhausted.
class ReplayEnv final : public EnvironmentHook {
 public:
  ReplayEnv(const ModelDef& md, ReplaySchedule schedule) : schedule_(std::move(schedule)) {
    for (const auto& c : schedule_.columns) detail::require_sensor(md, c);
    if (schedule_.rows.empty()) throw Error("replay schedule has no rows");
  }

  State sampling(State sigma) override {
    const auto& row = schedule_.rows[std::min(calls_, schedule_.rows.size() - 1)];
    for (std::size_t c = 0; c < row.size(); ++c) sigma.set(schedule_.columns[c], row[c]);
    ++calls_;
    return sigma;
  }

  void reset(std::uint64_t) override { calls_ = 0; }

  std::unique_ptr<EnvironmentHook> clone() const override { return std::make_unique<ReplayEnv>(*this); }

 private:
  ReplaySchedule schedule_;
  std::size_t calls_ = 0;
};

/// Adds an independent uniform step in [-delta, +delta] to each listed sensor.
class RandomWalkEnv final : public EnvironmentHook {
 public:
  RandomWalkEnv(const ModelDef& md, Valuation step_sizes, std::uint64_t seed = 0)
      : steps_(std::move(step_sizes)), rng_(seed) {
    for (const auto& [name, d] : steps_) {
      detail::require_sensor(md, name);
      if (!(d >= 0.0)) throw ModelError("random-walk step for '" + name + "' must be non-negative");
    }
  }

  State sampling(State sigma) override {
    for (const auto& [name, d] : steps_) {
      const double step = uniform(rng_, -d, d);
      sigma.set(name, sigma.get(name) + step);
    }
    return sigma;
  }

  void reset(std::uint64_t seed) override { rng_.seed(mix64(seed ^ 0x5EED5EED5EED5EEDULL)); }

  std::unique_ptr<EnvironmentHook> clone() const override { return std::make_unique<RandomWalkEnv>(*this); }

 private:
  Valuation steps_;
  Rng rng_;
};

}  // namespace mdm
