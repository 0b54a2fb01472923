#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdm/environment.hpp"
#include "mdm/error.hpp"
#include "mdm/itl.hpp"
#include "mdm/model.hpp"
#include "mdm/parser.hpp"
#include "mdm/semantics.hpp"
#include "mdm/smc.hpp"

namespace mdm {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Everything a subcommand needs; filled from flags and an optional config file.
struct RunConfig {
  std::string model_path;
  std::string prop_path;
  std::vector<std::string> props;  // empty selects every property in the file
  std::uint64_t periods = 100;
  std::optional<std::uint64_t> seed;
  double delta = 0.01;
  double epsilon = 0.05;
  unsigned jobs = 1;
  std::optional<std::uint64_t> steps_per_period;
  std::string trace_out;
  std::string trace_format = "csv";
  std::string report_out;
  std::string verdicts_out;
  bool omit_timing = false;

  std::string env = "none";  // none | constant | replay | walk
  std::map<std::string, double> env_set;
  std::string env_file;
  std::map<std::string, double> env_step;
  std::map<std::string, double> init;  // fixed initial values
};

/// Unreadable input or an inconsistent configuration; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  return out;
}

inline Valuation to_valuation(const std::map<std::string, double>& m) { return Valuation(m.begin(), m.end()); }

inline std::unique_ptr<EnvironmentHook> make_env(const RunConfig& cfg, const ModelDef& md) {
  try {
    if (cfg.env == "none") return std::make_unique<IdentityEnv>();
    if (cfg.env == "constant") return std::make_unique<ConstantEnv>(md, to_valuation(cfg.env_set));
    if (cfg.env == "replay") {
      if (cfg.env_file.empty()) throw UsageError("--env replay needs --env-file");
      return std::make_unique<ReplayEnv>(md, parse_replay_csv(read_file(cfg.env_file)));
    }
    if (cfg.env == "walk") return std::make_unique<RandomWalkEnv>(md, to_valuation(cfg.env_step));
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  throw UsageError("unknown environment '" + cfg.env + "'");
}

inline InitSpec make_init(const RunConfig& cfg, const ModelDef& md) {
  InitSpec spec = InitSpec::from_model(md);
  for (const auto& [name, v] : cfg.init) {
    if (!find_var(md, name)) throw UsageError("--init names undeclared variable '" + name + "'");
    spec.fixed[name] = v;
  }
  return spec;
}

inline std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

inline StepBudget budget_of(const RunConfig& cfg) {
  if (!cfg.steps_per_period) return kUnbounded;
  if (*cfg.steps_per_period == 0) throw UsageError("--steps-per-period must be positive");
  return *cfg.steps_per_period;
}

/// Parses and validates; prints violations. Returns nullopt with `code` set
/// when the model is unusable.
inline std::optional<ModelDef> load_model(const std::string& path, std::ostream& out, std::ostream& err, int& code) {
  ModelDef md;
  try {
    md = parse_model(read_file(path), path);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    code = kExitUsage;
    return std::nullopt;
  }
  const auto report = validate(md);
  if (!report.empty()) {
    for (const auto& v : report) out << v.to_string() << '\n';
    code = kExitFailure;
    return std::nullopt;
  }
  return md;
}

inline std::string format_fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace detail

/// JSON form of a report, keys in a fixed order. Without timing the output
/// depends only on the inputs.
inline nlohmann::ordered_json to_json(const VerificationReport& r, bool with_timing = true) {
  nlohmann::ordered_json j;
  j["property"] = r.property;
  j["N"] = r.N;
  j["a"] = r.a;
  j["p"] = r.p;
  j["delta"] = r.delta;
  j["epsilon"] = r.epsilon;
  j["B"] = r.B;
  j["seed"] = r.seed;
  if (with_timing) j["elapsed_s"] = r.elapsed_s;
  return j;
}

/// Prints each violation with its source position; 0 iff the model is valid.
inline int cmd_validate(const std::string& model_path, std::ostream& out, std::ostream& err) {
  int code = kExitOk;
  return detail::load_model(model_path, out, err, code) ? kExitOk : code;
}

/// One seeded simulation. The trace goes to `trace_out`, or to `out` when no
/// path is given, in which case the summary goes to `err`.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  int code = kExitOk;
  auto md = detail::load_model(cfg.model_path, out, err, code);
  if (!md) return code;
  try {
    auto model = CompiledModel::make(*md);
    auto env = detail::make_env(cfg, *md);
    const InitSpec init = detail::make_init(cfg, *md);
    const StepBudget budget = detail::budget_of(cfg);
    if (cfg.trace_format != "csv" && cfg.trace_format != "jsonl") {
      throw UsageError("unknown trace format '" + cfg.trace_format + "'");
    }
    std::ostream& summary = cfg.trace_out.empty() ? err : out;
    const std::uint64_t seed = cfg.seed ? *cfg.seed : detail::entropy_seed();
    if (!cfg.seed) summary << "seed: " << seed << '\n';

    // Trace 0 of a verify run with the same seed.
    const std::uint64_t trace_seed = substream_seed(seed, 0);
    Rng rng(trace_seed);
    Configuration c = initial_configuration(model, random_initial_state(*md, init, rng));
    env->reset(trace_seed);
    try {
      run_until(c, *env, cfg.periods, budget);
    } catch (const SimulationError& e) {
      err << "error: " << e.what() << '\n';
      return kExitFailure;
    }

    auto write = [&](std::ostream& o) {
      if (cfg.trace_format == "csv") write_trace_csv(o, c.trace);
      else write_trace_jsonl(o, c.trace);
    };
    if (cfg.trace_out.empty()) {
      write(out);
    } else {
      auto f = detail::open_output(cfg.trace_out);
      write(f);
    }
    summary << "final mode: " << c.current_name() << ", ts = " << format_number(c.trace.back().ts()) << '\n';
    if (c.hook_violations) {
      summary << "warning: environment wrote non-sensor variables in " << c.hook_violations
              << " samplings; the writes were undone\n";
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

/// Estimates every selected property, prints one summary line each and
/// writes the JSON report. Exit status does not depend on p.
inline int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  int code = kExitOk;
  auto md = detail::load_model(cfg.model_path, out, err, code);
  if (!md) return code;
  try {
    if (cfg.prop_path.empty()) throw UsageError("verify needs a property file");
    PropertyFile file;
    try {
      file = parse_property_file(detail::read_file(cfg.prop_path), cfg.prop_path);
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
    std::vector<Property> props;
    if (cfg.props.empty()) {
      props = file.props;
    } else {
      for (const auto& name : cfg.props) {
        const Property* p = file.find(name);
        if (!p) throw UsageError("no property named '" + name + "' in " + cfg.prop_path);
        props.push_back(*p);
      }
    }
    if (props.empty()) throw UsageError("no properties to verify");

    auto model = CompiledModel::make(*md);
    for (const auto& p : props) {
      try {
        FormulaChecker(p.formula, model->schema());
      } catch (const EvalError& e) {
        throw UsageError("property " + p.name + ": " + e.what());
      }
    }
    auto env = detail::make_env(cfg, *md);
    SmcParams params;
    params.delta = cfg.delta;
    params.epsilon = cfg.epsilon;
    params.periods = cfg.periods;
    params.workers = cfg.jobs;
    params.steps_per_period = detail::budget_of(cfg);
    params.seed = cfg.seed ? *cfg.seed : detail::entropy_seed();
    params.check();
    if (!cfg.seed) out << "seed: " << params.seed << '\n';

    std::vector<VerificationReport> reports;
    try {
      reports = estimate_many(model, props, params, *env, detail::make_init(cfg, *md));
    } catch (const TraceError& e) {
      err << "error: " << e.what() << '\n';
      return kExitFailure;
    }

    for (const auto& r : reports) {
      out << r.property << ": p = " << r.a << "/" << r.N << " = " << detail::format_fixed(r.p, 4) << " (N=" << r.N
          << ", δ=" << format_number(r.delta) << ", ε=" << format_number(r.epsilon) << ")\n";
    }
    if (!cfg.report_out.empty()) {
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& r : reports) j.push_back(to_json(r, !cfg.omit_timing));
      auto f = detail::open_output(cfg.report_out);
      f << j.dump(2) << '\n';
    }
    if (!cfg.verdicts_out.empty()) {
      auto f = detail::open_output(cfg.verdicts_out);
      write_verdicts_csv(f, reports);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace mdm
