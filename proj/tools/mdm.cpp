// mdm: validate, simulate and statistically verify mode diagram models.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdm/commands.hpp"

namespace {

// "name=value" pairs from repeatable flags.
bool parse_assignments(const std::vector<std::string>& items, const std::string& flag,
                       std::map<std::string, double>& out) {
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: " << flag << " expects name=value, got '" << item << "'\n";
      return false;
    }
    try {
      std::size_t used = 0;
      const std::string text = item.substr(eq + 1);
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      out[item.substr(0, eq)] = v;
    } catch (const std::exception&) {
      std::cerr << "error: " << flag << ": bad number in '" << item << "'\n";
      return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mode diagram models: validation, simulation and statistical model checking.\n"
               "Model and property grammars are described in docs/grammar.md."};
  app.set_config("--config", "", "Read key = value settings from a file; flags given on the command line win");
  app.require_subcommand(1);

  mdm::RunConfig cfg;
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::vector<std::string> env_set, env_step, init;

  app.add_option("-B,--periods", cfg.periods, "Number of periods to simulate")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed; omitted means a fresh seed that is printed");
  app.add_option("--delta", cfg.delta, "Confidence parameter in (0, 1)")->capture_default_str();
  app.add_option("--epsilon", cfg.epsilon, "Approximation parameter in (0, 1)")->capture_default_str();
  app.add_option("--jobs", cfg.jobs, "Worker threads for verify; 0 uses every hardware thread")->capture_default_str();
  auto* steps_opt = app.add_option("--steps-per-period", steps, "Instruction budget per execute step (default unbounded)");
  app.add_option("--env", cfg.env, "Environment: none, constant, replay or walk")
      ->check(CLI::IsMember({"none", "constant", "replay", "walk"}))
      ->capture_default_str();
  app.add_option("--env-set", env_set, "constant: sensor value, name=value (repeatable)");
  app.add_option("--env-file", cfg.env_file, "replay: CSV schedule with a header of sensor names");
  app.add_option("--env-step", env_step, "walk: step bound, name=delta (repeatable)");
  app.add_option("--init", init, "Fix an initial value instead of drawing it, name=value (repeatable)");
  app.add_option("--trace-out", cfg.trace_out, "simulate: write the trace here instead of stdout");
  app.add_option("--trace-format", cfg.trace_format, "simulate: csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}))
      ->capture_default_str();
  app.add_option("--report-out", cfg.report_out, "verify: write the JSON report here");
  app.add_option("--verdicts-out", cfg.verdicts_out, "verify: write per-trace verdicts as CSV here");
  app.add_flag("--omit-timing", cfg.omit_timing, "verify: leave elapsed_s out of the report");
  app.add_option("--prop", cfg.prop_path, "verify: property file (.itl)");
  app.add_option("--select", cfg.props, "verify: check only this property (repeatable)");

  auto* validate = app.add_subcommand("validate", "Parse a model and report well-formedness violations");
  validate->add_option("model", cfg.model_path, "Model file (.mdm)")->required();
  validate->fallthrough();

  auto* simulate = app.add_subcommand("simulate", "Run one seeded simulation and write its trace");
  simulate->add_option("model", cfg.model_path, "Model file (.mdm)")->required();
  simulate->fallthrough();

  auto* verify = app.add_subcommand("verify", "Estimate the probability that each property holds");
  verify->add_option("model", cfg.model_path, "Model file (.mdm)")->required();
  verify->add_option("properties", cfg.prop_path, "Property file (.itl); same as --prop");
  verify->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mdm::kExitOk : mdm::kExitUsage;
  }

  if (*seed_opt) cfg.seed = seed;
  if (*steps_opt) cfg.steps_per_period = steps;
  if (!parse_assignments(env_set, "--env-set", cfg.env_set) ||
      !parse_assignments(env_step, "--env-step", cfg.env_step) || !parse_assignments(init, "--init", cfg.init)) {
    return mdm::kExitUsage;
  }

  if (*validate) return mdm::cmd_validate(cfg.model_path, std::cout, std::cerr);
  if (*simulate) return mdm::cmd_simulate(cfg, std::cout, std::cerr);
  return mdm::cmd_verify(cfg, std::cout, std::cerr);
}
