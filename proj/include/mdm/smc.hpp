#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mdm/environment.hpp"
#include "mdm/error.hpp"
#include "mdm/itl.hpp"
#include "mdm/semantics.hpp"

namespace mdm {

/// Traces needed so that the estimate is within ε of the true probability
/// with confidence 1 - δ: ceil(4 ln(1/δ) / ε²), at least 1.
inline std::uint64_t required_samples(double delta, double epsilon) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  const double n = std::ceil(4.0 * std::log(1.0 / delta) / (epsilon * epsilon));
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(n));
}

struct SmcParams {
  double delta = 0.01;
  double epsilon = 0.05;
  std::uint64_t periods = 100;  // B
  std::uint64_t seed = 0;
  unsigned workers = 1;  // 0 picks the hardware thread count
  StepBudget steps_per_period = kUnbounded;

  void check() const {
    (void)required_samples(delta, epsilon);
    if (periods < 1) throw std::invalid_argument("period bound must be at least 1");
  }
};

struct VerificationReport {
  std::string property;
  std::uint64_t N = 0;
  std::uint64_t a = 0;
  double p = 0.0;
  double delta = 0.0;
  double epsilon = 0.0;
  std::uint64_t B = 0;
  std::uint64_t seed = 0;
  double elapsed_s = 0.0;
  std::vector<std::uint8_t> verdicts;  // 1 where trace i satisfied the property
};

/// A sampled trace failed to simulate; `index` is the lowest failing trace.
class TraceError : public Error {
 public:
  TraceError(std::uint64_t index, std::uint64_t seed, const std::string& message)
      : Error("trace " + std::to_string(index) + " (seed " + std::to_string(seed) + "): " + message),
        index_(index),
        seed_(seed) {}

  std::uint64_t index() const noexcept { return index_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t index_;
  std::uint64_t seed_;
};

/// Trace number `index` of a run seeded with `master`: initial state and
/// environment both draw from substream_seed(master, index).
inline Trace sample_trace(const std::shared_ptr<const CompiledModel>& model, const InitSpec& init,
                          EnvironmentHook& env, std::uint64_t master, std::uint64_t index, std::uint64_t periods,
                          StepBudget budget = kUnbounded) {
  const std::uint64_t seed = substream_seed(master, index);
  Rng rng(seed);
  const Valuation sigma0 = random_initial_state(model->def(), init, rng);
  env.reset(seed);
  return run(model, sigma0, env, periods, budget);
}

/// Monte-Carlo estimate for several properties over one shared set of traces.
///
/// Trace i depends only on (seed, i), so reports are identical for any
/// worker count. A failing simulation aborts the estimate with a TraceError
/// for the lowest failing index.
inline std::vector<VerificationReport> estimate_many(const std::shared_ptr<const CompiledModel>& model,
                                                     const std::vector<Property>& props, const SmcParams& params,
                                                     const EnvironmentHook& env, const InitSpec& init) {
  params.check();
  init.check_covers(model->def());
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t N = required_samples(params.delta, params.epsilon);
  const std::size_t P = props.size();

  // Compile once up front so unknown variables surface before any simulation.
  for (const auto& p : props) FormulaChecker(p.formula, model->schema());

  std::vector<std::uint8_t> verdicts(N * P, 0);
  std::atomic<std::uint64_t> next{0};
  std::atomic<std::uint64_t> first_failure{std::numeric_limits<std::uint64_t>::max()};
  std::mutex failure_mutex;
  std::string failure_message;

  auto worker = [&]() {
    auto hook = env.clone();
    std::vector<FormulaChecker> checkers;
    for (const auto& p : props) checkers.emplace_back(p.formula, model->schema());
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= N || i > first_failure.load()) return;
      try {
        const Trace trace = sample_trace(model, init, *hook, params.seed, i, params.periods, params.steps_per_period);
        for (std::size_t p = 0; p < P; ++p) verdicts[i * P + p] = checkers[p].check(trace) ? 1 : 0;
      } catch (const Error& e) {
        std::lock_guard lock(failure_mutex);
        if (i < first_failure.load()) {
          first_failure.store(i);
          failure_message = e.what();
        }
      }
    }
  };

  unsigned workers = params.workers ? params.workers : std::max(1U, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, N));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const std::uint64_t failed = first_failure.load();
  if (failed != std::numeric_limits<std::uint64_t>::max()) {
    throw TraceError(failed, substream_seed(params.seed, failed), failure_message);
  }

  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::vector<VerificationReport> out;
  for (std::size_t p = 0; p < P; ++p) {
    VerificationReport r;
    r.property = props[p].name;
    r.N = N;
    r.delta = params.delta;
    r.epsilon = params.epsilon;
    r.B = params.periods;
    r.seed = params.seed;
    r.elapsed_s = elapsed;
    r.verdicts.resize(N);
    for (std::uint64_t i = 0; i < N; ++i) {
      r.verdicts[i] = verdicts[i * P + p];
      r.a += r.verdicts[i];
    }
    r.p = static_cast<double>(r.a) / static_cast<double>(N);
    out.push_back(std::move(r));
  }
  return out;
}

inline VerificationReport estimate(const std::shared_ptr<const CompiledModel>& model, const Property& prop,
                                   const SmcParams& params, const EnvironmentHook& env, const InitSpec& init) {
  return estimate_many(model, {prop}, params, env, init).front();
}

inline VerificationReport estimate(const ModelDef& md, const Formula& phi, const SmcParams& params,
                                   const EnvironmentHook& env, const InitSpec& init) {
  return estimate(CompiledModel::make(md), Property{"phi", phi, {}}, params, env, init);
}

/// `trace,<property>...` with one 0/1 row per trace.
inline void write_verdicts_csv(std::ostream& out, const std::vector<VerificationReport>& reports) {
  out << "trace";
  for (const auto& r : reports) out << ',' << r.property;
  out << '\n';
  const std::uint64_t n = reports.empty() ? 0 : reports.front().N;
  for (std::uint64_t i = 0; i < n; ++i) {
    out << i;
    for (const auto& r : reports) out << ',' << static_cast<int>(r.verdicts[i]);
    out << '\n';
  }
}

}  // namespace mdm
