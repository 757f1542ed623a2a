#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "ecotune/run_spec.hpp"
#include "ecotune/searcher.hpp"
#include "ecotune/trial_log.hpp"

namespace ecotune {

/// A backend error that survived its retries; the run aborts but the trial
/// log stays resumable (CLI exit code 4).
class BackendFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The trial log does not match the run spec (CLI exit code 2).
class ResumeMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizationReport {
  bool found_valid = false;
  Configuration best_config;
  TrialResult best_result;
  std::int64_t best_trial = 0;
  std::int64_t trials = 0;
  std::int64_t tokens_spent = 0;
  std::int64_t pre_check_prunes = 0;
  // (n, k) stage the upper bound fired at -> count of trials pruned there.
  std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> bound_prunes;
  std::optional<std::pair<Configuration, TrialResult>> cheapest_invalid;
  std::string stop_reason;

  ordered_json to_json() const;
  std::string to_text() const;
};

// The optimization loop: propose, evaluate, charge, report, log -- until
// the optimization budget is exhausted, the space stops producing unique
// configurations, or spec.max_trials is hit. Overwrites log_path.
OptimizationReport run(const RunSpec& spec, const std::string& log_path);

// Replays an existing log through the searcher, ledger and registry
// (without re-requesting anything), then continues as run() and appends to
// the same log. An absent or empty log behaves like a fresh run. Throws
// ResumeMismatch when the log was produced by a different spec or seed.
OptimizationReport resume(const RunSpec& spec, const std::string& log_path);

// One-shot evaluation of a fixed configuration under the spec's budget and
// evaluator (with an empty validity registry).
TrialResult eval_config(const RunSpec& spec, const Configuration& config);

/// Parsed log plus the derived figures the report command prints.
struct LogSummary {
  TrialLogContents log;
  std::optional<std::size_t> best_index;
  std::int64_t total_tokens = 0;
  std::int64_t pre_check_prunes = 0;
  std::int64_t bound_prunes = 0;
  // Tokens a simple evaluator would have spent on the bound-pruned trials,
  // estimated from each trial's observed per-example average at its prune
  // point, minus what was actually spent.
  double estimated_savings_tokens = 0.0;
};

LogSummary summarize_log(const std::string& log_path);
std::string summary_to_text(const LogSummary& summary);

}  // namespace ecotune
