#include "ecotune/driver.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "ecotune/data.hpp"
#include "ecotune/random.hpp"
#include "ecotune/response_cache.hpp"

namespace ecotune {

namespace {

// Consecutive already-seen proposals after which a finite space is
// considered exhausted.
constexpr int kDuplicateStop = 8;

std::unique_ptr<CompletionBackend> make_backend(const RunSpec& spec) {
  std::unique_ptr<CompletionBackend> backend;
  if (spec.backend_kind == BackendKind::Mock)
    backend = std::make_unique<MockBackend>(spec.mock_profile);
  else
    backend = std::make_unique<HttpBackend>(spec.http);
  if (spec.cache_dir)
    backend = std::make_unique<CachedBackend>(
        std::move(backend), std::make_shared<ResponseCache>(*spec.cache_dir));
  return backend;
}

EvaluationSettings settings_for_trial(const RunSpec& spec,
                                      std::int64_t trial_index) {
  EvaluationSettings s;
  s.inference_budget = spec.inference_budget;
  s.bound_width = spec.bound_width;
  s.parallelism = spec.parallelism;
  s.logprobs_wanted = spec.utility.logprobs_required();
  s.shuffle = true;
  s.shuffle_seed = spec.seed ^ mix64(static_cast<std::uint64_t>(trial_index));
  return s;
}

void check_meta(const ordered_json& meta, const RunSpec& spec,
                std::size_t data_size) {
  const ordered_json expected = log_meta_json(spec, data_size);
  std::vector<std::string> diffs;
  for (const auto& [key, value] : expected.items()) {
    if (!meta.contains(key) || meta[key] != value) {
      diffs.push_back("  " + key + ": log=" +
                      (meta.contains(key) ? meta[key].dump() : "<absent>") +
                      " spec=" + value.dump());
    }
  }
  if (!diffs.empty()) {
    std::string msg = "trial log does not match the run spec:";
    for (const auto& d : diffs) msg += "\n" + d;
    throw ResumeMismatch(msg);
  }
}

void apply_registry_updates(ValidityRegistry& registry,
                            const Configuration& config,
                            const TrialResult& result) {
  for (const std::int64_t n : result.registry_valid_ns)
    registry.record_valid(config, n);
  if (result.registry_invalid_n)
    registry.record_invalid(config, *result.registry_invalid_n);
}

OptimizationReport run_loop(const RunSpec& spec, const std::string& log_path,
                            const std::vector<TrialLogRecord>& replay) {
  const TuningSet data = load_tuning_set(spec.data_path);
  {
    const auto violations = validate_space(spec.space, data.field_names());
    if (!violations.empty()) {
      std::ostringstream msg;
      msg << "search space is inconsistent with the tuning data:";
      for (const auto& v : violations) msg << "\n  - " << v;
      throw SpecError(msg.str());
    }
  }
  const auto backend = make_backend(spec);
  const UtilityFn utility = make_utility(spec.utility);
  Searcher searcher(spec.space, spec.searcher, spec.seed);
  ValidityRegistry registry;
  CostLedger ledger(spec.optimization_budget);

  std::ofstream log;
  if (replay.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log) throw SpecError("cannot open trial log for writing: " + log_path);
    log << log_meta_json(spec, data.size()).dump() << "\n";
    log.flush();
  } else {
    log.open(log_path, std::ios::app);
    if (!log) throw SpecError("cannot open trial log for appending: " + log_path);
  }

  OptimizationReport report;
  std::size_t replay_next = 0;
  std::int64_t trial = 0;
  int consecutive_duplicates = 0;
  report.stop_reason = "budget_exhausted";

  while (true) {
    const bool replaying = replay_next < replay.size();
    if (!replaying) {
      if (ledger.exhausted()) {
        report.stop_reason = "budget_exhausted";
        break;
      }
      if (spec.max_trials > 0 && trial >= spec.max_trials) {
        report.stop_reason = "max_trials";
        break;
      }
      if (consecutive_duplicates >= kDuplicateStop) {
        report.stop_reason = "space_exhausted";
        break;
      }
    }

    const Searcher::Proposal proposal = searcher.propose();
    if (proposal.duplicate) {
      ++consecutive_duplicates;
      if (replaying && consecutive_duplicates >= kDuplicateStop)
        throw ResumeMismatch(
            "log contains trials the searcher no longer proposes; was the "
            "seed or space changed?");
      continue;
    }
    consecutive_duplicates = 0;

    if (replaying) {
      const TrialLogRecord& rec = replay[replay_next++];
      if (!(rec.config == proposal.config)) {
        throw ResumeMismatch(
            "replayed proposal differs from the log at trial " +
            std::to_string(rec.trial) + ":\n  log:      " +
            config_key(rec.config) + "\n  proposed: " +
            config_key(proposal.config));
      }
      apply_registry_updates(registry, rec.config, rec.result);
      ledger.charge(rec.result.tokens_spent);
      searcher.report(rec.config, rec.result);
      if (rec.result.prune_stage == PruneStage::PreCheck)
        ++report.pre_check_prunes;
      else if (rec.result.prune_stage == PruneStage::Bound)
        ++report.bound_prunes[{rec.result.prune_n, rec.result.prune_k}];
      ++trial;
      continue;
    }

    const auto started = std::chrono::steady_clock::now();
    TrialResult result;
    try {
      if (spec.use_pruned_evaluator)
        result = evaluate_pruned(proposal.config, data,
                                 settings_for_trial(spec, trial), registry,
                                 *backend, utility);
      else
        result = evaluate_simple(proposal.config, data,
                                 settings_for_trial(spec, trial), *backend,
                                 utility);
    } catch (const TrialAbort& abort) {
      // The aborted trial's spend still counts against B.o; the log keeps
      // only completed trials and stays resumable.
      ledger.charge(abort.tokens_spent());
      throw BackendFailure(std::string("backend failure at trial ") +
                           std::to_string(trial) + ": " + abort.what());
    }
    const auto finished = std::chrono::steady_clock::now();

    ledger.charge(result.tokens_spent);
    searcher.report(proposal.config, result);

    TrialLogRecord rec;
    rec.trial = trial;
    rec.config = proposal.config;
    rec.result = result;
    rec.registry_key = ValidityRegistry::key_of(proposal.config);
    rec.cumulative_tokens = ledger.total();
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(finished - started).count();
    log << record_to_json(rec).dump() << "\n";
    log.flush();

    if (result.prune_stage == PruneStage::PreCheck)
      ++report.pre_check_prunes;
    else if (result.prune_stage == PruneStage::Bound)
      ++report.bound_prunes[{result.prune_n, result.prune_k}];
    ++trial;
  }

  report.trials = trial;
  report.tokens_spent = ledger.total();
  if (const auto best = searcher.best()) {
    report.found_valid = true;
    report.best_config = best->config;
    report.best_result = best->result;
    report.best_trial = static_cast<std::int64_t>(best->trial_index);
  } else {
    // Diagnostic: the cheapest measured invalid trial shows how far the
    // budget was from admitting anything.
    for (const auto& entry : searcher.history()) {
      if (entry.result.valid) continue;
      if (entry.result.prune_stage == PruneStage::PreCheck &&
          report.cheapest_invalid)
        continue;
      if (!report.cheapest_invalid ||
          (entry.result.avg_cost > 0.0 &&
           (report.cheapest_invalid->second.avg_cost == 0.0 ||
            entry.result.avg_cost < report.cheapest_invalid->second.avg_cost)))
        report.cheapest_invalid = {entry.config, entry.result};
    }
  }
  return report;
}

}  // namespace

OptimizationReport run(const RunSpec& spec, const std::string& log_path) {
  return run_loop(spec, log_path, {});
}

OptimizationReport resume(const RunSpec& spec, const std::string& log_path) {
  const TrialLogContents log = read_trial_log(log_path);
  if (!log.has_meta && log.records.empty()) return run(spec, log_path);
  if (!log.has_meta)
    throw ResumeMismatch("trial log has records but no meta line: " + log_path);
  const TuningSet data = load_tuning_set(spec.data_path);
  check_meta(log.meta, spec, data.size());
  return run_loop(spec, log_path, log.records);
}

TrialResult eval_config(const RunSpec& spec, const Configuration& config) {
  const TuningSet data = load_tuning_set(spec.data_path);
  const auto backend = make_backend(spec);
  const UtilityFn utility = make_utility(spec.utility);
  ValidityRegistry registry;
  const EvaluationSettings settings = settings_for_trial(spec, 0);
  if (spec.use_pruned_evaluator)
    return evaluate_pruned(config, data, settings, registry, *backend, utility);
  return evaluate_simple(config, data, settings, *backend, utility);
}

ordered_json OptimizationReport::to_json() const {
  ordered_json j;
  j["found_valid"] = found_valid;
  if (found_valid) {
    j["best"] = {{"trial", best_trial},
                 {"config", config_to_json(best_config)},
                 {"result", trial_result_to_json(best_result)}};
  } else if (cheapest_invalid) {
    j["cheapest_invalid"] = {
        {"config", config_to_json(cheapest_invalid->first)},
        {"result", trial_result_to_json(cheapest_invalid->second)}};
  }
  j["trials"] = trials;
  j["tokens_spent"] = tokens_spent;
  j["stop_reason"] = stop_reason;
  j["pre_check_prunes"] = pre_check_prunes;
  auto stages = ordered_json::array();
  for (const auto& [stage, count] : bound_prunes)
    stages.push_back({{"n", stage.first}, {"k", stage.second}, {"count", count}});
  j["bound_prunes"] = std::move(stages);
  return j;
}

std::string OptimizationReport::to_text() const {
  std::ostringstream out;
  out << "trials: " << trials << "  tokens spent: " << tokens_spent
      << "  stop: " << stop_reason << "\n";
  std::int64_t bound_total = 0;
  for (const auto& [stage, count] : bound_prunes) bound_total += count;
  out << "pruning: " << pre_check_prunes << " pre-check, " << bound_total
      << " bound";
  if (bound_total > 0) {
    out << " (";
    bool first = true;
    for (const auto& [stage, count] : bound_prunes) {
      if (!first) out << ", ";
      first = false;
      out << "n=" << stage.first << ",k=" << stage.second << ":" << count;
    }
    out << ")";
  }
  out << "\n";
  if (found_valid) {
    out << "best: trial " << best_trial << "  utility "
        << best_result.utility << "  avg cost/example "
        << best_result.avg_cost << "\n";
    out << "best config: " << config_to_json(best_config).dump() << "\n";
  } else {
    out << "no valid configuration found";
    if (cheapest_invalid) {
      out << "; cheapest invalid trial averaged "
          << cheapest_invalid->second.avg_cost
          << " tokens/example -- raise budget.inference or shrink the space";
    }
    out << "\n";
  }
  return out.str();
}

LogSummary summarize_log(const std::string& log_path) {
  LogSummary s;
  s.log = read_trial_log(log_path);
  std::int64_t data_size = 0;
  if (s.log.has_meta) data_size = s.log.meta.value("data_size", std::int64_t{0});

  for (std::size_t i = 0; i < s.log.records.size(); ++i) {
    const TrialLogRecord& rec = s.log.records[i];
    s.total_tokens += rec.result.tokens_spent;
    if (rec.result.prune_stage == PruneStage::PreCheck) ++s.pre_check_prunes;
    if (rec.result.prune_stage == PruneStage::Bound) {
      ++s.bound_prunes;
      if (data_size > 0 && rec.result.prune_n > 0) {
        const double full =
            static_cast<double>(data_size) * rec.result.avg_cost *
            static_cast<double>(rec.config.response_count()) /
            static_cast<double>(rec.result.prune_n);
        s.estimated_savings_tokens +=
            full - static_cast<double>(rec.result.tokens_spent);
      }
    }
    if (rec.result.valid) {
      const bool better =
          !s.best_index ||
          rec.result.utility > s.log.records[*s.best_index].result.utility ||
          (rec.result.utility == s.log.records[*s.best_index].result.utility &&
           rec.result.avg_cost < s.log.records[*s.best_index].result.avg_cost);
      if (better) s.best_index = i;
    }
  }
  return s;
}

std::string summary_to_text(const LogSummary& s) {
  std::ostringstream out;
  out << std::left << std::setw(7) << "trial" << std::setw(7) << "valid"
      << std::setw(12) << "utility" << std::setw(14) << "avg_cost"
      << std::setw(12) << "tokens" << "prune\n";
  for (const auto& rec : s.log.records) {
    out << std::left << std::setw(7) << rec.trial << std::setw(7)
        << (rec.result.valid ? "yes" : "no") << std::setw(12)
        << rec.result.utility << std::setw(14) << rec.result.avg_cost
        << std::setw(12) << rec.result.tokens_spent;
    switch (rec.result.prune_stage) {
      case PruneStage::None:
        out << "-";
        break;
      case PruneStage::PreCheck:
        out << "pre_check";
        break;
      case PruneStage::Bound:
        out << "bound(n=" << rec.result.prune_n << ",k=" << rec.result.prune_k
            << ")";
        break;
    }
    out << "\n";
  }
  if (s.best_index) {
    const auto& best = s.log.records[*s.best_index];
    out << "best: trial " << best.trial << "  utility " << best.result.utility
        << "  avg cost/example " << best.result.avg_cost << "\n";
    out << "best config: " << config_to_json(best.config).dump() << "\n";
  } else {
    out << "best: none valid\n";
  }
  out << "tokens spent: " << s.total_tokens << "\n";
  out << "pruning: " << s.pre_check_prunes << " pre-check, " << s.bound_prunes
      << " bound";
  if (s.estimated_savings_tokens > 0.0)
    out << "; estimated " << std::llround(s.estimated_savings_tokens)
        << " tokens saved vs simple evaluation of the pruned trials";
  out << "\n";
  return out.str();
}

}  // namespace ecotune
