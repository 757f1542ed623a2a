#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ecotune/pruning.hpp"
#include "ecotune/space.hpp"

namespace ecotune {

struct SearcherParams {
  double step_init = 0.5;
  double step_min = 1.0 / 64.0;  // a thread below this is converged
  double exploration = 0.5;      // UCB exploration constant
  int dedup_retries = 16;        // resamples before giving up on uniqueness
};

/// One local-search thread walking from a promising starting point.
struct LocalThread {
  Configuration incumbent;
  double incumbent_utility = 0.0;
  double step = 0.5;
  int consecutive_failures = 0;
  std::int64_t created_at_trial = 0;
  std::int64_t trials = 0;  // reports attributed to this thread
};

/// Proposes configurations by blending a global sampler with prioritized
/// local-search threads. Valid global results that beat every live
/// incumbent start a new thread; threads tighten their step after
/// 2 x (searchable dimensions) consecutive non-improvements and retire
/// once the step drops below step_min. Thread-vs-global selection is a
/// UCB score over incumbent utilities; ties go to the global sampler.
///
/// Single-writer: propose() and report() alternate on one logical thread
/// of control; the searcher never performs I/O.
class Searcher {
 public:
  static constexpr int kGlobalSource = -1;

  Searcher(SearchSpace space, SearcherParams params, std::uint64_t seed);

  struct Proposal {
    Configuration config;
    int source = kGlobalSource;  // thread index, or kGlobalSource
    // True when every resample still collided with an evaluated
    // configuration; the driver uses a run of these to conclude a finite
    // space is exhausted.
    bool duplicate = false;
  };
  Proposal propose();

  // Feeds a finished trial back. The configuration must come from
  // propose() or an external source (treated as global). Throws
  // std::invalid_argument when the result is invalid but carries a
  // nonzero utility.
  void report(const Configuration& config, const TrialResult& result);

  struct Selection {
    bool global = true;
    std::size_t thread_index = 0;
  };
  // Deterministic: argmax of the UCB scores, ties toward global, then
  // lower thread index.
  Selection prioritize() const;

  struct BestTrial {
    Configuration config;
    TrialResult result;
    std::size_t trial_index = 0;
  };
  // The valid trial with maximal utility; ties broken by lower average
  // cost, then earlier trial. Nullopt when no valid trial was reported.
  std::optional<BestTrial> best() const;

  struct HistoryEntry {
    Configuration config;
    TrialResult result;
    int source = kGlobalSource;
  };
  const std::vector<HistoryEntry>& history() const { return history_; }
  const std::vector<LocalThread>& threads() const { return threads_; }
  std::int64_t trial_count() const { return trial_counter_; }

  bool converged(const LocalThread& t) const {
    return t.step < params_.step_min;
  }

 private:
  bool seen(const Configuration& config) const;
  double ucb_bonus(std::int64_t trials_on_arm) const;

  SearchSpace space_;
  SearcherParams params_;
  std::uint64_t seed_;
  int dimensions_;  // non-constant dimensions of the space
  std::uint64_t attempt_counter_ = 0;
  std::int64_t trial_counter_ = 0;
  std::int64_t global_trials_ = 0;
  double global_best_utility_ = 0.0;
  std::vector<LocalThread> threads_;
  std::vector<HistoryEntry> history_;
  std::unordered_map<std::string, std::size_t> evaluated_;  // key -> trial
  std::unordered_map<std::string, int> pending_sources_;    // key -> source
};

}  // namespace ecotune
