#include "ecotune/searcher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ecotune/serialize.hpp"

namespace ecotune {

Searcher::Searcher(SearchSpace space, SearcherParams params, std::uint64_t seed)
    : space_(std::move(space)),
      params_(params),
      seed_(seed),
      dimensions_(space_.non_constant_dimensions()) {}

double Searcher::ucb_bonus(std::int64_t trials_on_arm) const {
  return params_.exploration *
         std::sqrt(std::log(static_cast<double>(trial_counter_) + 1.0) /
                   (static_cast<double>(trials_on_arm) + 1.0));
}

Searcher::Selection Searcher::prioritize() const {
  Selection selected;  // global by default
  double best_score = global_best_utility_ + ucb_bonus(global_trials_);
  for (std::size_t i = 0; i < threads_.size(); ++i) {
    const LocalThread& t = threads_[i];
    if (converged(t)) continue;
    const double score = t.incumbent_utility + ucb_bonus(t.trials);
    // Strictly better only: ties go to global, and among threads to the
    // lower index.
    if (score > best_score) {
      best_score = score;
      selected.global = false;
      selected.thread_index = i;
    }
  }
  return selected;
}

bool Searcher::seen(const Configuration& config) const {
  return evaluated_.count(config_key(config)) > 0;
}

Searcher::Proposal Searcher::propose() {
  Rng rng = make_rng(seed_, attempt_counter_++);
  const Selection sel = prioritize();

  Proposal proposal;
  proposal.source =
      sel.global ? kGlobalSource : static_cast<int>(sel.thread_index);
  for (int attempt = 0; attempt <= params_.dedup_retries; ++attempt) {
    proposal.config =
        sel.global ? sample(space_, rng)
                   : perturb(threads_[sel.thread_index].incumbent, space_,
                             threads_[sel.thread_index].step, rng);
    if (!seen(proposal.config)) {
      proposal.duplicate = false;
      pending_sources_[config_key(proposal.config)] = proposal.source;
      return proposal;
    }
    proposal.duplicate = true;
  }
  pending_sources_[config_key(proposal.config)] = proposal.source;
  return proposal;
}

void Searcher::report(const Configuration& config, const TrialResult& result) {
  if (!result.valid && result.utility != 0.0)
    throw std::invalid_argument(
        "invalid trial must carry zero utility, got " +
        std::to_string(result.utility));

  const std::string key = config_key(config);
  int source = kGlobalSource;
  if (const auto it = pending_sources_.find(key); it != pending_sources_.end()) {
    source = it->second;
    pending_sources_.erase(it);
  }

  const auto trial_index = static_cast<std::size_t>(trial_counter_);
  ++trial_counter_;
  history_.push_back({config, result, source});
  evaluated_.emplace(key, trial_index);

  if (source != kGlobalSource &&
      static_cast<std::size_t>(source) < threads_.size()) {
    LocalThread& t = threads_[static_cast<std::size_t>(source)];
    ++t.trials;
    if (result.valid && result.utility > t.incumbent_utility) {
      t.incumbent = config;
      t.incumbent_utility = result.utility;
      t.consecutive_failures = 0;
    } else {
      ++t.consecutive_failures;
      const int threshold = std::max(1, 2 * dimensions_);
      if (t.consecutive_failures >= threshold) {
        t.step /= 2.0;
        t.consecutive_failures = 0;
      }
    }
    return;
  }

  ++global_trials_;
  if (!result.valid) return;
  global_best_utility_ = std::max(global_best_utility_, result.utility);

  // Spawn a local thread when this global point beats every live
  // incumbent (or no live thread exists).
  bool any_live = false;
  double best_live_utility = 0.0;
  for (const auto& t : threads_) {
    if (converged(t)) continue;
    if (!any_live || t.incumbent_utility > best_live_utility)
      best_live_utility = t.incumbent_utility;
    any_live = true;
  }
  if (!any_live || result.utility > best_live_utility) {
    LocalThread t;
    t.incumbent = config;
    t.incumbent_utility = result.utility;
    t.step = params_.step_init;
    t.created_at_trial = static_cast<std::int64_t>(trial_index);
    threads_.push_back(std::move(t));
  }
}

std::optional<Searcher::BestTrial> Searcher::best() const {
  std::optional<BestTrial> best;
  for (std::size_t i = 0; i < history_.size(); ++i) {
    const HistoryEntry& e = history_[i];
    if (!e.result.valid) continue;
    const bool better =
        !best || e.result.utility > best->result.utility ||
        (e.result.utility == best->result.utility &&
         e.result.avg_cost < best->result.avg_cost);
    if (better) best = BestTrial{e.config, e.result, i};
  }
  return best;
}

}  // namespace ecotune
