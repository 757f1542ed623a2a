#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecotune/backend.hpp"
#include "ecotune/data.hpp"
#include "ecotune/metrics.hpp"
#include "ecotune/space.hpp"

namespace ecotune {

/// Validity observations pooled per (model, prompt template, stop list).
/// Entries are (response count, max_tokens) pairs recorded at the moment a
/// bound decision fired; the cost-monotonicity assumption lets later
/// trials of the same group reuse them.
class ValidityRegistry {
 public:
  struct Entry {
    std::int64_t n = 0;
    std::int64_t max_tokens = 0;
  };

  // Largest response count known valid at x's max_tokens or above;
  // defaults to 1 when nothing matches.
  std::int64_t max_valid_n(const Configuration& x) const;
  // Smallest response count known invalid at x's max_tokens or below;
  // nullopt means +infinity.
  std::optional<std::int64_t> min_invalid_n(const Configuration& x) const;

  void record_valid(const Configuration& x, std::int64_t n);
  void record_invalid(const Configuration& x, std::int64_t n);

  static std::string key_of(const Configuration& x);

  const std::vector<Entry>& valid_entries(const std::string& key) const;
  const std::vector<Entry>& invalid_entries(const std::string& key) const;

 private:
  struct Group {
    std::vector<Entry> valid;
    std::vector<Entry> invalid;
  };
  std::map<std::string, Group> groups_;
};

// The subset-size factor of the Hoeffding-Serfling half-width for a prefix
// of k examples out of d (sampling without replacement):
//   (1 - k/d)(1 + 1/k)  when 2k > d,  1 - (k-1)/d  otherwise.
// Strictly decreasing in k, 1 at k=1, 0 at k=d.
double rho(std::int64_t k, std::int64_t d);

struct PreCheckResult {
  bool prune = false;
  std::int64_t start_n = 1;  // response count the evaluation starts from
};

// Registry-based screening before any request is sent. Checks the
// expected-valid case before the expected-invalid one, so a trial caught
// between contradictory observations still gets evaluated.
PreCheckResult pre_check(const Configuration& x, const ValidityRegistry& reg);

enum class PruneStage { None, PreCheck, Bound };

/// Outcome of evaluating one configuration over the tuning set.
struct TrialResult {
  bool valid = false;
  double utility = 0.0;    // U_x(D); 0 when invalid
  double avg_cost = 0.0;   // C_x(D), or the prefix estimate at the prune point
  std::int64_t tokens_spent = 0;
  std::int64_t examples_touched = 0;
  PruneStage prune_stage = PruneStage::None;
  std::int64_t prune_n = 0;  // (n, k) where the upper bound fired
  std::int64_t prune_k = 0;
  // Registry updates made during this trial, in order; resume rebuilds the
  // registry from these.
  std::vector<std::int64_t> registry_valid_ns;
  std::optional<std::int64_t> registry_invalid_n;
};

/// A backend failure that outlived its retries. The trial is abandoned as
/// an operational error -- not recorded as invalid -- but the tokens it
/// already consumed still count against the optimization budget.
class TrialAbort : public std::runtime_error {
 public:
  TrialAbort(const std::string& message, std::int64_t tokens_spent)
      : std::runtime_error(message), tokens_spent_(tokens_spent) {}
  std::int64_t tokens_spent() const { return tokens_spent_; }

 private:
  std::int64_t tokens_spent_;
};

struct EvaluationSettings {
  double inference_budget = 0.0;  // B.i, tokens per example
  double bound_width = 0.1;       // multiplier on sqrt(rho/k)
  int parallelism = 1;            // concurrent requests within one batch
  bool logprobs_wanted = false;
  // The pruned evaluator consumes examples in a per-trial shuffled order so
  // prefix subsets are not adversarial; seeded per trial for replay.
  bool shuffle = true;
  std::uint64_t shuffle_seed = 0;
};

// Requests x.n responses for every example in one pass; valid iff the
// average per-example cost is within the inference budget (inclusive).
TrialResult evaluate_simple(const Configuration& x, const TuningSet& data,
                            const EvaluationSettings& settings,
                            CompletionBackend& backend,
                            const UtilityFn& utility);

// The pruning evaluator: registry pre-check, then response counts double
// from the registry's start point while data subsets double inside, with
// the Hoeffding-Serfling bounds deciding early invalidity or data
// skipping. Responses fetched for smaller counts are reused, so no example
// is ever asked for more than x.n (or x.best_of) responses in total.
TrialResult evaluate_pruned(const Configuration& x, const TuningSet& data,
                            const EvaluationSettings& settings,
                            ValidityRegistry& registry,
                            CompletionBackend& backend,
                            const UtilityFn& utility);

}  // namespace ecotune
