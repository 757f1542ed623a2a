#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecotune/backend.hpp"
#include "ecotune/data.hpp"
#include "ecotune/space.hpp"

namespace ecotune {

/// A checker or the checker subprocess failed; an operational error, never
/// a zero score.
class CheckerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// External scoring command: gets {"example": {...}, "response": "..."} on
/// stdin, prints one real number in [0, 1]. Nonzero exit, timeout or
/// unparsable output is a CheckerError.
struct CheckerCommand {
  std::string path;
  std::vector<std::string> args;
  double timeout_seconds = 30.0;
};

double run_checker_command(const CheckerCommand& cmd, const Example& example,
                           const std::string& response);

/// Rule for pulling the final answer out of a response: first capture
/// group of `regex`, taken from the last (or first) match.
struct ExtractionRule {
  std::string regex;
  bool use_last_match = true;

  std::optional<std::string> extract(const std::string& response) const;
};

enum class UtilityMode { BestOf, MajorityVote, RerankedTop };

/// What "utility" means for a run: the scoring mode, the checker that
/// scores a single response, and the answer-extraction rule for voting.
struct UtilityBinding {
  UtilityMode mode = UtilityMode::BestOf;
  // Built-in checker: extracted answer must equal the example's truth
  // field (whitespace-normalized). A configured command overrides it.
  std::optional<CheckerCommand> checker_command;
  std::string truth_field = "answer";
  ExtractionRule extraction{R"(ANSWER\[([^\]]*)\])", true};

  bool logprobs_required() const { return mode == UtilityMode::RerankedTop; }
};

/// One response as the utility layer sees it.
struct ScoredResponse {
  std::string text;
  std::optional<double> mean_logprob;
};

using CheckerFn =
    std::function<double(const Example&, const std::string& response)>;

// Best utility score among the responses.
double utility_best_of(const std::vector<ScoredResponse>& responses,
                       const Example& example, const CheckerFn& checker);

struct MajorityVoteResult {
  int score = 0;            // 1 iff the modal answer is equivalent to truth
  bool extracted_any = false;  // diagnostic: false when no response parsed
};

using EquivalenceFn =
    std::function<bool(const Example&, const std::string& answer)>;

// Modal extracted answer vs ground truth; vote ties go to the answer that
// was extracted earliest.
MajorityVoteResult utility_majority_vote(
    const std::vector<ScoredResponse>& responses, const Example& example,
    const ExtractionRule& extraction, const EquivalenceFn& equivalent);

// Index of the response with the highest mean logprob (ties: first).
// Throws std::invalid_argument if any logprob is missing.
std::size_t rerank_top(const std::vector<ScoredResponse>& responses);

// Collapses runs of whitespace and trims; the default answer equivalence.
std::string normalize_answer(const std::string& text);

/// Signature the evaluators score responses with. The configuration is
/// passed through so synthetic utility surfaces can depend on it.
using UtilityFn = std::function<double(
    const Configuration&, const Example&, const std::vector<ScoredResponse>&)>;

UtilityFn make_utility(const UtilityBinding& binding);

/// Token accounting against the total optimization budget B.o.
class CostLedger {
 public:
  explicit CostLedger(std::int64_t optimization_budget)
      : budget_(optimization_budget) {}

  // Adds usage; returns true when the running total has reached B.o.
  bool charge(std::int64_t tokens);
  bool charge(const TokenUsage& usage) { return charge(usage.total()); }

  std::int64_t total() const;
  std::int64_t budget() const { return budget_; }
  bool exhausted() const;

 private:
  mutable std::mutex mutex_;
  std::int64_t budget_;
  std::int64_t total_ = 0;
};

}  // namespace ecotune
