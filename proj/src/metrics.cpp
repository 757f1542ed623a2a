#include "ecotune/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <sstream>

namespace ecotune {

std::optional<std::string> ExtractionRule::extract(
    const std::string& response) const {
  const std::regex re(regex);
  std::optional<std::string> found;
  for (auto it = std::sregex_iterator(response.begin(), response.end(), re);
       it != std::sregex_iterator(); ++it) {
    const std::string value = it->size() > 1 ? it->str(1) : it->str(0);
    if (!use_last_match) return value;
    found = value;
  }
  return found;
}

std::string normalize_answer(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (const unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

double utility_best_of(const std::vector<ScoredResponse>& responses,
                       const Example& example, const CheckerFn& checker) {
  if (responses.empty())
    throw std::invalid_argument("utility_best_of needs at least one response");
  double best = 0.0;
  for (const auto& r : responses) best = std::max(best, checker(example, r.text));
  return best;
}

MajorityVoteResult utility_majority_vote(
    const std::vector<ScoredResponse>& responses, const Example& example,
    const ExtractionRule& extraction, const EquivalenceFn& equivalent) {
  struct Tally {
    int votes = 0;
    std::size_t first_seen = 0;
  };
  std::map<std::string, Tally> tallies;
  std::size_t order = 0;
  for (const auto& r : responses) {
    const auto answer = extraction.extract(r.text);
    if (!answer) continue;
    auto [it, inserted] = tallies.emplace(normalize_answer(*answer), Tally{});
    if (inserted) it->second.first_seen = order;
    ++it->second.votes;
    ++order;
  }
  MajorityVoteResult result;
  if (tallies.empty()) return result;  // no extractable answer: score 0
  result.extracted_any = true;

  const auto* modal = &*tallies.begin();
  for (const auto& entry : tallies) {
    if (entry.second.votes > modal->second.votes ||
        (entry.second.votes == modal->second.votes &&
         entry.second.first_seen < modal->second.first_seen))
      modal = &entry;
  }
  result.score = equivalent(example, modal->first) ? 1 : 0;
  return result;
}

std::size_t rerank_top(const std::vector<ScoredResponse>& responses) {
  if (responses.empty())
    throw std::invalid_argument("rerank_top needs at least one response");
  std::size_t best = 0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (!responses[i].mean_logprob)
      throw std::invalid_argument(
          "rerank_top: response " + std::to_string(i) +
          " has no mean logprob; request with logprobs_wanted");
    if (*responses[i].mean_logprob > *responses[best].mean_logprob) best = i;
  }
  return best;
}

namespace {

CheckerFn make_checker(const UtilityBinding& binding) {
  if (binding.checker_command) {
    const CheckerCommand cmd = *binding.checker_command;
    return [cmd](const Example& ex, const std::string& response) {
      return run_checker_command(cmd, ex, response);
    };
  }
  const ExtractionRule extraction = binding.extraction;
  const std::string truth_field = binding.truth_field;
  return [extraction, truth_field](const Example& ex,
                                   const std::string& response) {
    const std::string* truth = ex.field(truth_field);
    if (!truth)
      throw CheckerError("example " + ex.id + " has no field '" + truth_field +
                         "' for the exact-match checker");
    const auto answer = extraction.extract(response);
    if (!answer) return 0.0;
    return normalize_answer(*answer) == normalize_answer(*truth) ? 1.0 : 0.0;
  };
}

}  // namespace

UtilityFn make_utility(const UtilityBinding& binding) {
  const CheckerFn checker = make_checker(binding);
  switch (binding.mode) {
    case UtilityMode::BestOf:
      return [checker](const Configuration&, const Example& ex,
                       const std::vector<ScoredResponse>& responses) {
        return utility_best_of(responses, ex, checker);
      };
    case UtilityMode::MajorityVote: {
      const ExtractionRule extraction = binding.extraction;
      // Equivalence: the built-in normalized string match against the truth
      // field, or the external checker fed the extracted answer.
      EquivalenceFn equivalent;
      if (binding.checker_command) {
        const CheckerCommand cmd = *binding.checker_command;
        equivalent = [cmd](const Example& ex, const std::string& answer) {
          return run_checker_command(cmd, ex, answer) >= 0.5;
        };
      } else {
        const std::string truth_field = binding.truth_field;
        equivalent = [truth_field](const Example& ex, const std::string& answer) {
          const std::string* truth = ex.field(truth_field);
          if (!truth)
            throw CheckerError("example " + ex.id + " has no field '" +
                               truth_field + "' for majority voting");
          return normalize_answer(answer) == normalize_answer(*truth);
        };
      }
      return [extraction, equivalent](const Configuration&, const Example& ex,
                                      const std::vector<ScoredResponse>& rs) {
        return static_cast<double>(
            utility_majority_vote(rs, ex, extraction, equivalent).score);
      };
    }
    case UtilityMode::RerankedTop:
      return [checker](const Configuration&, const Example& ex,
                       const std::vector<ScoredResponse>& responses) {
        return checker(ex, responses[rerank_top(responses)].text);
      };
  }
  throw std::logic_error("unreachable");
}

bool CostLedger::charge(std::int64_t tokens) {
  if (tokens < 0) throw std::invalid_argument("negative token charge");
  const std::lock_guard<std::mutex> lock(mutex_);
  total_ += tokens;
  return total_ >= budget_;
}

std::int64_t CostLedger::total() const {
  const std::lock_guard<std::mutex> lock(mutex_);
  return total_;
}

bool CostLedger::exhausted() const {
  const std::lock_guard<std::mutex> lock(mutex_);
  return total_ >= budget_;
}

}  // namespace ecotune
