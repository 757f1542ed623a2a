#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "ecotune/backend.hpp"

namespace ecotune {

/// Per-model knobs of the mock generator.
///
/// Output length of response j is drawn deterministically in
/// [1, max_tokens] from a seed that excludes n and max_tokens, so total
/// usage is non-decreasing in both (the cost-monotonicity the pruning
/// registry assumes holds by construction, not just in expectation).
/// `fixed_output_tokens` pins the draw to min(fixed, max_tokens) for
/// constant-cost profiles.
struct MockModelParams {
  std::int64_t fixed_output_tokens = 0;  // 0 = shaped random length
  double length_shape = 1.0;             // >1 skews short, <1 skews long
  // Success-probability surface p(temperature_or_top_p, max_tokens).
  double quality_base = 0.3;
  double quality_temperature_weight = 0.3;
  double quality_max_tokens_weight = 0.1;
  std::string correct_answer = "OK";  // emitted inside ANSWER[...] on success
};

struct MockProfile {
  std::uint64_t seed = 0;
  MockModelParams default_params;
  std::map<std::string, MockModelParams> models;

  const MockModelParams& for_model(const std::string& model) const {
    const auto it = models.find(model);
    return it == models.end() ? default_params : it->second;
  }

  static MockProfile from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Deterministic stand-in for an LLM service.
///
/// Response j of a given (model, prompt) is a pure function of the profile
/// and j, so requesting a window of n responses at offset n' returns
/// exactly responses [n', n'+n) of the infinite per-prompt stream — the
/// identity the evaluator's incremental requests rely on. Stop sequences
/// truncate the text at the first occurrence and shorten the charged
/// usage accordingly. best_of > 1 generates that many candidates, charges
/// them all, and returns only the one with the highest mean logprob.
class MockBackend : public CompletionBackend {
 public:
  explicit MockBackend(MockProfile profile) : profile_(std::move(profile)) {}

  ResponseSet complete(const CompletionRequest& request) override;
  std::string identity() const override;

  const MockProfile& profile() const { return profile_; }
  // Lifetime usage across all requests; the token-conservation oracle.
  std::int64_t total_tokens() const { return total_tokens_.load(); }
  std::int64_t request_count() const { return request_count_.load(); }

 private:
  MockProfile profile_;
  std::atomic<std::int64_t> total_tokens_{0};
  std::atomic<std::int64_t> request_count_{0};
};

}  // namespace ecotune
