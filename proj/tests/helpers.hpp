#pragma once

#include <map>
#include <string>
#include <vector>

#include "ecotune/backend.hpp"
#include "ecotune/data.hpp"
#include "ecotune/mock_backend.hpp"
#include "ecotune/random.hpp"
#include "ecotune/space.hpp"

namespace ecotune::test {

inline TuningSet make_data(std::size_t count,
                           const std::string& answer = "OK") {
  TuningSet data;
  for (std::size_t i = 0; i < count; ++i) {
    Example ex;
    ex.id = std::to_string(i + 1);
    ex.fields["prompt"] = "q" + std::to_string(i);
    ex.fields["answer"] = answer;
    data.examples.push_back(std::move(ex));
  }
  return data;
}

// Profile whose every response costs exactly `tokens_per_response` output
// tokens; prompts in make_data() are single tokens, so a request of m
// responses costs 1 + m * tokens_per_response.
inline MockProfile constant_cost_profile(std::int64_t tokens_per_response,
                                         std::uint64_t seed = 0) {
  MockProfile p;
  p.seed = seed;
  p.default_params.fixed_output_tokens = tokens_per_response;
  p.default_params.quality_base = 0.6;
  p.default_params.quality_temperature_weight = 0.2;
  p.default_params.quality_max_tokens_weight = 0.0;
  return p;
}

// A small space whose every dimension is constant except the ones a test
// overrides.
inline std::map<std::string, Domain> base_space_params(
    const std::string& model = "mock-model") {
  std::map<std::string, Domain> p;
  p.emplace("model", Domain::constant(model));
  p.emplace("prompt", Domain::constant(std::string("{prompt}")));
  p.emplace("max_tokens", Domain::constant(std::int64_t{400}));
  p.emplace("temperature", Domain::constant(0.5));
  p.emplace("n", Domain::constant(std::int64_t{1}));
  return p;
}

// Randomized space generator for closure/property tests.
inline SearchSpace random_space(Rng& rng) {
  std::map<std::string, Domain> p;
  p.emplace("model", unit_real(rng) < 0.5
                         ? Domain::constant(std::string("m0"))
                         : Domain::choice({std::string("m0"), std::string("m1"),
                                           std::string("m2")}));
  p.emplace("prompt", Domain::constant(std::string("{prompt}")));

  const auto mt_lo = uniform_int(rng, 1, 200);
  p.emplace("max_tokens",
            unit_real(rng) < 0.5
                ? Domain::lograndint(mt_lo, mt_lo + uniform_int(rng, 0, 2000))
                : Domain::randint(mt_lo, mt_lo + uniform_int(rng, 0, 2000)));

  const double roll = unit_real(rng);
  if (roll < 0.4) {
    p.emplace("temperature_or_top_p",
              Domain::one_of({{"temperature", Domain::uniform(0.0, 1.0)},
                              {"top_p", Domain::uniform(0.0, 1.0)}}));
  } else if (roll < 0.7) {
    const double lo = unit_real(rng) * 0.5;
    p.emplace("temperature", Domain::uniform(lo, lo + unit_real(rng) * 0.5));
  } else {
    p.emplace("top_p", Domain::constant(unit_real(rng)));
  }

  const auto n_lo = uniform_int(rng, 1, 8);
  p.emplace("n", unit_real(rng) < 0.7
                     ? Domain::randint(n_lo, n_lo + uniform_int(rng, 0, 50))
                     : Domain::constant(n_lo));
  if (unit_real(rng) < 0.3)
    p.emplace("presence_penalty", Domain::uniform(-2.0, 2.0));
  if (unit_real(rng) < 0.2)
    p.emplace("stop", Domain::constant(std::vector<std::string>{"###"}));
  return SearchSpace(std::move(p));
}

inline MockProfile random_profile(Rng& rng) {
  MockProfile p;
  p.seed = rng();
  p.default_params.fixed_output_tokens =
      unit_real(rng) < 0.3 ? uniform_int(rng, 1, 500) : 0;
  p.default_params.length_shape = 0.25 + unit_real(rng) * 3.0;
  p.default_params.quality_base = unit_real(rng);
  p.default_params.quality_temperature_weight = unit_real(rng) - 0.3;
  p.default_params.quality_max_tokens_weight = 0.3 * (unit_real(rng) - 0.5);
  if (unit_real(rng) < 0.3) {
    MockModelParams alt = p.default_params;
    alt.length_shape = 0.25 + unit_real(rng) * 3.0;
    p.models["m1"] = alt;
  }
  return p;
}

/// Wraps a backend and counts requests per (prompt, window) so tests can
/// assert the evaluator's request discipline.
class CountingBackend : public CompletionBackend {
 public:
  explicit CountingBackend(CompletionBackend& inner) : inner_(inner) {}

  ResponseSet complete(const CompletionRequest& request) override {
    ++requests_;
    const std::int64_t count =
        request.best_of > 1 ? request.best_of : request.n;
    auto& windows = windows_[request.rendered_prompt];
    windows.push_back({request.response_offset, count});
    responses_requested_[request.rendered_prompt] += count;
    return inner_.complete(request);
  }
  std::string identity() const override { return inner_.identity(); }

  std::int64_t requests() const { return requests_; }
  std::int64_t responses_requested(const std::string& prompt) const {
    const auto it = responses_requested_.find(prompt);
    return it == responses_requested_.end() ? 0 : it->second;
  }
  const std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>>&
  windows() const {
    return windows_;
  }
  std::int64_t max_responses_requested() const {
    std::int64_t worst = 0;
    for (const auto& [prompt, total] : responses_requested_)
      worst = std::max(worst, total);
    return worst;
  }

 private:
  CompletionBackend& inner_;
  std::int64_t requests_ = 0;
  std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>>
      windows_;
  std::map<std::string, std::int64_t> responses_requested_;
};

/// Fails every request after the first `allowed` with a retryable error.
class FlakyBackend : public CompletionBackend {
 public:
  FlakyBackend(CompletionBackend& inner, std::int64_t allowed)
      : inner_(inner), allowed_(allowed) {}

  ResponseSet complete(const CompletionRequest& request) override {
    if (served_ >= allowed_)
      throw BackendError("injected outage", /*retryable=*/true);
    ++served_;
    return inner_.complete(request);
  }
  std::string identity() const override { return inner_.identity(); }

 private:
  CompletionBackend& inner_;
  std::int64_t allowed_;
  std::int64_t served_ = 0;
};

}  // namespace ecotune::test
