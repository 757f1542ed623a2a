#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecotune/space.hpp"

namespace ecotune {

/// One call against a completion service. `n` is the count requested in
/// THIS call (the evaluator's n - n'), not the configuration's n;
/// `response_offset` is how many responses earlier calls of the same trial
/// already fetched for this prompt. The offset keys caching and the mock's
/// deterministic windows; it is never sent over the wire.
struct CompletionRequest {
  std::string model;
  std::string rendered_prompt;
  std::int64_t max_tokens = 16;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::int64_t n = 1;
  std::int64_t response_offset = 0;
  std::vector<std::string> stop;
  double presence_penalty = 0.0;
  double frequency_penalty = 0.0;
  std::int64_t best_of = 1;
  bool logprobs_wanted = false;

  bool operator==(const CompletionRequest&) const = default;

  static CompletionRequest from_config(const Configuration& config,
                                       std::string rendered_prompt);
};

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t total() const { return input_tokens + output_tokens; }
};

struct ResponseSet {
  std::vector<std::string> texts;
  // Mean log probability per token of each response; empty unless the
  // request asked for logprobs.
  std::vector<double> mean_logprobs;
  TokenUsage usage;

  bool operator==(const ResponseSet&) const = default;
};

/// Thrown when a request cannot be satisfied. `retryable` distinguishes
/// rate-limit/transport conditions from hard service errors; the retry
/// policy lives inside the backend, so by the time this escapes into the
/// evaluator the retries are already spent.
class BackendError : public std::runtime_error {
 public:
  BackendError(std::string message, bool retryable, int status = 0)
      : std::runtime_error(std::move(message)),
        retryable_(retryable),
        status_(status) {}
  bool retryable() const { return retryable_; }
  int status() const { return status_; }

 private:
  bool retryable_;
  int status_;
};

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual ResponseSet complete(const CompletionRequest& request) = 0;
  // Stable identifier mixed into cache keys so responses from different
  // backends never collide.
  virtual std::string identity() const = 0;
};

// Exact placeholder substitution: "{field}" is replaced by the example
// field of that name, "{{"/"}}" unescape to literal braces, nothing is
// trimmed. Throws std::invalid_argument naming the first missing field.
std::string render_prompt(const std::string& tmpl,
                          const std::map<std::string, std::string>& fields);

// Whitespace token count; the unit the mock charges input in.
std::int64_t whitespace_token_count(const std::string& text);

}  // namespace ecotune
