#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "ecotune/backend.hpp"

namespace ecotune {

enum class ModelFamily { Completion, Chat };

struct HttpBackendConfig {
  std::string base_url;  // e.g. "https://api.example.com/v1"
  // Wire format per model; unlisted models default to the completion API.
  std::map<std::string, ModelFamily> model_families;
  std::string api_key_env = "ECOTUNE_API_KEY";
  int max_retries = 3;
  double initial_backoff_seconds = 1.0;  // doubles per retry
  double timeout_seconds = 120.0;
};

/// Client for completion-style HTTP services. Chat-family models receive
/// the rendered prompt as a single user message; completion-family models
/// get it as the prompt body. Token usage is taken verbatim from the
/// service's usage block. Rate-limit (429) and server (5xx) statuses and
/// transport errors are retried with exponential backoff; other errors
/// fail the request immediately.
class HttpBackend : public CompletionBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  ResponseSet complete(const CompletionRequest& request) override;
  std::string identity() const override;

  ModelFamily family_of(const std::string& model) const;
  // The JSON body and endpoint path a request maps to; exposed so the
  // wire format is testable without a server.
  nlohmann::json request_body(const CompletionRequest& request) const;
  std::string request_path(const CompletionRequest& request) const;
  static ResponseSet parse_response(const nlohmann::json& body,
                                    ModelFamily family);
  static bool status_retryable(int status) {
    return status == 429 || status >= 500;
  }

 private:
  HttpBackendConfig config_;
  std::string host_;        // scheme://host[:port]
  std::string path_prefix_; // e.g. "/v1"
};

}  // namespace ecotune
