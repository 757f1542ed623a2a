#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "ecotune/http_backend.hpp"

namespace ecotune {

namespace {

// Splits "scheme://host:port/path" into the client target and path prefix.
void split_base_url(const std::string& url, std::string& host,
                    std::string& prefix) {
  const auto scheme_end = url.find("://");
  const auto path_start =
      url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) {
    host = url;
    prefix.clear();
    return;
  }
  host = url.substr(0, path_start);
  prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
}

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (const double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)) {
  split_base_url(config_.base_url, host_, path_prefix_);
}

ModelFamily HttpBackend::family_of(const std::string& model) const {
  const auto it = config_.model_families.find(model);
  return it == config_.model_families.end() ? ModelFamily::Completion
                                            : it->second;
}

std::string HttpBackend::request_path(const CompletionRequest& request) const {
  return path_prefix_ + (family_of(request.model) == ModelFamily::Chat
                             ? "/chat/completions"
                             : "/completions");
}

nlohmann::json HttpBackend::request_body(const CompletionRequest& request) const {
  const ModelFamily family = family_of(request.model);
  nlohmann::ordered_json body;
  body["model"] = request.model;
  if (family == ModelFamily::Chat) {
    body["messages"] = nlohmann::json::array(
        {{{"role", "user"}, {"content", request.rendered_prompt}}});
  } else {
    body["prompt"] = request.rendered_prompt;
  }
  body["max_tokens"] = request.max_tokens;
  if (request.temperature) body["temperature"] = *request.temperature;
  if (request.top_p) body["top_p"] = *request.top_p;
  body["n"] = request.n;
  if (!request.stop.empty()) body["stop"] = request.stop;
  body["presence_penalty"] = request.presence_penalty;
  body["frequency_penalty"] = request.frequency_penalty;
  if (request.best_of > 1) {
    if (family == ModelFamily::Chat)
      throw BackendError("best_of is not supported by chat-family models",
                         /*retryable=*/false);
    body["best_of"] = request.best_of;
  }
  if (request.logprobs_wanted) {
    if (family == ModelFamily::Chat)
      body["logprobs"] = true;
    else
      body["logprobs"] = 1;
  }
  return body;
}

ResponseSet HttpBackend::parse_response(const nlohmann::json& body,
                                        ModelFamily family) {
  ResponseSet out;
  try {
    for (const auto& choice : body.at("choices")) {
      if (family == ModelFamily::Chat)
        out.texts.push_back(choice.at("message").at("content").get<std::string>());
      else
        out.texts.push_back(choice.at("text").get<std::string>());
      if (choice.contains("logprobs") && !choice["logprobs"].is_null()) {
        const auto& lp = choice["logprobs"];
        std::vector<double> token_logprobs;
        if (family == ModelFamily::Chat) {
          for (const auto& item : lp.at("content"))
            token_logprobs.push_back(item.at("logprob").get<double>());
        } else {
          for (const auto& item : lp.at("token_logprobs"))
            if (!item.is_null()) token_logprobs.push_back(item.get<double>());
        }
        if (!token_logprobs.empty())
          out.mean_logprobs.push_back(mean_of(token_logprobs));
      }
    }
    const auto& usage = body.at("usage");
    out.usage.input_tokens = usage.at("prompt_tokens").get<std::int64_t>();
    out.usage.output_tokens = usage.value("completion_tokens", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed response body: ") + e.what(),
                       /*retryable=*/false);
  }
  return out;
}

ResponseSet HttpBackend::complete(const CompletionRequest& request) {
  const std::string path = request_path(request);
  const std::string payload = request_body(request).dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str());
      key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  std::string last_error = "request not attempted";
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double backoff =
          config_.initial_backoff_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    }
    httplib::Client client(host_);
    client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_seconds));
    client.set_read_timeout(std::chrono::duration<double>(config_.timeout_seconds));

    const auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;  // retryable
    }
    if (res->status == 200) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw BackendError(std::string("malformed response body: ") + e.what(),
                           /*retryable=*/false, res->status);
      }
      return parse_response(body, family_of(request.model));
    }
    last_error = "service returned status " + std::to_string(res->status) +
                 ": " + res->body;
    if (!status_retryable(res->status))
      throw BackendError(last_error, /*retryable=*/false, res->status);
  }
  throw BackendError(last_error + " (retries exhausted)", /*retryable=*/true);
}

std::string HttpBackend::identity() const { return "http/" + config_.base_url; }

}  // namespace ecotune
