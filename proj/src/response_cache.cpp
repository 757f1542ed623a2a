#include "ecotune/response_cache.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecotune/serialize.hpp"

namespace fs = std::filesystem;

namespace ecotune {

ResponseCache::ResponseCache(std::string directory)
    : directory_(std::move(directory)) {
  fs::create_directories(directory_);
}

std::string ResponseCache::key(const CompletionRequest& request,
                               const std::string& backend_identity) {
  ordered_json j = request_to_json(request);
  j["backend"] = backend_identity;
  return sha256_hex(j.dump());
}

std::string ResponseCache::path_for(const std::string& key) const {
  return (fs::path(directory_) / (key + ".json")).string();
}

std::optional<ResponseSet> ResponseCache::lookup(
    const CompletionRequest& request, const std::string& backend_identity) {
  const std::string k = key(request, backend_identity);
  const std::string path = path_for(k);
  const std::lock_guard<std::mutex> lock(mutex_);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  in.close();
  try {
    const auto j = nlohmann::json::parse(buf.str());
    ordered_json expected = request_to_json(request);
    expected["backend"] = backend_identity;
    if (j.at("key") != nlohmann::json(expected))
      throw std::runtime_error("key mismatch");
    const auto& r = j.at("response");
    ResponseSet out;
    out.texts = r.at("texts").get<std::vector<std::string>>();
    out.mean_logprobs = r.value("mean_logprobs", std::vector<double>{});
    out.usage.input_tokens = r.at("usage").at("input_tokens").get<std::int64_t>();
    out.usage.output_tokens =
        r.at("usage").at("output_tokens").get<std::int64_t>();
    return out;
  } catch (const std::exception&) {
    // Corrupt entry: evict and miss.
    std::error_code ec;
    fs::remove(path, ec);
    return std::nullopt;
  }
}

void ResponseCache::store(const CompletionRequest& request,
                          const std::string& backend_identity,
                          const ResponseSet& response) {
  const std::string k = key(request, backend_identity);
  const std::string path = path_for(k);

  ordered_json key_json = request_to_json(request);
  key_json["backend"] = backend_identity;
  ordered_json j;
  j["key"] = std::move(key_json);
  j["response"] = {{"texts", response.texts},
                   {"mean_logprobs", response.mean_logprobs},
                   {"usage",
                    {{"input_tokens", response.usage.input_tokens},
                     {"output_tokens", response.usage.output_tokens}}}};

  const std::lock_guard<std::mutex> lock(mutex_);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << j.dump();
  }
  fs::rename(tmp, path);
}

}  // namespace ecotune
