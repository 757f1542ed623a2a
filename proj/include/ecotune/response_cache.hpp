#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "ecotune/backend.hpp"

namespace ecotune {

/// Content-addressed response store under a run directory. The key hashes
/// the canonical request serialization plus the backend identity, so any
/// field difference -- including the response-window offset -- misses.
/// Corrupt entries are evicted and treated as misses.
class ResponseCache {
 public:
  explicit ResponseCache(std::string directory);

  static std::string key(const CompletionRequest& request,
                         const std::string& backend_identity);

  std::optional<ResponseSet> lookup(const CompletionRequest& request,
                                    const std::string& backend_identity);
  void store(const CompletionRequest& request,
             const std::string& backend_identity, const ResponseSet& response);

 private:
  std::string path_for(const std::string& key) const;

  std::string directory_;
  std::mutex mutex_;
};

/// Wraps a backend with read-through caching.
class CachedBackend : public CompletionBackend {
 public:
  CachedBackend(std::unique_ptr<CompletionBackend> inner,
                std::shared_ptr<ResponseCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  ResponseSet complete(const CompletionRequest& request) override {
    if (auto hit = cache_->lookup(request, inner_->identity())) return *hit;
    ResponseSet fresh = inner_->complete(request);
    cache_->store(request, inner_->identity(), fresh);
    return fresh;
  }
  std::string identity() const override { return inner_->identity(); }

 private:
  std::unique_ptr<CompletionBackend> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

}  // namespace ecotune
