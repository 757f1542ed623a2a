#pragma once

#include <string>

#include <json.hpp>

#include "ecotune/backend.hpp"
#include "ecotune/space.hpp"

namespace ecotune {

using ordered_json = nlohmann::ordered_json;

// Key order is fixed so dumps are canonical: equal values produce equal
// bytes, which the searcher's dedup, the cache keys and the resume
// byte-compare all rely on.
ordered_json config_to_json(const Configuration& config);
Configuration config_from_json(const nlohmann::json& j);

inline std::string config_key(const Configuration& config) {
  return config_to_json(config).dump();
}

ordered_json request_to_json(const CompletionRequest& request);

ordered_json space_to_json(const SearchSpace& space);
SearchSpace space_from_json(const nlohmann::json& j);

// SHA-256 hex digest; cache file names are derived from it.
std::string sha256_hex(const std::string& bytes);

}  // namespace ecotune
