#include "ecotune/serialize.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace ecotune {

ordered_json config_to_json(const Configuration& c) {
  ordered_json j;
  j["model"] = c.model;
  j["prompt"] = c.prompt;
  j["max_tokens"] = c.max_tokens;
  if (c.temperature) j["temperature"] = *c.temperature;
  if (c.top_p) j["top_p"] = *c.top_p;
  j["n"] = c.n;
  if (c.stop.empty())
    j["stop"] = nullptr;
  else
    j["stop"] = c.stop;
  j["presence_penalty"] = c.presence_penalty;
  j["frequency_penalty"] = c.frequency_penalty;
  j["best_of"] = c.best_of;
  return j;
}

Configuration config_from_json(const nlohmann::json& j) {
  Configuration c;
  c.model = j.at("model").get<std::string>();
  c.prompt = j.at("prompt").get<std::string>();
  c.max_tokens = j.at("max_tokens").get<std::int64_t>();
  if (j.contains("temperature") && !j["temperature"].is_null())
    c.temperature = j["temperature"].get<double>();
  if (j.contains("top_p") && !j["top_p"].is_null())
    c.top_p = j["top_p"].get<double>();
  if (c.temperature && c.top_p)
    throw std::invalid_argument(
        "configuration sets both temperature and top_p");
  if (!c.temperature && !c.top_p) c.temperature = 1.0;
  c.n = j.value("n", std::int64_t{1});
  if (j.contains("stop") && !j["stop"].is_null()) {
    if (j["stop"].is_string())
      c.stop = {j["stop"].get<std::string>()};
    else
      c.stop = j["stop"].get<std::vector<std::string>>();
  }
  c.presence_penalty = j.value("presence_penalty", 0.0);
  c.frequency_penalty = j.value("frequency_penalty", 0.0);
  c.best_of = j.value("best_of", std::int64_t{1});
  return c;
}

ordered_json request_to_json(const CompletionRequest& r) {
  ordered_json j;
  j["model"] = r.model;
  j["prompt"] = r.rendered_prompt;
  j["max_tokens"] = r.max_tokens;
  if (r.temperature) j["temperature"] = *r.temperature;
  if (r.top_p) j["top_p"] = *r.top_p;
  j["n"] = r.n;
  j["response_offset"] = r.response_offset;
  if (r.stop.empty())
    j["stop"] = nullptr;
  else
    j["stop"] = r.stop;
  j["presence_penalty"] = r.presence_penalty;
  j["frequency_penalty"] = r.frequency_penalty;
  j["best_of"] = r.best_of;
  j["logprobs"] = r.logprobs_wanted;
  return j;
}

namespace {

ordered_json value_to_json(const ParamValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  const auto& list = std::get<std::vector<std::string>>(v);
  if (list.empty()) return nullptr;
  return list;
}

ParamValue value_from_json(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_null()) return std::vector<std::string>{};
  if (j.is_array()) return j.get<std::vector<std::string>>();
  throw std::invalid_argument("unsupported hyperparameter value: " + j.dump());
}

ordered_json domain_to_json(const Domain& d) {
  ordered_json j;
  switch (d.kind()) {
    case DomainKind::Constant:
      j["constant"] = value_to_json(d.constant_value());
      break;
    case DomainKind::Choice: {
      auto arr = ordered_json::array();
      for (const auto& v : d.choices()) arr.push_back(value_to_json(v));
      j["choice"] = std::move(arr);
      break;
    }
    case DomainKind::RandInt:
      j["randint"] = {d.int_lo(), d.int_hi()};
      break;
    case DomainKind::LogRandInt:
      j["lograndint"] = {d.int_lo(), d.int_hi()};
      break;
    case DomainKind::Uniform:
      j["uniform"] = {d.real_lo(), d.real_hi()};
      break;
    case DomainKind::Hierarchical: {
      auto arr = ordered_json::array();
      for (const auto& [name, sub] : d.branches()) {
        ordered_json branch;
        branch[name] = domain_to_json(sub);
        arr.push_back(std::move(branch));
      }
      j["one_of"] = std::move(arr);
      break;
    }
  }
  return j;
}

Domain domain_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 1)
    throw std::invalid_argument(
        "a domain must be a single-key object "
        "(constant/choice/randint/lograndint/uniform/one_of): " +
        j.dump());
  const auto& key = j.begin().key();
  const auto& v = j.begin().value();
  if (key == "constant") return Domain::constant(value_from_json(v));
  if (key == "choice") {
    std::vector<ParamValue> values;
    for (const auto& item : v) values.push_back(value_from_json(item));
    return Domain::choice(std::move(values));
  }
  if (key == "randint" || key == "lograndint") {
    if (!v.is_array() || v.size() != 2)
      throw std::invalid_argument(key + " expects [lo, hi]");
    const auto lo = v[0].get<std::int64_t>();
    const auto hi = v[1].get<std::int64_t>();
    return key == "randint" ? Domain::randint(lo, hi)
                            : Domain::lograndint(lo, hi);
  }
  if (key == "uniform") {
    if (!v.is_array() || v.size() != 2)
      throw std::invalid_argument("uniform expects [lo, hi]");
    return Domain::uniform(v[0].get<double>(), v[1].get<double>());
  }
  if (key == "one_of") {
    std::vector<std::pair<std::string, Domain>> branches;
    for (const auto& item : v) {
      if (!item.is_object() || item.size() != 1)
        throw std::invalid_argument(
            "one_of branches must be single-key objects");
      branches.emplace_back(item.begin().key(),
                            domain_from_json(item.begin().value()));
    }
    return Domain::one_of(std::move(branches));
  }
  throw std::invalid_argument("unknown domain kind: " + key);
}

}  // namespace

ordered_json space_to_json(const SearchSpace& space) {
  ordered_json j = ordered_json::object();
  for (const auto& [name, domain] : space.params())
    j[name] = domain_to_json(domain);
  return j;
}

SearchSpace space_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw std::invalid_argument("search space must be an object");
  std::map<std::string, Domain> params;
  for (const auto& [name, decl] : j.items())
    params.emplace(name, domain_from_json(decl));
  return SearchSpace(std::move(params));
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len,
                  EVP_sha256(), nullptr))
    throw std::runtime_error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace ecotune
