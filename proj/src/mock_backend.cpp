#include "ecotune/mock_backend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "ecotune/random.hpp"

namespace ecotune {

namespace {

constexpr std::uint64_t kLenTag = 0x6c656e;   // response length stream
constexpr std::uint64_t kWordTag = 0x776f7264; // filler word stream
constexpr std::uint64_t kAnswerTag = 0x616e73; // success draw stream
constexpr std::uint64_t kLogprobTag = 0x6c70;  // mean-logprob stream

const char* const kVocab[] = {
    "the",   "model", "writes", "some",  "tokens", "about",  "this",
    "input", "and",   "keeps",  "going", "until",  "length", "or",
    "stop",  "ends",  "it",     "with",  "words",  "from",   "a",
    "small", "fixed", "vocabulary",
};
constexpr std::size_t kVocabSize = sizeof(kVocab) / sizeof(kVocab[0]);

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

struct Generated {
  std::string text;
  std::int64_t tokens;
  double mean_logprob;
};

}  // namespace

MockProfile MockProfile::from_json(const nlohmann::json& j) {
  MockProfile p;
  p.seed = j.value("seed", std::uint64_t{0});
  const auto parse_params = [](const nlohmann::json& m) {
    MockModelParams mp;
    mp.fixed_output_tokens = m.value("fixed_output_tokens", std::int64_t{0});
    mp.length_shape = m.value("length_shape", 1.0);
    if (m.contains("quality")) {
      const auto& q = m["quality"];
      mp.quality_base = q.value("base", 0.3);
      mp.quality_temperature_weight = q.value("temperature_weight", 0.3);
      mp.quality_max_tokens_weight = q.value("max_tokens_weight", 0.1);
    }
    mp.correct_answer = m.value("correct_answer", std::string("OK"));
    return mp;
  };
  if (j.contains("default")) p.default_params = parse_params(j["default"]);
  if (j.contains("models"))
    for (const auto& [name, m] : j["models"].items())
      p.models[name] = parse_params(m);
  return p;
}

nlohmann::json MockProfile::to_json() const {
  const auto dump_params = [](const MockModelParams& mp) {
    nlohmann::json m;
    m["fixed_output_tokens"] = mp.fixed_output_tokens;
    m["length_shape"] = mp.length_shape;
    m["quality"] = {{"base", mp.quality_base},
                    {"temperature_weight", mp.quality_temperature_weight},
                    {"max_tokens_weight", mp.quality_max_tokens_weight}};
    m["correct_answer"] = mp.correct_answer;
    return m;
  };
  nlohmann::json j;
  j["seed"] = seed;
  j["default"] = dump_params(default_params);
  j["models"] = nlohmann::json::object();
  for (const auto& [name, mp] : models) j["models"][name] = dump_params(mp);
  return j;
}

ResponseSet MockBackend::complete(const CompletionRequest& request) {
  if (request.n < 1 || request.best_of < 1)
    throw std::invalid_argument("mock: n and best_of must be >= 1");
  if (request.n > 1 && request.best_of > 1)
    throw std::invalid_argument("mock: n and best_of may not both exceed 1");
  if (request.max_tokens < 1)
    throw std::invalid_argument("mock: max_tokens must be >= 1");

  const MockModelParams& params = profile_.for_model(request.model);
  const double tv = request.temperature ? *request.temperature
                                        : request.top_p.value_or(1.0);
  const double p_success =
      clamp01(params.quality_base + params.quality_temperature_weight * tv +
              params.quality_max_tokens_weight *
                  std::log10(static_cast<double>(request.max_tokens) / 100.0));

  // One stream per (profile, model, prompt); response index selects the
  // window within it.
  std::uint64_t stream = mix64(profile_.seed);
  stream = hash_combine(stream, hash_bytes(request.model));
  stream = hash_combine(stream, hash_bytes(request.rendered_prompt));

  const auto generate = [&](std::int64_t index) {
    std::int64_t len;
    if (params.fixed_output_tokens > 0) {
      len = std::min(params.fixed_output_tokens, request.max_tokens);
    } else {
      const double u = hash_unit(
          hash_combine(hash_combine(stream, kLenTag), static_cast<std::uint64_t>(index)));
      len = 1 + static_cast<std::int64_t>(
                    std::floor(std::pow(u, params.length_shape) *
                               static_cast<double>(request.max_tokens)));
      len = std::min(len, request.max_tokens);
    }

    const double u_ans = hash_unit(hash_combine(
        hash_combine(hash_combine(stream, kAnswerTag),
                     static_cast<std::uint64_t>(index)),
        std::bit_cast<std::uint64_t>(tv)));
    std::string answer;
    if (u_ans < p_success) {
      answer = params.correct_answer;
    } else {
      answer = "W" + std::to_string(mix64(hash_combine(stream, static_cast<std::uint64_t>(index))) % 3);
    }

    std::string text;
    for (std::int64_t t = 0; t + 1 < len; ++t) {
      const auto w = mix64(hash_combine(
          hash_combine(hash_combine(stream, kWordTag),
                       static_cast<std::uint64_t>(index)),
          static_cast<std::uint64_t>(t)));
      if (!text.empty()) text.push_back(' ');
      text += kVocab[w % kVocabSize];
    }
    if (!text.empty()) text.push_back(' ');
    text += "ANSWER[" + answer + "]";

    // Stop sequences cut the text before their first occurrence.
    std::size_t cut = std::string::npos;
    for (const auto& s : request.stop) {
      if (s.empty()) continue;
      const auto pos = text.find(s);
      if (pos != std::string::npos) cut = std::min(cut, pos);
    }
    if (cut != std::string::npos) text.resize(cut);

    Generated g;
    g.tokens = whitespace_token_count(text);
    g.text = std::move(text);
    const double u_lp = hash_unit(hash_combine(
        hash_combine(stream, kLogprobTag), static_cast<std::uint64_t>(index)));
    g.mean_logprob = -(0.25 + 2.25 * u_lp);
    return g;
  };

  ResponseSet result;
  result.usage.input_tokens = whitespace_token_count(request.rendered_prompt);

  if (request.best_of > 1) {
    // Generate every candidate and charge for all of them, but return only
    // the highest-logprob one: server-side filtering with full-cost billing.
    std::optional<Generated> best;
    for (std::int64_t i = 0; i < request.best_of; ++i) {
      Generated g = generate(request.response_offset + i);
      result.usage.output_tokens += g.tokens;
      if (!best || g.mean_logprob > best->mean_logprob) best = std::move(g);
    }
    result.texts.push_back(best->text);
    if (request.logprobs_wanted) result.mean_logprobs.push_back(best->mean_logprob);
  } else {
    for (std::int64_t i = 0; i < request.n; ++i) {
      Generated g = generate(request.response_offset + i);
      result.usage.output_tokens += g.tokens;
      result.texts.push_back(std::move(g.text));
      if (request.logprobs_wanted) result.mean_logprobs.push_back(g.mean_logprob);
    }
  }

  total_tokens_ += result.usage.total();
  ++request_count_;
  return result;
}

std::string MockBackend::identity() const {
  return "mock/" + std::to_string(mix64(hash_bytes(profile_.to_json().dump())));
}

}  // namespace ecotune
