#include "ecotune/backend.hpp"

#include <cctype>

namespace ecotune {

CompletionRequest CompletionRequest::from_config(const Configuration& config,
                                                 std::string rendered_prompt) {
  CompletionRequest r;
  r.model = config.model;
  r.rendered_prompt = std::move(rendered_prompt);
  r.max_tokens = config.max_tokens;
  r.temperature = config.temperature;
  r.top_p = config.top_p;
  r.n = config.n;
  r.stop = config.stop;
  r.presence_penalty = config.presence_penalty;
  r.frequency_penalty = config.frequency_penalty;
  r.best_of = config.best_of;
  return r;
}

std::string render_prompt(const std::string& tmpl,
                          const std::map<std::string, std::string>& fields) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    const char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        out.push_back('{');
        i += 2;
        continue;
      }
      const auto end = tmpl.find('}', i + 1);
      if (end == std::string::npos)
        throw std::invalid_argument("unbalanced '{' in prompt template");
      const std::string name = tmpl.substr(i + 1, end - i - 1);
      const auto it = fields.find(name);
      if (it == fields.end())
        throw std::invalid_argument("prompt placeholder {" + name +
                                    "} names no field of the example");
      out += it->second;
      i = end + 1;
    } else if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
        out.push_back('}');
        i += 2;
        continue;
      }
      throw std::invalid_argument("unbalanced '}' in prompt template");
    } else {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

std::int64_t whitespace_token_count(const std::string& text) {
  std::int64_t count = 0;
  bool in_token = false;
  for (const unsigned char c : text) {
    if (std::isspace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

}  // namespace ecotune
