#include "ecotune/space.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace ecotune {

namespace {

const char* const kKnownKeys[] = {
    "model",          "prompt",
    "max_tokens",     "temperature",
    "top_p",          "temperature_or_top_p",
    "n",              "stop",
    "presence_penalty", "frequency_penalty",
    "best_of",
};

bool known_key(const std::string& name) {
  for (const char* k : kKnownKeys)
    if (name == k) return true;
  return false;
}

bool is_integer_key(const std::string& name) {
  return name == "max_tokens" || name == "n" || name == "best_of";
}

bool is_real_key(const std::string& name) {
  return name == "temperature" || name == "top_p" ||
         name == "presence_penalty" || name == "frequency_penalty";
}

bool is_string_key(const std::string& name) {
  return name == "model" || name == "prompt";
}

std::int64_t round_half_up(double x) {
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}

std::int64_t clamp_int(std::int64_t v, std::int64_t lo, std::int64_t hi) {
  return std::max(lo, std::min(hi, v));
}

std::int64_t as_int(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v))
    return round_half_up(*d);
  throw std::invalid_argument("expected an integer hyperparameter value");
}

double as_real(const ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v))
    return static_cast<double>(*i);
  throw std::invalid_argument("expected a real hyperparameter value");
}

// Applies one sampled value to the configuration field named `key`.
void assign(Configuration& c, const std::string& key, const ParamValue& v) {
  if (key == "model") {
    c.model = std::get<std::string>(v);
  } else if (key == "prompt") {
    c.prompt = std::get<std::string>(v);
  } else if (key == "max_tokens") {
    c.max_tokens = as_int(v);
  } else if (key == "temperature") {
    c.temperature = as_real(v);
    c.top_p.reset();
  } else if (key == "top_p") {
    c.top_p = as_real(v);
    c.temperature.reset();
  } else if (key == "n") {
    c.n = as_int(v);
  } else if (key == "stop") {
    if (std::holds_alternative<std::vector<std::string>>(v))
      c.stop = std::get<std::vector<std::string>>(v);
    else if (std::holds_alternative<std::string>(v))
      c.stop = {std::get<std::string>(v)};
    else
      throw std::invalid_argument("stop must be a string list");
  } else if (key == "presence_penalty") {
    c.presence_penalty = as_real(v);
  } else if (key == "frequency_penalty") {
    c.frequency_penalty = as_real(v);
  } else if (key == "best_of") {
    c.best_of = as_int(v);
  } else {
    throw std::invalid_argument("unknown hyperparameter: " + key);
  }
}

ParamValue sample_leaf(const Domain& d, Rng& rng) {
  switch (d.kind()) {
    case DomainKind::Constant:
      return d.constant_value();
    case DomainKind::Choice: {
      const auto idx = uniform_int(
          rng, 0, static_cast<std::int64_t>(d.choices().size()) - 1);
      return d.choices()[static_cast<std::size_t>(idx)];
    }
    case DomainKind::RandInt:
      return uniform_int(rng, d.int_lo(), d.int_hi());
    case DomainKind::LogRandInt: {
      const double z = uniform_real(rng, std::log(static_cast<double>(d.int_lo())),
                                    std::log(static_cast<double>(d.int_hi())));
      return clamp_int(round_half_up(std::exp(z)), d.int_lo(), d.int_hi());
    }
    case DomainKind::Uniform:
      return uniform_real(rng, d.real_lo(), d.real_hi());
    case DomainKind::Hierarchical:
      throw std::invalid_argument("hierarchical domain is not a leaf");
  }
  throw std::logic_error("unreachable");
}

// Current value of dimension `key` in a configuration, for perturbation.
ParamValue current_value(const Configuration& c, const std::string& key) {
  if (key == "model") return c.model;
  if (key == "prompt") return c.prompt;
  if (key == "max_tokens") return c.max_tokens;
  if (key == "temperature") return c.temperature.value_or(1.0);
  if (key == "top_p") return c.top_p.value_or(1.0);
  if (key == "n") return c.n;
  if (key == "stop") return c.stop;
  if (key == "presence_penalty") return c.presence_penalty;
  if (key == "frequency_penalty") return c.frequency_penalty;
  if (key == "best_of") return c.best_of;
  throw std::invalid_argument("unknown hyperparameter: " + key);
}

ParamValue perturb_leaf(const Domain& d, const ParamValue& cur, double step,
                        Rng& rng) {
  switch (d.kind()) {
    case DomainKind::Constant:
      return cur;
    case DomainKind::Choice: {
      const double u = unit_real(rng);
      if (u < std::min(step, 1.0)) return sample_leaf(d, rng);
      return cur;
    }
    case DomainKind::RandInt: {
      const double span = static_cast<double>(d.int_hi() - d.int_lo());
      const double delta = uniform_real(rng, -1.0, 1.0) * step * span;
      const auto v = round_half_up(static_cast<double>(as_int(cur)) + delta);
      return clamp_int(v, d.int_lo(), d.int_hi());
    }
    case DomainKind::LogRandInt: {
      const double span = std::log(static_cast<double>(d.int_hi())) -
                          std::log(static_cast<double>(d.int_lo()));
      const double z = std::log(static_cast<double>(as_int(cur))) +
                       uniform_real(rng, -1.0, 1.0) * step * span;
      return clamp_int(round_half_up(std::exp(z)), d.int_lo(), d.int_hi());
    }
    case DomainKind::Uniform: {
      const double span = d.real_hi() - d.real_lo();
      const double v = as_real(cur) + uniform_real(rng, -1.0, 1.0) * step * span;
      return std::clamp(v, d.real_lo(), d.real_hi());
    }
    case DomainKind::Hierarchical:
      throw std::invalid_argument("hierarchical domain is not a leaf");
  }
  throw std::logic_error("unreachable");
}

void describe_value_type(std::ostringstream& out, const ParamValue& v) {
  if (std::holds_alternative<std::string>(v))
    out << "string";
  else if (std::holds_alternative<std::int64_t>(v))
    out << "int";
  else if (std::holds_alternative<double>(v))
    out << "real";
  else
    out << "string list";
}

}  // namespace

Domain Domain::constant(ParamValue value) {
  Domain d;
  d.kind_ = DomainKind::Constant;
  d.constant_ = std::move(value);
  return d;
}

Domain Domain::choice(std::vector<ParamValue> values) {
  Domain d;
  d.kind_ = DomainKind::Choice;
  d.choices_ = std::move(values);
  return d;
}

Domain Domain::randint(std::int64_t lo, std::int64_t hi) {
  Domain d;
  d.kind_ = DomainKind::RandInt;
  d.int_lo_ = lo;
  d.int_hi_ = hi;
  return d;
}

Domain Domain::lograndint(std::int64_t lo, std::int64_t hi) {
  Domain d;
  d.kind_ = DomainKind::LogRandInt;
  d.int_lo_ = lo;
  d.int_hi_ = hi;
  return d;
}

Domain Domain::uniform(double lo, double hi) {
  Domain d;
  d.kind_ = DomainKind::Uniform;
  d.real_lo_ = lo;
  d.real_hi_ = hi;
  return d;
}

Domain Domain::one_of(std::vector<std::pair<std::string, Domain>> branches) {
  Domain d;
  d.kind_ = DomainKind::Hierarchical;
  d.branches_ = std::move(branches);
  return d;
}

SearchSpace::SearchSpace(std::map<std::string, Domain> params)
    : params_(std::move(params)) {
  // Fill the fixed hyperparameters a request needs but the user left out.
  const bool has_randomness_source = params_.count("temperature") ||
                                     params_.count("top_p") ||
                                     params_.count("temperature_or_top_p");
  if (!has_randomness_source)
    params_.emplace("temperature", Domain::constant(1.0));
  if (!params_.count("max_tokens"))
    params_.emplace("max_tokens", Domain::constant(std::int64_t{16}));
  if (!params_.count("n")) params_.emplace("n", Domain::constant(std::int64_t{1}));
  if (!params_.count("stop"))
    params_.emplace("stop", Domain::constant(std::vector<std::string>{}));
  if (!params_.count("presence_penalty"))
    params_.emplace("presence_penalty", Domain::constant(0.0));
  if (!params_.count("frequency_penalty"))
    params_.emplace("frequency_penalty", Domain::constant(0.0));
  if (!params_.count("best_of"))
    params_.emplace("best_of", Domain::constant(std::int64_t{1}));
}

const Domain* SearchSpace::find(const std::string& name) const {
  const auto it = params_.find(name);
  return it == params_.end() ? nullptr : &it->second;
}

std::set<std::string> SearchSpace::fixed_keys() const {
  std::set<std::string> keys;
  for (const auto& [name, domain] : params_)
    if (domain.is_constant()) keys.insert(name);
  return keys;
}

int SearchSpace::non_constant_dimensions() const {
  int d = 0;
  for (const auto& [name, domain] : params_)
    if (!domain.is_constant()) ++d;
  return d;
}

SearchSpace default_space() {
  std::map<std::string, Domain> p;
  p.emplace("model",
            Domain::choice({std::string("text-ada-001"),
                            std::string("text-babbage-001"),
                            std::string("text-davinci-003"),
                            std::string("gpt-3.5-turbo"), std::string("gpt-4")}));
  p.emplace("prompt", Domain::choice({std::string("{prompt}")}));
  p.emplace("max_tokens", Domain::lograndint(100, 1000));
  p.emplace("temperature_or_top_p",
            Domain::one_of({{"temperature", Domain::uniform(0.0, 1.0)},
                            {"top_p", Domain::uniform(0.0, 1.0)}}));
  p.emplace("n", Domain::randint(1, 100));
  p.emplace("stop", Domain::constant(std::vector<std::string>{}));
  p.emplace("presence_penalty", Domain::constant(0.0));
  p.emplace("frequency_penalty", Domain::constant(0.0));
  p.emplace("best_of", Domain::constant(std::int64_t{1}));
  return SearchSpace(std::move(p));
}

std::vector<std::string> template_placeholders(const std::string& tmpl) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < tmpl.size();) {
    const char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        i += 2;
        continue;
      }
      const auto end = tmpl.find('}', i + 1);
      if (end == std::string::npos)
        throw std::invalid_argument("unbalanced '{' in prompt template: " + tmpl);
      names.push_back(tmpl.substr(i + 1, end - i - 1));
      i = end + 1;
    } else if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
        i += 2;
        continue;
      }
      throw std::invalid_argument("unbalanced '}' in prompt template: " + tmpl);
    } else {
      ++i;
    }
  }
  return names;
}

namespace {

void validate_domain(const std::string& name, const Domain& d,
                     std::vector<std::string>& out) {
  switch (d.kind()) {
    case DomainKind::Constant:
      break;
    case DomainKind::Choice:
      if (d.choices().empty()) out.push_back(name + ": Choice list is empty");
      break;
    case DomainKind::RandInt:
      if (d.int_lo() > d.int_hi())
        out.push_back(name + ": RandInt bounds are inverted");
      break;
    case DomainKind::LogRandInt:
      if (d.int_lo() < 1)
        out.push_back(name + ": LogRandInt lower bound must be >= 1");
      if (d.int_lo() > d.int_hi())
        out.push_back(name + ": LogRandInt bounds are inverted");
      break;
    case DomainKind::Uniform:
      if (d.real_lo() > d.real_hi())
        out.push_back(name + ": Uniform bounds are inverted");
      break;
    case DomainKind::Hierarchical:
      if (d.branches().empty())
        out.push_back(name + ": Hierarchical branch list is empty");
      for (const auto& [branch, sub] : d.branches()) {
        if (sub.kind() == DomainKind::Hierarchical) {
          out.push_back(name + ": nested hierarchical domains are unsupported");
          continue;
        }
        validate_domain(name + "." + branch, sub, out);
      }
      break;
  }
}

// Leaf value-range checks for the known hyperparameters.
void validate_values(const std::string& name, const Domain& d,
                     std::vector<std::string>& out) {
  const auto check_value = [&](const ParamValue& v) {
    if (is_string_key(name) && !std::holds_alternative<std::string>(v)) {
      std::ostringstream msg;
      msg << name << ": expected a string value, got ";
      describe_value_type(msg, v);
      out.push_back(msg.str());
      return;
    }
    if (is_integer_key(name)) {
      try {
        if (as_int(v) < 1) out.push_back(name + ": values must be >= 1");
      } catch (const std::invalid_argument&) {
        out.push_back(name + ": expected integer values");
      }
    }
    if (is_real_key(name)) {
      double x;
      try {
        x = as_real(v);
      } catch (const std::invalid_argument&) {
        out.push_back(name + ": expected real values");
        return;
      }
      if ((name == "temperature" || name == "top_p") && (x < 0.0 || x > 1.0))
        out.push_back(name + ": must lie in [0, 1]");
      if ((name == "presence_penalty" || name == "frequency_penalty") &&
          (x < -2.0 || x > 2.0))
        out.push_back(name + ": must lie in [-2, 2]");
    }
    if (name == "stop" && !std::holds_alternative<std::vector<std::string>>(v) &&
        !std::holds_alternative<std::string>(v))
      out.push_back("stop: expected a string list");
  };

  switch (d.kind()) {
    case DomainKind::Constant:
      check_value(d.constant_value());
      break;
    case DomainKind::Choice:
      for (const auto& v : d.choices()) check_value(v);
      break;
    case DomainKind::RandInt:
    case DomainKind::LogRandInt:
      if (is_integer_key(name) && d.int_lo() < 1)
        out.push_back(name + ": values must be >= 1");
      if (is_real_key(name))
        out.push_back(name + ": integer domain on a real hyperparameter");
      break;
    case DomainKind::Uniform:
      if ((name == "temperature" || name == "top_p") &&
          (d.real_lo() < 0.0 || d.real_hi() > 1.0))
        out.push_back(name + ": must lie in [0, 1]");
      if ((name == "presence_penalty" || name == "frequency_penalty") &&
          (d.real_lo() < -2.0 || d.real_hi() > 2.0))
        out.push_back(name + ": must lie in [-2, 2]");
      if (is_integer_key(name))
        out.push_back(name + ": real domain on an integer hyperparameter");
      break;
    case DomainKind::Hierarchical:
      for (const auto& [branch, sub] : d.branches()) validate_values(branch, sub, out);
      break;
  }
}

bool domain_can_exceed_one(const Domain& d) {
  switch (d.kind()) {
    case DomainKind::Constant:
      try {
        return as_int(d.constant_value()) > 1;
      } catch (const std::invalid_argument&) {
        return false;
      }
    case DomainKind::Choice:
      for (const auto& v : d.choices()) {
        try {
          if (as_int(v) > 1) return true;
        } catch (const std::invalid_argument&) {
        }
      }
      return false;
    case DomainKind::RandInt:
    case DomainKind::LogRandInt:
      return d.int_hi() > 1;
    default:
      return false;
  }
}

void each_prompt_template(const Domain& d,
                          const std::function<void(const std::string&)>& fn) {
  if (d.kind() == DomainKind::Constant) {
    if (const auto* s = std::get_if<std::string>(&d.constant_value())) fn(*s);
  } else if (d.kind() == DomainKind::Choice) {
    for (const auto& v : d.choices())
      if (const auto* s = std::get_if<std::string>(&v)) fn(*s);
  }
}

}  // namespace

std::vector<std::string> validate_space(const SearchSpace& space) {
  std::vector<std::string> out;
  for (const auto& [name, domain] : space.params()) {
    if (!known_key(name)) {
      out.push_back("unknown hyperparameter: " + name);
      continue;
    }
    if (name == "temperature_or_top_p") {
      if (domain.kind() != DomainKind::Hierarchical) {
        out.push_back("temperature_or_top_p must be a one_of domain");
      } else {
        for (const auto& [branch, sub] : domain.branches())
          if (branch != "temperature" && branch != "top_p")
            out.push_back("temperature_or_top_p: unknown branch " + branch);
      }
    } else if (domain.kind() == DomainKind::Hierarchical) {
      out.push_back(name + ": hierarchical domains are only supported for "
                           "temperature_or_top_p");
    }
    validate_domain(name, domain, out);
    validate_values(name, domain, out);
  }

  if (!space.find("model")) out.push_back("model is required");
  if (!space.find("prompt")) out.push_back("prompt is required");

  // Joint randomness: one configuration either chooses a temperature or a
  // top_p, never both.
  const Domain* temp = space.find("temperature");
  const Domain* topp = space.find("top_p");
  const Domain* hier = space.find("temperature_or_top_p");
  if (temp && topp)
    out.push_back(
        "temperature and top_p may not both be declared; altering both "
        "randomness controls together is not supported (use "
        "temperature_or_top_p to search one or the other)");
  if (hier && (temp || topp))
    out.push_back(
        "temperature_or_top_p may not be combined with a top-level "
        "temperature or top_p");

  // n and best_of are not tuned together: a searchable best_of requires n
  // fixed to 1.
  const Domain* best_of = space.find("best_of");
  const Domain* n = space.find("n");
  if (best_of && domain_can_exceed_one(*best_of)) {
    const bool n_is_one = n && n->is_constant() && [&] {
      try {
        return as_int(n->constant_value()) == 1;
      } catch (const std::invalid_argument&) {
        return false;
      }
    }();
    if (!n_is_one)
      out.push_back("best_of > 1 requires n fixed to the constant 1");
  }

  // Surface template syntax errors here rather than at request time.
  if (const Domain* prompt = space.find("prompt")) {
    each_prompt_template(*prompt, [&](const std::string& tmpl) {
      try {
        template_placeholders(tmpl);
      } catch (const std::invalid_argument& e) {
        out.push_back(e.what());
      }
    });
  }
  return out;
}

std::vector<std::string> validate_space(
    const SearchSpace& space, const std::set<std::string>& data_fields) {
  auto out = validate_space(space);
  if (const Domain* prompt = space.find("prompt")) {
    each_prompt_template(*prompt, [&](const std::string& tmpl) {
      try {
        for (const auto& name : template_placeholders(tmpl))
          if (!data_fields.count(name))
            out.push_back("prompt placeholder {" + name +
                          "} names no tuning-data field");
      } catch (const std::invalid_argument&) {
        // already reported by validate_space(space)
      }
    });
  }
  return out;
}

Configuration sample(const SearchSpace& space, Rng& rng) {
  Configuration c;
  for (const auto& [name, domain] : space.params()) {
    if (domain.kind() == DomainKind::Hierarchical) {
      const auto idx = uniform_int(
          rng, 0, static_cast<std::int64_t>(domain.branches().size()) - 1);
      const auto& [branch, sub] = domain.branches()[static_cast<std::size_t>(idx)];
      assign(c, branch, sample_leaf(sub, rng));
    } else {
      assign(c, name, sample_leaf(domain, rng));
    }
  }
  return c;
}

Configuration perturb(const Configuration& config, const SearchSpace& space,
                      double step, Rng& rng) {
  Configuration c = config;
  for (const auto& [name, domain] : space.params()) {
    if (domain.is_constant()) continue;
    if (domain.kind() == DomainKind::Hierarchical) {
      const double u = unit_real(rng);
      if (u < std::min(step, 1.0)) {
        const auto idx = uniform_int(
            rng, 0, static_cast<std::int64_t>(domain.branches().size()) - 1);
        const auto& [branch, sub] =
            domain.branches()[static_cast<std::size_t>(idx)];
        assign(c, branch, sample_leaf(sub, rng));
      }
      continue;
    }
    assign(c, name, perturb_leaf(domain, current_value(config, name), step, rng));
  }
  return c;
}

}  // namespace ecotune
