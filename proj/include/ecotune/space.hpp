#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ecotune/random.hpp"

namespace ecotune {

// A value a hyperparameter can take. Stop sequences are string lists;
// everything else is a string, an integer, or a real.
using ParamValue =
    std::variant<std::string, std::int64_t, double, std::vector<std::string>>;

enum class DomainKind {
  Constant,
  Choice,
  RandInt,
  LogRandInt,
  Uniform,
  Hierarchical,
};

/// The range of values searched for one hyperparameter.
class Domain {
 public:
  static Domain constant(ParamValue value);
  static Domain choice(std::vector<ParamValue> values);
  static Domain randint(std::int64_t lo, std::int64_t hi);
  // Integers log-uniform on [lo, hi]; requires lo >= 1.
  static Domain lograndint(std::int64_t lo, std::int64_t hi);
  static Domain uniform(double lo, double hi);
  // Exactly one named branch is chosen per sample; the branch name is the
  // hyperparameter the sampled value is assigned to.
  static Domain one_of(std::vector<std::pair<std::string, Domain>> branches);

  DomainKind kind() const { return kind_; }
  bool is_constant() const { return kind_ == DomainKind::Constant; }

  const ParamValue& constant_value() const { return constant_; }
  const std::vector<ParamValue>& choices() const { return choices_; }
  std::int64_t int_lo() const { return int_lo_; }
  std::int64_t int_hi() const { return int_hi_; }
  double real_lo() const { return real_lo_; }
  double real_hi() const { return real_hi_; }
  const std::vector<std::pair<std::string, Domain>>& branches() const {
    return branches_;
  }

 private:
  DomainKind kind_ = DomainKind::Constant;
  ParamValue constant_;
  std::vector<ParamValue> choices_;
  std::int64_t int_lo_ = 0;
  std::int64_t int_hi_ = 0;
  double real_lo_ = 0.0;
  double real_hi_ = 0.0;
  std::vector<std::pair<std::string, Domain>> branches_;
};

/// One concrete point of the search space: everything a completion request
/// needs besides the data example itself.
struct Configuration {
  std::string model;
  std::string prompt;  // template; placeholders filled per example
  std::int64_t max_tokens = 16;
  std::optional<double> temperature;  // exactly one of temperature/top_p set
  std::optional<double> top_p;
  std::int64_t n = 1;
  std::vector<std::string> stop;  // empty = none
  double presence_penalty = 0.0;
  double frequency_penalty = 0.0;
  std::int64_t best_of = 1;

  bool operator==(const Configuration&) const = default;

  // The response-count dimension grown by the evaluator: best_of when
  // best_of is the searched knob (n is fixed to 1 then), n otherwise.
  std::int64_t response_count() const { return best_of > 1 ? best_of : n; }
};

/// Named map hyperparameter -> Domain.
class SearchSpace {
 public:
  SearchSpace() = default;
  explicit SearchSpace(std::map<std::string, Domain> params);

  const std::map<std::string, Domain>& params() const { return params_; }
  const Domain* find(const std::string& name) const;

  // Hyperparameters held fixed (declared Constant or defaulted).
  std::set<std::string> fixed_keys() const;
  // Dimensions the searcher can actually move.
  int non_constant_dimensions() const;

  bool operator==(const SearchSpace&) const = default;

 private:
  std::map<std::string, Domain> params_;
};

// The default space. Model choices cover a spread of cost/quality
// trade-offs; n and max_tokens carry the searchable ranges; randomness is a
// two-branch choice between temperature and top_p.
SearchSpace default_space();

// Every violated invariant, human-readable; empty means the space is usable.
std::vector<std::string> validate_space(const SearchSpace& space);
// Additionally checks that every prompt placeholder names a declared data
// field.
std::vector<std::string> validate_space(
    const SearchSpace& space, const std::set<std::string>& data_fields);

Configuration sample(const SearchSpace& space, Rng& rng);

// A neighbor of `config`: numeric dimensions move at most `step` of their
// range (log-scaled for LogRandInt), categorical dimensions resample with
// probability min(step, 1). Output always validates against the space.
Configuration perturb(const Configuration& config, const SearchSpace& space,
                      double step, Rng& rng);

// Placeholders a prompt template references ("{field}"; "{{" escapes a
// literal brace). Throws std::invalid_argument on unbalanced braces.
std::vector<std::string> template_placeholders(const std::string& tmpl);

}  // namespace ecotune
