#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace ecotune {

/// One tuning example: a record of named text fields.
struct Example {
  std::string id;
  std::map<std::string, std::string> fields;

  const std::string* field(const std::string& name) const {
    const auto it = fields.find(name);
    return it == fields.end() ? nullptr : &it->second;
  }
};

/// The ordered tuning set D.
struct TuningSet {
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  std::set<std::string> field_names() const {
    std::set<std::string> names;
    for (const auto& ex : examples)
      for (const auto& [k, v] : ex.fields) names.insert(k);
    return names;
  }
};

// Parses line-delimited JSON records of string fields. Records without an
// "id" field get their (1-based) line number as id.
TuningSet load_tuning_set(const std::string& path);
TuningSet parse_tuning_set(const std::string& jsonl_text);

}  // namespace ecotune
