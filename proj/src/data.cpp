#include "ecotune/data.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ecotune {

TuningSet parse_tuning_set(const std::string& jsonl_text) {
  TuningSet set;
  std::istringstream in(jsonl_text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("tuning data line " + std::to_string(line_no) +
                                  ": " + e.what());
    }
    if (!j.is_object())
      throw std::invalid_argument("tuning data line " + std::to_string(line_no) +
                                  ": expected an object of text fields");
    Example ex;
    ex.id = std::to_string(line_no);
    for (const auto& [key, value] : j.items()) {
      std::string text;
      if (value.is_string())
        text = value.get<std::string>();
      else
        text = value.dump();
      if (key == "id")
        ex.id = text;
      else
        ex.fields[key] = text;
    }
    set.examples.push_back(std::move(ex));
  }
  if (set.empty()) throw std::invalid_argument("tuning data is empty");
  return set;
}

TuningSet load_tuning_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open tuning data: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_tuning_set(buf.str());
}

}  // namespace ecotune
