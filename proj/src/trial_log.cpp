#include "ecotune/trial_log.hpp"

#include <fstream>

namespace ecotune {

ordered_json trial_result_to_json(const TrialResult& r) {
  ordered_json j;
  j["valid"] = r.valid;
  j["utility"] = r.utility;
  j["avg_cost"] = r.avg_cost;
  j["tokens_spent"] = r.tokens_spent;
  j["examples_touched"] = r.examples_touched;
  switch (r.prune_stage) {
    case PruneStage::None:
      j["prune_stage"] = nullptr;
      break;
    case PruneStage::PreCheck:
      j["prune_stage"] = "pre_check";
      break;
    case PruneStage::Bound:
      j["prune_stage"] = {r.prune_n, r.prune_k};
      break;
  }
  j["registry_valid_ns"] = r.registry_valid_ns;
  if (r.registry_invalid_n)
    j["registry_invalid_n"] = *r.registry_invalid_n;
  else
    j["registry_invalid_n"] = nullptr;
  return j;
}

TrialResult trial_result_from_json(const nlohmann::json& j) {
  TrialResult r;
  r.valid = j.at("valid").get<bool>();
  r.utility = j.at("utility").get<double>();
  r.avg_cost = j.at("avg_cost").get<double>();
  r.tokens_spent = j.at("tokens_spent").get<std::int64_t>();
  r.examples_touched = j.at("examples_touched").get<std::int64_t>();
  const auto& stage = j.at("prune_stage");
  if (stage.is_null()) {
    r.prune_stage = PruneStage::None;
  } else if (stage.is_string()) {
    if (stage.get<std::string>() != "pre_check")
      throw std::invalid_argument("unknown prune stage: " + stage.dump());
    r.prune_stage = PruneStage::PreCheck;
  } else {
    r.prune_stage = PruneStage::Bound;
    r.prune_n = stage.at(0).get<std::int64_t>();
    r.prune_k = stage.at(1).get<std::int64_t>();
  }
  r.registry_valid_ns =
      j.value("registry_valid_ns", std::vector<std::int64_t>{});
  if (j.contains("registry_invalid_n") && !j["registry_invalid_n"].is_null())
    r.registry_invalid_n = j["registry_invalid_n"].get<std::int64_t>();
  return r;
}

ordered_json record_to_json(const TrialLogRecord& rec) {
  ordered_json j;
  j["type"] = "trial";
  j["trial"] = rec.trial;
  j["config"] = config_to_json(rec.config);
  j["result"] = trial_result_to_json(rec.result);
  j["registry_key"] = rec.registry_key;
  j["cumulative_tokens"] = rec.cumulative_tokens;
  j["wall_ms"] = rec.wall_ms;
  return j;
}

TrialLogRecord record_from_json(const nlohmann::json& j) {
  TrialLogRecord rec;
  rec.trial = j.at("trial").get<std::int64_t>();
  rec.config = config_from_json(j.at("config"));
  rec.result = trial_result_from_json(j.at("result"));
  rec.registry_key = j.value("registry_key", std::string{});
  rec.cumulative_tokens = j.value("cumulative_tokens", std::int64_t{0});
  rec.wall_ms = j.value("wall_ms", 0.0);
  return rec;
}

ordered_json log_meta_json(const RunSpec& spec, std::size_t data_size) {
  ordered_json j;
  j["type"] = "meta";
  j["space"] = space_to_json(spec.space);
  j["seed"] = spec.seed;
  j["evaluator"] = spec.use_pruned_evaluator ? "pruned" : "simple";
  j["inference_budget"] = spec.inference_budget;
  j["optimization_budget"] = spec.optimization_budget;
  j["bound_width"] = spec.bound_width;
  j["data_size"] = data_size;
  j["searcher"] = {{"step_init", spec.searcher.step_init},
                   {"step_min", spec.searcher.step_min},
                   {"exploration", spec.searcher.exploration},
                   {"dedup_retries", spec.searcher.dedup_retries}};
  return j;
}

TrialLogContents read_trial_log(const std::string& path) {
  TrialLogContents log;
  std::ifstream in(path);
  if (!in) return log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("trial log line " + std::to_string(line_no) +
                                  ": " + e.what());
    }
    const std::string type = j.value("type", std::string("trial"));
    if (type == "meta") {
      log.has_meta = true;
      log.meta = ordered_json(j);
    } else if (type == "trial") {
      log.records.push_back(record_from_json(j));
    } else {
      throw std::invalid_argument("trial log line " + std::to_string(line_no) +
                                  ": unknown record type '" + type + "'");
    }
  }
  return log;
}

}  // namespace ecotune
