#include "ecotune/run_spec.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecotune/serialize.hpp"

namespace fs = std::filesystem;

namespace ecotune {

namespace {

UtilityBinding utility_from_json(const nlohmann::json& j) {
  UtilityBinding b;
  const std::string mode = j.value("mode", std::string("best_of"));
  if (mode == "best_of")
    b.mode = UtilityMode::BestOf;
  else if (mode == "majority_vote")
    b.mode = UtilityMode::MajorityVote;
  else if (mode == "reranked_top")
    b.mode = UtilityMode::RerankedTop;
  else
    throw SpecError("utility.mode must be best_of, majority_vote or "
                    "reranked_top, got '" + mode + "'");

  if (j.contains("checker")) {
    const auto& c = j["checker"];
    if (c.contains("command")) {
      CheckerCommand cmd;
      cmd.path = c["command"].get<std::string>();
      cmd.args = c.value("args", std::vector<std::string>{});
      cmd.timeout_seconds = c.value("timeout_seconds", 30.0);
      b.checker_command = std::move(cmd);
    } else if (c.value("builtin", std::string("exact_match")) != "exact_match") {
      throw SpecError("checker.builtin only supports exact_match");
    }
    if (c.contains("truth_field"))
      b.truth_field = c["truth_field"].get<std::string>();
  }
  if (j.contains("extraction")) {
    const auto& e = j["extraction"];
    b.extraction.regex = e.value("regex", b.extraction.regex);
    b.extraction.use_last_match =
        e.value("occurrence", std::string("last")) != "first";
  }
  if (b.mode == UtilityMode::MajorityVote && b.extraction.regex.empty())
    throw SpecError("majority_vote requires an answer-extraction rule");
  return b;
}

}  // namespace

RunSpec run_spec_from_json(const nlohmann::json& j,
                           const std::string& base_dir) {
  RunSpec spec;
  try {
    if (!j.contains("space")) throw SpecError("run spec is missing 'space'");
    spec.space = space_from_json(j["space"]);

    if (!j.contains("data")) throw SpecError("run spec is missing 'data'");
    fs::path data = j["data"].get<std::string>();
    if (data.is_relative() && !base_dir.empty()) data = fs::path(base_dir) / data;
    spec.data_path = data.string();

    if (j.contains("utility")) spec.utility = utility_from_json(j["utility"]);

    if (!j.contains("budget"))
      throw SpecError("run spec is missing 'budget' {inference, optimization}");
    spec.inference_budget = j["budget"].at("inference").get<double>();
    spec.optimization_budget =
        j["budget"].at("optimization").get<std::int64_t>();

    const std::string evaluator = j.value("evaluator", std::string("pruned"));
    if (evaluator == "pruned")
      spec.use_pruned_evaluator = true;
    else if (evaluator == "simple")
      spec.use_pruned_evaluator = false;
    else
      throw SpecError("evaluator must be 'pruned' or 'simple'");

    if (j.contains("searcher")) {
      const auto& s = j["searcher"];
      spec.searcher.step_init = s.value("step_init", spec.searcher.step_init);
      spec.searcher.step_min = s.value("step_min", spec.searcher.step_min);
      spec.searcher.exploration =
          s.value("exploration", spec.searcher.exploration);
      spec.searcher.dedup_retries =
          s.value("dedup_retries", spec.searcher.dedup_retries);
    }

    spec.seed = j.value("seed", std::uint64_t{0});
    spec.parallelism = j.value("parallelism", 1);
    spec.bound_width = j.value("bound_width", 0.1);
    spec.max_trials = j.value("max_trials", std::int64_t{0});
    if (j.contains("cache_dir") && !j["cache_dir"].is_null()) {
      fs::path dir = j["cache_dir"].get<std::string>();
      if (dir.is_relative() && !base_dir.empty()) dir = fs::path(base_dir) / dir;
      spec.cache_dir = dir.string();
    }

    const auto& backend = j.contains("backend") ? j["backend"]
                                                : nlohmann::json{{"type", "mock"}};
    const std::string type = backend.value("type", std::string("mock"));
    if (type == "mock") {
      spec.backend_kind = BackendKind::Mock;
      spec.mock_profile = MockProfile::from_json(backend);
    } else if (type == "http") {
      spec.backend_kind = BackendKind::Http;
      if (!backend.contains("base_url"))
        throw SpecError("http backend requires base_url");
      spec.http.base_url = backend["base_url"].get<std::string>();
      if (backend.contains("model_families"))
        for (const auto& [model, family] : backend["model_families"].items()) {
          const std::string f = family.get<std::string>();
          if (f == "chat")
            spec.http.model_families[model] = ModelFamily::Chat;
          else if (f == "completion")
            spec.http.model_families[model] = ModelFamily::Completion;
          else
            throw SpecError("model family must be 'chat' or 'completion'");
        }
      spec.http.api_key_env =
          backend.value("api_key_env", spec.http.api_key_env);
      spec.http.max_retries = backend.value("max_retries", spec.http.max_retries);
      spec.http.initial_backoff_seconds =
          backend.value("initial_backoff_seconds",
                        spec.http.initial_backoff_seconds);
      spec.http.timeout_seconds =
          backend.value("timeout_seconds", spec.http.timeout_seconds);
    } else {
      throw SpecError("backend.type must be 'mock' or 'http'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("run spec: ") + e.what());
  }

  if (spec.inference_budget <= 0.0)
    throw SpecError("budget.inference must be > 0");
  if (static_cast<double>(spec.optimization_budget) < spec.inference_budget)
    throw SpecError(
        "budget.optimization must be >= budget.inference (at least one "
        "example must be evaluable)");
  if (spec.parallelism < 1) throw SpecError("parallelism must be >= 1");
  if (spec.bound_width < 0.0) throw SpecError("bound_width must be >= 0");
  if (spec.searcher.step_init <= 0.0 || spec.searcher.step_init > 1.0)
    throw SpecError("searcher.step_init must lie in (0, 1]");

  const auto violations = validate_space(spec.space);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "search space is invalid:";
    for (const auto& v : violations) msg << "\n  - " << v;
    throw SpecError(msg.str());
  }
  return spec;
}

RunSpec load_run_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open run spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError("run spec " + path + ": " + e.what());
  }
  return run_spec_from_json(j, fs::path(path).parent_path().string());
}

}  // namespace ecotune
