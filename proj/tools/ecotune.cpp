#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecotune/driver.hpp"
#include "ecotune/serialize.hpp"

namespace {

constexpr int kExitSpecError = 2;
constexpr int kExitNoValidConfiguration = 3;
constexpr int kExitBackendFailure = 4;

int cmd_tune(const std::string& spec_path, const std::string& resume_path,
             const std::string& log_path, bool seed_set, std::uint64_t seed) {
  ecotune::RunSpec spec = ecotune::load_run_spec(spec_path);
  if (seed_set) spec.seed = seed;

  const bool resuming = !resume_path.empty();
  const std::string log = resuming ? resume_path : log_path;
  const ecotune::OptimizationReport report =
      resuming ? ecotune::resume(spec, log) : ecotune::run(spec, log);

  std::cout << report.to_text();
  std::cout << report.to_json().dump(2) << "\n";
  return report.found_valid ? 0 : kExitNoValidConfiguration;
}

int cmd_eval(const std::string& spec_path, const std::string& config_path) {
  const ecotune::RunSpec spec = ecotune::load_run_spec(spec_path);
  std::ifstream in(config_path);
  if (!in)
    throw ecotune::SpecError("cannot open configuration: " + config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ecotune::SpecError("configuration " + config_path + ": " + e.what());
  }
  const ecotune::Configuration config = ecotune::config_from_json(j);
  const ecotune::TrialResult result = ecotune::eval_config(spec, config);

  ecotune::ordered_json out;
  out["config"] = ecotune::config_to_json(config);
  out["result"] = ecotune::trial_result_to_json(result);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& log_path, const std::string& format) {
  const ecotune::LogSummary summary = ecotune::summarize_log(log_path);
  if (format == "records") {
    if (summary.log.has_meta) std::cout << summary.log.meta.dump() << "\n";
    for (const auto& rec : summary.log.records)
      std::cout << ecotune::record_to_json(rec).dump() << "\n";
  } else {
    std::cout << ecotune::summary_to_text(summary);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecotune: budget-constrained hyperparameter tuning for "
               "text-generation inference"};
  app.require_subcommand(1);

  std::string spec_path, resume_path, config_path;
  std::string log_path = "ecotune_trials.jsonl";
  std::string format = "text";
  std::uint64_t seed = 0;
  bool default_space_flag = false;

  auto* tune = app.add_subcommand("tune", "search the space for the best "
                                          "valid configuration");
  tune->add_option("--run-spec", spec_path, "run-spec file")->required();
  tune->add_option("--resume", resume_path, "trial log to resume from");
  auto* seed_opt = tune->add_option("--seed", seed, "override the spec seed");
  tune->add_option("--log", log_path, "trial log to write");

  auto* eval = app.add_subcommand("eval", "evaluate one fixed configuration");
  eval->add_option("--run-spec", spec_path, "run-spec file")->required();
  eval->add_option("--config", config_path, "configuration file")->required();

  auto* report = app.add_subcommand("report", "summarize a trial log");
  report->add_option("--log", log_path, "trial log to read")->required();
  report->add_option("--format", format, "text or records")
      ->check(CLI::IsMember({"text", "records"}));

  auto* space = app.add_subcommand("space", "print search spaces");
  space->add_flag("--default", default_space_flag,
                  "print the default space declaration");

  CLI11_PARSE(app, argc, argv);

  try {
    if (tune->parsed())
      return cmd_tune(spec_path, resume_path, log_path, seed_opt->count() > 0,
                      seed);
    if (eval->parsed()) return cmd_eval(spec_path, config_path);
    if (report->parsed()) return cmd_report(log_path, format);
    if (space->parsed()) {
      if (!default_space_flag) {
        std::cerr << "space: nothing to print (use --default)\n";
        return kExitSpecError;
      }
      std::cout << ecotune::space_to_json(ecotune::default_space()).dump(2)
                << "\n";
      return 0;
    }
  } catch (const ecotune::BackendFailure& e) {
    std::cerr << "backend failure: " << e.what() << "\n";
    return kExitBackendFailure;
  } catch (const ecotune::ResumeMismatch& e) {
    std::cerr << "resume refused: " << e.what() << "\n";
    return kExitSpecError;
  } catch (const ecotune::SpecError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return kExitSpecError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSpecError;
  }
  return 0;
}
