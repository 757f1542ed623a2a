#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecotune/pruning.hpp"
#include "ecotune/run_spec.hpp"
#include "ecotune/serialize.hpp"
#include "ecotune/space.hpp"

namespace ecotune {

/// One line of the append-only trial log.
struct TrialLogRecord {
  std::int64_t trial = 0;
  Configuration config;
  TrialResult result;
  std::string registry_key;
  double wall_ms = 0.0;  // excluded from replay comparisons
  std::int64_t cumulative_tokens = 0;
};

ordered_json trial_result_to_json(const TrialResult& r);
TrialResult trial_result_from_json(const nlohmann::json& j);

ordered_json record_to_json(const TrialLogRecord& rec);
TrialLogRecord record_from_json(const nlohmann::json& j);

// The log's first line: enough of the run spec to validate a resume and
// to interpret the records without the spec file.
ordered_json log_meta_json(const RunSpec& spec, std::size_t data_size);

struct TrialLogContents {
  bool has_meta = false;
  ordered_json meta;
  std::vector<TrialLogRecord> records;
};

// Parses a log file; missing file yields an empty log.
TrialLogContents read_trial_log(const std::string& path);

}  // namespace ecotune
