#pragma once

#include <string>

#include <json.hpp>

#include "didcatt/dgp.hpp"
#include "didcatt/eval.hpp"
#include "didcatt/learners.hpp"

namespace didcatt::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Fills defaults and rejects unknown keys. Exactly one data source is kept.
Json resolve_config(const Json& user);

LearnerSpec learner_from_json(const Json& j);
Json learner_to_json(const LearnerSpec& s);
DgpConfig dgp_from_json(const Json& j, std::uint64_t seed);
IvConfig iv_from_json(const Json& j, std::uint64_t seed);
ShiftConfig shift_from_json(const Json& j, std::uint64_t seed);
SemiSynthConfig semisynth_from_json(const Json& j);
PanelSchema schema_from_json(const Json& j);
LearnerSetup learner_setup_from_json(const Json& j);
NuisanceSetup nuisance_setup_from_json(const Json& j);
BenchmarkConfig benchmark_from_json(const Json& resolved, std::uint64_t seed, int jobs);

/// Name of the single key present under "data".
std::string data_kind(const Json& resolved);

}  // namespace didcatt::cli
