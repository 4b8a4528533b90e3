#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigmetric/dataset.hpp"
#include "sigmetric/distance.hpp"
#include "sigmetric/evaluate.hpp"
#include "sigmetric/mining.hpp"
#include "sigmetric/model.hpp"
#include "sigmetric/objectives.hpp"
#include "sigmetric/train.hpp"

namespace sigmetric {

// JSON conversions for every configuration struct.  from_json overrides only
// the keys present (so partial configs layer over defaults) and rejects
// unknown keys with ConfigError.

void to_json(nlohmann::json& j, const SyntheticCohortConfig& c);
void from_json(const nlohmann::json& j, SyntheticCohortConfig& c);

void to_json(nlohmann::json& j, const SplitSpec& c);
void from_json(const nlohmann::json& j, SplitSpec& c);

void to_json(nlohmann::json& j, const DistanceMeasure& c);
void from_json(const nlohmann::json& j, DistanceMeasure& c);

void to_json(nlohmann::json& j, const MinerSpec& c);
void from_json(const nlohmann::json& j, MinerSpec& c);

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

void to_json(nlohmann::json& j, const HeadConfig& c);
void from_json(const nlohmann::json& j, HeadConfig& c);

void to_json(nlohmann::json& j, const ObjectiveSpec& c);
void from_json(const nlohmann::json& j, ObjectiveSpec& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);

// Top-level run configuration consumed by the CLI: every command reads the
// section(s) it needs.
struct RunConfig {
  SyntheticCohortConfig cohort;
  SplitSpec split;
  TrainConfig train;
  EvalConfig evaluate;
  std::vector<double> sweep_grid = {0.1, 1.0, 2.0, 3.0, 10.0};
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Parses a JSON config file into `into` (layered over its current values).
// Missing file or malformed JSON raises ConfigError.
void load_config_file(const std::filesystem::path& file, RunConfig& into);

// Applies one dotted-path override, e.g. ("train.objective.alpha_scale",
// "2.0") or ("cohort.label_link", "saturating").  The value string is parsed
// as JSON when possible and treated as a bare string otherwise.
void apply_override(RunConfig& config, const std::string& dotted_key,
                    const std::string& value);

}  // namespace sigmetric
