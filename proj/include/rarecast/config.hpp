#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "rarecast/kgembed.hpp"
#include "rarecast/preprocess.hpp"
#include "rarecast/synthgen.hpp"
#include "rarecast/train.hpp"

namespace rarecast {

struct DatasetConfig {
    enum class Kind { synth, manifest };
    Kind kind = Kind::synth;
    std::filesystem::path manifest;  // kind == manifest
    SynthSpec synth;                 // kind == synth
    bool synth_seed_fixed = false;   // false: derive from the run seed
};

// Resolved experiment configuration; the single source of truth for a run.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    ConditionCode target;
    DatasetConfig dataset;

    PreprocessConfig preprocess;
    double min_stay_hours = 48.0;
    int min_patients_per_condition = 10;
    std::array<double, 3> split_fractions{0.67, 0.16, 0.17};

    double edge_retention = 1.0;
    double prune_fraction = 0.5;

    TuckerTrainConfig embed;  // embed.seed is derived from the run seed

    int select_k = 0;  // 0: use select_fraction
    double select_fraction = 0.10;

    TrainConfig train;
};

// Parses and validates a config document: unknown keys are rejected, types
// and ranges are checked, defaults are filled.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical resolved form (every field explicit).
nlohmann::json resolved_json(const ExperimentConfig& cfg);

std::string config_hash(const ExperimentConfig& cfg);

}  // namespace rarecast
