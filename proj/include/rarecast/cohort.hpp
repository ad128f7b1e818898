#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace rarecast {

// Level-3 condition codes are plain 3-character strings ("428", "V58", ...).
using ConditionCode = std::string;

enum class TaskKind { binary, multiclass, multilabel };

std::string task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

struct OutcomeLabel {
    TaskKind task = TaskKind::binary;
    int value = 0;               // binary / multiclass
    std::vector<int> bits;       // multilabel
};

struct CohortStay {
    std::string stay_id;
    std::string patient_id;
    // Raw long-format series gathered into a [T_raw, F] grid over the stay's
    // distinct observation times. mask[t*F+f] == 1 means observed.
    std::vector<double> series;
    std::vector<std::uint8_t> mask;
    std::vector<double> timestamps;  // minutes since admission, strictly increasing
    int n_vars = 0;
    std::vector<double> context;     // [age_years, gender one-hot..., race one-hot...]
    ConditionCode condition;         // primary level-3 code
    std::vector<ConditionCode> diagnoses;  // full level-3 code set, primary included
    std::set<std::string> drugs;
    OutcomeLabel outcome;
    double stay_hours = 0.0;
};

struct Cohort {
    std::vector<CohortStay> stays;
    std::vector<std::string> variables;      // column f of every series grid
    std::vector<std::string> context_names;  // layout of CohortStay::context
    TaskKind task = TaskKind::binary;
    int n_classes = 2;  // classes (multiclass) or labels (multilabel)
};

struct CohortSplit {
    std::vector<std::string> train, valid, test;  // stay ids
};

// "428.23" -> "428". Strips '.' and truncates to the first three characters.
ConditionCode assign_primary_condition(const std::string& raw_icd);

// Keeps stays with stay_hours >= min_hours whose condition retains at least
// min_patients_per_condition distinct patients afterwards. Order preserved.
std::vector<CohortStay> filter_cohort(const std::vector<CohortStay>& stays,
                                      double min_hours,
                                      int min_patients_per_condition);

// Patient-level stratified split with largest-remainder apportionment per
// condition. fractions must sum to 1.
CohortSplit split_cohort(const std::vector<CohortStay>& stays,
                         const std::array<double, 3>& fractions,
                         std::uint64_t seed);

// Reads the JSON manifest {stays_csv, series_csv, drugs_csv, outcomes_csv,
// task}; CSV paths are resolved relative to the manifest's directory.
Cohort load_cohort(const std::filesystem::path& manifest_path);

}  // namespace rarecast
