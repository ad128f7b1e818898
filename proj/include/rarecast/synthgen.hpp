#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rarecast/cohort.hpp"

namespace rarecast {

// Synthetic multi-condition cohort with planted similarity structure:
// conditions in one cluster share AR(1) dynamics, baseline offsets, drug
// vocabulary, co-diagnosis patterns and outcome rule.
struct SynthSpec {
    int n_conditions = 20;
    int n_clusters = 4;
    int patients_lo = 200;  // per-condition roster range
    int patients_hi = 400;
    int n_vars = 4;
    int windows = 12;  // raw rows, one per aggregation window
    int window_minutes = 60;
    double noise_sigma = 0.4;       // AR(1) innovation scale
    double ar_lo = 0.6, ar_hi = 0.9;
    double missing_rate = 0.3;
    double cluster_mean_spread = 1.2;     // between-cluster offset scale
    double condition_mean_jitter = 0.15;  // within-cluster offset scale
    double label_coef_scale = 1.6;
    double label_bias = -0.4;
    // Odd clusters flip the sign of the outcome rule, so pooling across
    // clusters mixes contradictory label structure.
    bool flip_alternate_clusters = true;
    double codiag_same_cluster_prob = 0.7;
    int drugs_per_cluster = 12;
    int drugs_per_condition = 9;
    double drug_stay_prob = 0.6;
    std::uint64_t seed = 1;
    // Conditions subsampled to a fixed patient count (make_rare).
    std::map<std::string, int> rare_n;

    int cluster_of_index(int condition_index) const;
    std::string code_of_index(int condition_index) const;
};

struct SynthTruth {
    std::vector<ConditionCode> conditions;
    std::vector<int> cluster_of;
    std::vector<std::vector<double>> similarity;  // 1 same cluster, 0 otherwise
    // Per-variable AR coefficient and innovation sigma per cluster; used by
    // tests that need the irreducible next-step noise floor.
    std::vector<std::vector<double>> ar_coeff;
    std::vector<std::vector<double>> ar_sigma;
};

struct SynthOutput {
    Cohort cohort;
    SynthTruth truth;
};

SynthOutput generate(const SynthSpec& spec);

// Returns a spec whose generation subsamples `condition` to n patients while
// keeping at least one positive outcome sample.
SynthSpec make_rare(const SynthSpec& spec, const ConditionCode& condition, int n);

// Writes stays/series/drugs/outcomes CSVs plus manifest.json and truth.json;
// returns the manifest path. The files round-trip through load_cohort.
std::filesystem::path write_synth_csvs(const std::filesystem::path& dir,
                                       const SynthOutput& out);

}  // namespace rarecast
