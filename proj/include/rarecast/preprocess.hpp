#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "rarecast/cohort.hpp"

namespace rarecast {

enum class Anchor { first_hours, last_hours };

Anchor anchor_from_name(const std::string& name);
std::string anchor_name(Anchor a);

struct PreprocessConfig {
    int window_minutes = 120;
    int window_count = 24;
    Anchor anchor = Anchor::last_hours;
};

struct ProcessedStay {
    std::string stay_id;
    std::vector<double> x;  // [T, F], fully imputed and normalized
    int T = 0;
    int F = 0;
    std::vector<double> context;
    ConditionCode condition;
    std::vector<ConditionCode> diagnoses;
    std::set<std::string> drugs;
    OutcomeLabel outcome;
};

struct WindowGrid {
    std::vector<double> values;       // [T, F]
    std::vector<std::uint8_t> mask;   // 1 = observed
    int T = 0;
    int F = 0;
};

// Mean per (window, variable) over half-open windows; an observation exactly
// at the span end falls in the last window.
WindowGrid aggregate_windows(const CohortStay& stay, const PreprocessConfig& cfg);

// Observed-cell means on the training split, the final imputation fallback.
struct ImputeMeans {
    std::vector<double> mean;  // length F; 0 for variables never observed
};

// Forward fill, then backward fill, then training mean. Output has no gaps.
std::vector<double> impute(const WindowGrid& grid, const ImputeMeans& means);

struct NormStats {
    std::vector<double> mean, stdev;  // per variable, population std, floored
};

NormStats fit_norm_stats(const std::vector<std::vector<double>>& train_x, int F);
void normalize(std::vector<double>& x, const NormStats& stats, int F);
void denormalize(std::vector<double>& x, const NormStats& stats, int F);

// End-to-end per-split transform fitted on the training split only.
class Preprocessor {
public:
    Preprocessor(PreprocessConfig cfg, double std_floor = 1e-6)
        : cfg_(cfg), std_floor_(std_floor) {}

    void fit(const std::vector<const CohortStay*>& train, int F);
    ProcessedStay transform(const CohortStay& stay) const;

    const PreprocessConfig& config() const { return cfg_; }
    const ImputeMeans& impute_means() const { return impute_means_; }
    const NormStats& norm_stats() const { return norm_stats_; }
    double age_mean() const { return age_mean_; }
    double age_std() const { return age_std_; }

private:
    PreprocessConfig cfg_;
    double std_floor_;
    int F_ = 0;
    ImputeMeans impute_means_;
    NormStats norm_stats_;
    double age_mean_ = 0.0;
    double age_std_ = 1.0;
};

// Processed-split archive: tensors in the shared checkpoint container plus a
// JSON sidecar carrying ids, codes, task and normalization metadata.
struct ProcessedSplit {
    std::vector<ProcessedStay> stays;
    TaskKind task = TaskKind::binary;
    int n_classes = 2;
};

void save_processed(const std::filesystem::path& container_path,
                    const std::filesystem::path& sidecar_path,
                    const ProcessedSplit& split, const std::string& config_hash);
ProcessedSplit load_processed(const std::filesystem::path& container_path,
                              const std::filesystem::path& sidecar_path);

}  // namespace rarecast
