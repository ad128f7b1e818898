#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rarecast/metrics.hpp"
#include "rarecast/model.hpp"

namespace rarecast {

struct AblationFlags {
    bool no_selection = false;
    bool no_pretrain = false;
    bool no_adaptation = false;
};

struct TrainConfig {
    int max_epochs = 100;
    int patience = 10;  // epochs without validation improvement
    int batch_size = 32;
    double base_lr = 5e-4;
    double disc_lr = 5e-4;
    double lambda = 0.01;
    int disc_update_freq = 1;
    int hidden_dim = 128;
    bool uniform_weights = false;   // plain-backbone baselines
    int target_train_limit = 0;     // cap on target training stays; 0 = off
    double target_train_fraction = 1.0;
    AblationFlags ablation;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochRow {
    std::string phase;  // "pretrain" or "adapt"
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;  // pretrain MSE or encoder objective
    double pred_loss = 0.0;
    double adv_loss = 0.0;
    double val_loss = 0.0;
    std::optional<double> val_auprc, val_auroc;
    double wall_ms = 0.0;
};

struct RunRecord {
    std::vector<EpochRow> rows;
    int best_pretrain_epoch = -1;
    int best_adapt_epoch = -1;
};

void write_record_csv(const std::filesystem::path& path, const RunRecord& record);

// Step 1: condition-agnostic pretraining over the full training split, early
// stopped on validation next-step loss. Leaves the best-epoch parameters in
// net.
void pretrain(Network& net, const std::vector<const ProcessedStay*>& train,
              const std::vector<const ProcessedStay*>& valid, const TrainConfig& cfg,
              RunRecord& record);

struct AdaptPool {
    std::vector<const ProcessedStay*> stays;  // sources then target, train split
    std::vector<int> domain_ids;              // aligned; target = n_domains - 1
    std::vector<double> raw_weights;          // inverse propensity, unnormalized
    int n_domains = 1;
};

// Step 2: adversarial adaptation over the mixed pool; early stopped on the
// target's validation AUPRC. Leaves the best-epoch parameters in net.
void adapt(Network& net, const AdaptPool& pool,
           const std::vector<const ProcessedStay*>& target_valid,
           const TrainConfig& cfg, RunRecord& record);

struct EvalResult {
    std::optional<double> auroc, auprc;
    struct PerClass {
        int cls = 0;
        std::optional<double> auroc, auprc;
    };
    std::vector<PerClass> per_class;  // multiclass / multilabel only
    int excluded_classes = 0;
    int n_test = 0;
    double prevalence = 0.0;
};

EvalResult evaluate(const Network& net, const std::vector<const ProcessedStay*>& test,
                    TaskKind task);

// Positive-class score (binary) used for ranking metrics.
double binary_score(const Network& net, const ProcessedStay& stay);

struct SeedStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

// Aggregates per-seed metric maps; only metrics present for every seed are
// reported.
std::map<std::string, SeedStats> run_seeds(
    const std::function<std::map<std::string, double>(std::uint64_t)>& runner,
    const std::vector<std::uint64_t>& seeds);

}  // namespace rarecast
