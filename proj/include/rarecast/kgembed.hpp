#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rarecast/condkg.hpp"
#include "rarecast/tensor.hpp"

namespace rarecast {

// Tucker factorization of the condition graph: entity embeddings E [|V|, d],
// relation embeddings R [3, d] and a shared core W [d, d, d].
struct TuckerModel {
    std::vector<ConditionCode> conditions;  // frozen row order of E
    Tensor E, R, W;
    int dim = 0;

    int index_of(const ConditionCode& code) const;
};

// Raw triple score: sum_{a,b,c} W[a,b,c] E[head,a] R[rel,b] E[tail,c].
double tucker_score(const TuckerModel& m, int head, int rel, int tail);

// Accumulates d(score)/d{E,R,W} scaled by dscore into the gradient tensors.
void tucker_score_backward(const TuckerModel& m, int head, int rel, int tail,
                           double dscore, Tensor& gE, Tensor& gR, Tensor& gW);

struct TuckerTrainConfig {
    int dim = 32;
    int epochs = 200;
    int negatives_per_positive = 5;
    double lr = 0.01;
    std::uint64_t seed = 1;
};

// Logistic binary cross-entropy over surviving edges as positives and
// uniformly corrupted tails as negatives; returns the best-training-loss
// snapshot. Deterministic given the seed.
TuckerModel train_tucker(const ConditionGraph& graph, const TuckerTrainConfig& cfg);

struct SelectionResult {
    ConditionCode target;
    std::vector<std::pair<ConditionCode, double>> sources;  // cosine, non-increasing
};

// Top-k conditions by cosine similarity to the target embedding, target
// excluded, ties broken by code.
SelectionResult select_sources(const TuckerModel& m, const ConditionCode& target, int k);

// ceil(0.10 * n) clamped to [1, n-1].
int default_k(int n_conditions);

void save_embeddings(const std::filesystem::path& path, const TuckerModel& m);
void save_selection(const std::filesystem::path& path, const SelectionResult& sel);
SelectionResult load_selection(const std::filesystem::path& path);

void save_tucker(const std::filesystem::path& path, const TuckerModel& m);

}  // namespace rarecast
