#pragma once

#include <optional>
#include <vector>

namespace rarecast {

struct ScoredLabels {
    std::vector<double> scores;
    std::vector<int> labels;  // 0/1
};

// Mann-Whitney AUROC with half credit for tied scores.
// Throws UndefinedMetric when a class is absent.
double auroc(const ScoredLabels& sl);

// Average precision with tied scores grouped into one threshold step.
// Throws UndefinedMetric when there is no positive.
double auprc(const ScoredLabels& sl);

struct MacroResult {
    double value = 0.0;
    int excluded = 0;  // classes where the metric was undefined
};

// Unweighted mean over classes where the metric is defined.
MacroResult macro(const std::vector<std::optional<double>>& per_class);

}  // namespace rarecast
