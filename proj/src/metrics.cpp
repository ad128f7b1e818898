#include "rarecast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rarecast/errors.hpp"

namespace rarecast {

namespace {

void validate(const ScoredLabels& sl) {
    if (sl.scores.size() != sl.labels.size())
        throw ShapeMismatch("scores/labels length mismatch");
    if (sl.scores.empty()) throw UndefinedMetric("empty score list");
    for (double s : sl.scores)
        if (!std::isfinite(s)) throw ShapeMismatch("non-finite score");
}

}  // namespace

double auroc(const ScoredLabels& sl) {
    validate(sl);
    const std::size_t n = sl.scores.size();
    std::size_t pos = 0;
    for (int y : sl.labels) pos += std::size_t(y != 0);
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0)
        throw UndefinedMetric("auroc needs both classes present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sl.scores[a] < sl.scores[b];
    });

    // Rank-sum with average ranks over tie groups.
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && sl.scores[order[j]] == sl.scores[order[i]]) ++j;
        const double avg_rank = 0.5 * double(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (sl.labels[order[k]] != 0) pos_rank_sum += avg_rank;
        i = j;
    }
    return (pos_rank_sum - double(pos) * double(pos + 1) / 2.0) /
           (double(pos) * double(neg));
}

double auprc(const ScoredLabels& sl) {
    validate(sl);
    const std::size_t n = sl.scores.size();
    std::size_t pos = 0;
    for (int y : sl.labels) pos += std::size_t(y != 0);
    if (pos == 0) throw UndefinedMetric("auprc needs at least one positive");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sl.scores[a] > sl.scores[b];
    });

    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t group_pos = 0;
        while (j < n && sl.scores[order[j]] == sl.scores[order[i]]) {
            group_pos += std::size_t(sl.labels[order[j]] != 0);
            ++j;
        }
        tp += group_pos;
        seen = j;
        const double precision = double(tp) / double(seen);
        ap += precision * double(group_pos) / double(pos);
        i = j;
    }
    return ap;
}

MacroResult macro(const std::vector<std::optional<double>>& per_class) {
    MacroResult r;
    double acc = 0.0;
    int defined = 0;
    for (const auto& v : per_class) {
        if (v.has_value()) {
            acc += *v;
            ++defined;
        } else {
            ++r.excluded;
        }
    }
    if (defined == 0) throw UndefinedMetric("metric undefined for every class");
    r.value = acc / double(defined);
    return r;
}

}  // namespace rarecast
