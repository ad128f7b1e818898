#include "rarecast/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "rarecast/checkpoint.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/util.hpp"

namespace rarecast {

Anchor anchor_from_name(const std::string& name) {
    if (name == "first_hours") return Anchor::first_hours;
    if (name == "last_hours") return Anchor::last_hours;
    throw ConfigError("unknown anchor '" + name + "'");
}

std::string anchor_name(Anchor a) {
    return a == Anchor::first_hours ? "first_hours" : "last_hours";
}

WindowGrid aggregate_windows(const CohortStay& stay, const PreprocessConfig& cfg) {
    if (cfg.window_minutes <= 0 || cfg.window_count <= 0)
        throw ConfigError("window_minutes and window_count must be positive");
    const int T = cfg.window_count, F = stay.n_vars;
    WindowGrid grid;
    grid.T = T;
    grid.F = F;
    grid.values.assign(std::size_t(T) * F, 0.0);
    grid.mask.assign(std::size_t(T) * F, 0);

    const double span = double(cfg.window_count) * cfg.window_minutes;
    const double start =
        cfg.anchor == Anchor::first_hours ? 0.0 : stay.stay_hours * 60.0 - span;
    const double end = start + span;

    std::vector<double> sum(std::size_t(T) * F, 0.0);
    std::vector<int> count(std::size_t(T) * F, 0);
    for (std::size_t t = 0; t < stay.timestamps.size(); ++t) {
        const double minute = stay.timestamps[t];
        if (minute < start || minute > end) continue;
        // Half-open [w_start, w_end); the span's end point joins the last window.
        int w = int(std::floor((minute - start) / cfg.window_minutes));
        if (w == T) w = T - 1;
        if (w < 0 || w >= T) continue;
        for (int f = 0; f < F; ++f) {
            const std::size_t cell = t * std::size_t(F) + std::size_t(f);
            if (!stay.mask[cell]) continue;
            sum[std::size_t(w) * F + std::size_t(f)] += stay.series[cell];
            ++count[std::size_t(w) * F + std::size_t(f)];
        }
    }
    for (std::size_t i = 0; i < sum.size(); ++i) {
        if (count[i] > 0) {
            grid.values[i] = sum[i] / count[i];
            grid.mask[i] = 1;
        }
    }
    return grid;
}

std::vector<double> impute(const WindowGrid& grid, const ImputeMeans& means) {
    const int T = grid.T, F = grid.F;
    if (int(means.mean.size()) != F)
        throw ShapeMismatch("impute: means length does not match variables");
    std::vector<double> x = grid.values;
    for (int f = 0; f < F; ++f) {
        // forward fill
        bool have = false;
        double last = 0.0;
        std::vector<std::uint8_t> filled(std::size_t(T), 0);
        for (int t = 0; t < T; ++t) {
            const std::size_t cell = std::size_t(t) * F + std::size_t(f);
            if (grid.mask[cell]) {
                last = x[cell];
                have = true;
                filled[std::size_t(t)] = 1;
            } else if (have) {
                x[cell] = last;
                filled[std::size_t(t)] = 1;
            }
        }
        // backward fill for the leading gap
        have = false;
        for (int t = T - 1; t >= 0; --t) {
            const std::size_t cell = std::size_t(t) * F + std::size_t(f);
            if (filled[std::size_t(t)]) {
                last = x[cell];
                have = true;
            } else if (have) {
                x[cell] = last;
                filled[std::size_t(t)] = 1;
            }
        }
        // training-mean fallback for all-missing columns
        for (int t = 0; t < T; ++t) {
            const std::size_t cell = std::size_t(t) * F + std::size_t(f);
            if (!filled[std::size_t(t)]) x[cell] = means.mean[std::size_t(f)];
        }
    }
    return x;
}

NormStats fit_norm_stats(const std::vector<std::vector<double>>& train_x, int F) {
    if (train_x.empty()) throw EmptyCohort("fit_norm_stats: empty training split");
    NormStats stats;
    stats.mean.assign(std::size_t(F), 0.0);
    stats.stdev.assign(std::size_t(F), 0.0);
    std::vector<long> n(std::size_t(F), 0);
    for (const auto& x : train_x) {
        const std::size_t T = x.size() / std::size_t(F);
        for (std::size_t t = 0; t < T; ++t)
            for (int f = 0; f < F; ++f) {
                stats.mean[std::size_t(f)] += x[t * std::size_t(F) + std::size_t(f)];
                ++n[std::size_t(f)];
            }
    }
    for (int f = 0; f < F; ++f)
        if (n[std::size_t(f)] > 0) stats.mean[std::size_t(f)] /= double(n[std::size_t(f)]);
    for (const auto& x : train_x) {
        const std::size_t T = x.size() / std::size_t(F);
        for (std::size_t t = 0; t < T; ++t)
            for (int f = 0; f < F; ++f) {
                const double d = x[t * std::size_t(F) + std::size_t(f)] - stats.mean[std::size_t(f)];
                stats.stdev[std::size_t(f)] += d * d;
            }
    }
    for (int f = 0; f < F; ++f) {
        if (n[std::size_t(f)] > 0)
            stats.stdev[std::size_t(f)] = std::sqrt(stats.stdev[std::size_t(f)] / double(n[std::size_t(f)]));
        stats.stdev[std::size_t(f)] = std::max(stats.stdev[std::size_t(f)], 1e-6);
    }
    return stats;
}

void normalize(std::vector<double>& x, const NormStats& stats, int F) {
    const std::size_t T = x.size() / std::size_t(F);
    for (std::size_t t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f) {
            auto& v = x[t * std::size_t(F) + std::size_t(f)];
            v = (v - stats.mean[std::size_t(f)]) / stats.stdev[std::size_t(f)];
        }
}

void denormalize(std::vector<double>& x, const NormStats& stats, int F) {
    const std::size_t T = x.size() / std::size_t(F);
    for (std::size_t t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f) {
            auto& v = x[t * std::size_t(F) + std::size_t(f)];
            v = v * stats.stdev[std::size_t(f)] + stats.mean[std::size_t(f)];
        }
}

void Preprocessor::fit(const std::vector<const CohortStay*>& train, int F) {
    if (train.empty()) throw EmptyCohort("preprocessor fit: empty training split");
    F_ = F;

    // Stage 1: observed-cell means (imputation fallback).
    impute_means_.mean.assign(std::size_t(F), 0.0);
    std::vector<long> n(std::size_t(F), 0);
    for (const auto* stay : train) {
        const auto grid = aggregate_windows(*stay, cfg_);
        for (int t = 0; t < grid.T; ++t)
            for (int f = 0; f < F; ++f) {
                const std::size_t cell = std::size_t(t) * F + std::size_t(f);
                if (grid.mask[cell]) {
                    impute_means_.mean[std::size_t(f)] += grid.values[cell];
                    ++n[std::size_t(f)];
                }
            }
    }
    for (int f = 0; f < F; ++f)
        if (n[std::size_t(f)] > 0) impute_means_.mean[std::size_t(f)] /= double(n[std::size_t(f)]);

    // Stage 2: z-score statistics over imputed training tensors.
    std::vector<std::vector<double>> imputed;
    imputed.reserve(train.size());
    for (const auto* stay : train)
        imputed.push_back(impute(aggregate_windows(*stay, cfg_), impute_means_));
    norm_stats_ = fit_norm_stats(imputed, F);

    // Age statistics for the context vector.
    double sum = 0.0, sq = 0.0;
    for (const auto* stay : train) sum += stay->context.at(0);
    age_mean_ = sum / double(train.size());
    for (const auto* stay : train) {
        const double d = stay->context.at(0) - age_mean_;
        sq += d * d;
    }
    age_std_ = std::max(std::sqrt(sq / double(train.size())), 1e-6);
}

ProcessedStay Preprocessor::transform(const CohortStay& stay) const {
    if (F_ == 0) throw EmptyCohort("preprocessor used before fit");
    ProcessedStay out;
    out.stay_id = stay.stay_id;
    out.T = cfg_.window_count;
    out.F = F_;
    out.x = impute(aggregate_windows(stay, cfg_), impute_means_);
    normalize(out.x, norm_stats_, F_);
    for (double v : out.x)
        if (!std::isfinite(v)) throw ShapeMismatch("non-finite value after preprocessing");
    out.context = stay.context;
    out.context[0] = (out.context[0] - age_mean_) / age_std_;
    out.condition = stay.condition;
    out.diagnoses = stay.diagnoses;
    out.drugs = stay.drugs;
    out.outcome = stay.outcome;
    return out;
}

void save_processed(const std::filesystem::path& container_path,
                    const std::filesystem::path& sidecar_path,
                    const ProcessedSplit& split, const std::string& config_hash) {
    if (split.stays.empty()) throw EmptyCohort("save_processed: empty split");
    const int T = split.stays.front().T, F = split.stays.front().F;
    const std::size_t N = split.stays.size();
    const std::size_t C = split.stays.front().context.size();

    Tensor x = Tensor::zeros({N, std::size_t(T), std::size_t(F)});
    Tensor ctx = Tensor::zeros({N, C});
    const bool multilabel = split.task == TaskKind::multilabel;
    Tensor label = multilabel ? Tensor::zeros({N, std::size_t(split.n_classes)})
                              : Tensor::zeros({N});
    nlohmann::json meta;
    auto ids = nlohmann::json::array();
    auto conditions = nlohmann::json::array();
    auto diagnoses = nlohmann::json::array();
    auto drugs = nlohmann::json::array();
    for (std::size_t i = 0; i < N; ++i) {
        const auto& s = split.stays[i];
        if (s.T != T || s.F != F || s.context.size() != C)
            throw ShapeMismatch("save_processed: inconsistent stay shapes");
        std::copy(s.x.begin(), s.x.end(), x.v.begin() + i * s.x.size());
        std::copy(s.context.begin(), s.context.end(), ctx.v.begin() + i * C);
        if (multilabel) {
            for (int l = 0; l < split.n_classes; ++l)
                label.v[i * std::size_t(split.n_classes) + std::size_t(l)] =
                    double(s.outcome.bits[std::size_t(l)]);
        } else {
            label.v[i] = double(s.outcome.value);
        }
        ids.push_back(s.stay_id);
        conditions.push_back(s.condition);
        diagnoses.push_back(s.diagnoses);
        drugs.push_back(std::vector<std::string>(s.drugs.begin(), s.drugs.end()));
    }
    save_checkpoint(container_path, {{"x", &x}, {"context", &ctx}, {"label", &label}});

    meta["stay_ids"] = std::move(ids);
    meta["conditions"] = std::move(conditions);
    meta["diagnoses"] = std::move(diagnoses);
    meta["drugs"] = std::move(drugs);
    meta["task"] = task_name(split.task);
    meta["n_classes"] = split.n_classes;
    meta["T"] = T;
    meta["F"] = F;
    meta["C"] = C;
    meta["config_hash"] = config_hash;
    write_text_file(sidecar_path, meta.dump(2) + "\n");
}

ProcessedSplit load_processed(const std::filesystem::path& container_path,
                              const std::filesystem::path& sidecar_path) {
    auto tensors = load_checkpoint(container_path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_text_file(sidecar_path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(sidecar_path.string() + ": " + e.what());
    }
    ProcessedSplit split;
    split.task = task_from_name(meta.at("task").get<std::string>());
    split.n_classes = meta.at("n_classes").get<int>();
    const int T = meta.at("T").get<int>(), F = meta.at("F").get<int>();
    const std::size_t C = meta.at("C").get<std::size_t>();
    const auto& x = tensors.at("x");
    const auto& ctx = tensors.at("context");
    const auto& label = tensors.at("label");
    const std::size_t N = x.shape.at(0);
    for (std::size_t i = 0; i < N; ++i) {
        ProcessedStay s;
        s.stay_id = meta.at("stay_ids").at(i).get<std::string>();
        s.condition = meta.at("conditions").at(i).get<std::string>();
        for (const auto& d : meta.at("diagnoses").at(i))
            s.diagnoses.push_back(d.get<std::string>());
        for (const auto& d : meta.at("drugs").at(i))
            s.drugs.insert(d.get<std::string>());
        s.T = T;
        s.F = F;
        s.x.assign(x.v.begin() + i * std::size_t(T) * F,
                   x.v.begin() + (i + 1) * std::size_t(T) * F);
        s.context.assign(ctx.v.begin() + i * C, ctx.v.begin() + (i + 1) * C);
        s.outcome.task = split.task;
        if (split.task == TaskKind::multilabel) {
            for (int l = 0; l < split.n_classes; ++l)
                s.outcome.bits.push_back(
                    int(label.v[i * std::size_t(split.n_classes) + std::size_t(l)]));
        } else {
            s.outcome.value = int(label.v[i]);
        }
        split.stays.push_back(std::move(s));
    }
    return split;
}

}  // namespace rarecast
