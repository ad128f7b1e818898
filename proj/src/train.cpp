#include "rarecast/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "rarecast/adam.hpp"
#include "rarecast/csv.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/util.hpp"

namespace rarecast {

void TrainConfig::validate() const {
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (disc_update_freq < 1) throw ConfigError("disc_update_freq must be >= 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (target_train_fraction <= 0.0 || target_train_fraction > 1.0)
        throw ConfigError("target_train_fraction must be in (0, 1]");
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += std::size_t(batch_size))
        batches.emplace_back(order.begin() + long(start),
                             order.begin() + long(std::min(n, start + std::size_t(batch_size))));
    return batches;
}

double ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string cell(double v) { return fmt_g(v, 9); }

}  // namespace

void write_record_csv(const std::filesystem::path& path, const RunRecord& record) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : record.rows) {
        rows.push_back({r.phase, std::to_string(r.epoch), cell(r.lr), cell(r.train_loss),
                        cell(r.pred_loss), cell(r.adv_loss), cell(r.val_loss),
                        r.val_auprc ? cell(*r.val_auprc) : "",
                        r.val_auroc ? cell(*r.val_auroc) : "", cell(r.wall_ms)});
    }
    write_csv(path,
              {"phase", "epoch", "lr", "train_loss", "pred_loss", "adv_loss", "val_loss",
               "val_auprc", "val_auroc", "wall_ms"},
              rows);
}

void pretrain(Network& net, const std::vector<const ProcessedStay*>& train,
              const std::vector<const ProcessedStay*>& valid, const TrainConfig& cfg,
              RunRecord& record) {
    cfg.validate();
    if (train.empty()) throw EmptyCohort("pretrain: empty training split");

    Network grads = net.zero_clone();
    ParamSet params = net.pretrain_params();
    ParamSet gparams = grads.pretrain_params();
    AdamState adam;
    adam.init(params.total());
    LrSchedule sched{cfg.base_lr};
    Rng batch_rng = derive_rng(cfg.seed, "pretrain-batch");

    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    std::vector<double> snapshot = flatten_values(params);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = sched.lr(epoch);
        double train_loss = 0.0;
        std::size_t seen = 0;
        for (const auto& batch_idx : make_batches(train.size(), cfg.batch_size, batch_rng)) {
            std::vector<const ProcessedStay*> batch;
            for (auto i : batch_idx) batch.push_back(train[i]);
            for (auto& [name, t] : gparams.items) t->fill(0.0);
            const double loss = pretrain_loss(net, batch, &grads);
            adam_step(adam, params, gparams, lr);
            train_loss += loss * double(batch.size());
            seen += batch.size();
        }
        train_loss /= double(seen);
        const double val_loss = valid.empty() ? train_loss : pretrain_loss(net, valid, nullptr);

        EpochRow row;
        row.phase = "pretrain";
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = train_loss;
        row.val_loss = val_loss;
        row.wall_ms = ms_since(t0);
        record.rows.push_back(row);

        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            snapshot = flatten_values(params);
        } else if (epoch - best_epoch >= cfg.patience) {
            break;
        }
    }

    std::size_t k = 0;
    for (auto& [name, t] : params.items)
        for (auto& x : t->v) x = snapshot[k++];
    record.best_pretrain_epoch = best_epoch;
}

namespace {

// Validation metric for adaptation: target AUPRC when defined, otherwise the
// negated validation prediction loss so early stopping still has a signal.
struct ValMetrics {
    double stopping = 0.0;
    double loss = 0.0;
    std::optional<double> auprc, auroc;
};

ValMetrics validation_metrics(const Network& net,
                              const std::vector<const ProcessedStay*>& valid) {
    ValMetrics m;
    if (valid.empty()) throw EmptyCohort("adapt: target has no validation stays");
    double loss = 0.0;
    for (const auto* s : valid) {
        const auto logits = predict(net, *s);
        loss += prediction_loss(net.task, logits, s->outcome, 1.0);
    }
    m.loss = loss / double(valid.size());

    const EvalResult ev = evaluate(net, valid, net.task);
    m.auprc = ev.auprc;
    m.auroc = ev.auroc;
    m.stopping = m.auprc ? *m.auprc : -m.loss;
    return m;
}

}  // namespace

void adapt(Network& net, const AdaptPool& pool,
           const std::vector<const ProcessedStay*>& target_valid,
           const TrainConfig& cfg, RunRecord& record) {
    cfg.validate();
    if (pool.stays.empty()) throw MissingDomain("adapt: empty adaptation pool");
    if (pool.stays.size() != pool.domain_ids.size() ||
        pool.stays.size() != pool.raw_weights.size())
        throw ShapeMismatch("adapt: pool arrays disagree");
    if (net.n_domains != pool.n_domains)
        throw ShapeMismatch("adapt: discriminator width does not match pool domains");

    Network enc_grads = net.zero_clone();
    Network disc_grads = net.zero_clone();
    ParamSet enc = net.adapt_params();
    ParamSet genc = enc_grads.adapt_params();
    ParamSet disc = net.disc_params();
    ParamSet gdisc = disc_grads.disc_params();
    AdamState adam_enc, adam_disc;
    adam_enc.init(enc.total());
    adam_disc.init(disc.total());
    LrSchedule enc_sched{cfg.base_lr};
    LrSchedule disc_sched{cfg.disc_lr};
    Rng batch_rng = derive_rng(cfg.seed, "adapt-batch");

    ParamSet all = net.all_params();
    double best_metric = -std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    std::vector<double> snapshot = flatten_values(all);

    const bool adversarial = cfg.lambda > 0.0 && pool.n_domains > 1;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = enc_sched.lr(epoch);
        const double dlr = disc_sched.lr(epoch);
        double pred_sum = 0.0, adv_sum = 0.0;
        std::size_t seen = 0;

        for (const auto& batch_idx : make_batches(pool.stays.size(), cfg.batch_size, batch_rng)) {
            DomainBatch batch;
            for (auto i : batch_idx) {
                batch.stays.push_back(pool.stays[i]);
                batch.domain_ids.push_back(pool.domain_ids[i]);
                batch.weights.push_back(cfg.uniform_weights ? 1.0 : pool.raw_weights[i]);
            }
            if (!cfg.uniform_weights) normalize_weights(batch.weights);

            std::vector<SampleForward> fwd(batch.stays.size());
            for (std::size_t i = 0; i < batch.stays.size(); ++i)
                forward_sample(net, *batch.stays[i], fwd[i]);

            if (adversarial) {
                for (int k = 0; k < cfg.disc_update_freq; ++k) {
                    for (auto& [name, t] : gdisc.items) t->fill(0.0);
                    disc_backward(net, fwd, batch, disc_grads);
                    adam_step(adam_disc, disc, gdisc, dlr);
                }
            }

            for (auto& [name, t] : genc.items) t->fill(0.0);
            const AdaptLosses losses =
                adapt_encoder_backward(net, fwd, batch, adversarial ? cfg.lambda : 0.0,
                                       enc_grads);
            adam_step(adam_enc, enc, genc, lr);

            pred_sum += losses.pred * double(batch.stays.size());
            adv_sum += losses.dom * double(batch.stays.size());
            seen += batch.stays.size();
        }

        const ValMetrics val = validation_metrics(net, target_valid);

        EpochRow row;
        row.phase = "adapt";
        row.epoch = epoch;
        row.lr = lr;
        row.pred_loss = pred_sum / double(seen);
        row.adv_loss = adv_sum / double(seen);
        row.train_loss = total_loss(row.pred_loss, row.adv_loss, adversarial ? cfg.lambda : 0.0);
        row.val_loss = val.loss;
        row.val_auprc = val.auprc;
        row.val_auroc = val.auroc;
        row.wall_ms = ms_since(t0);
        record.rows.push_back(row);

        if (val.stopping > best_metric) {
            best_metric = val.stopping;
            best_epoch = epoch;
            snapshot = flatten_values(all);
        } else if (epoch - best_epoch >= cfg.patience) {
            break;
        }
    }

    std::size_t k = 0;
    for (auto& [name, t] : all.items)
        for (auto& x : t->v) x = snapshot[k++];
    record.best_adapt_epoch = best_epoch;
}

double binary_score(const Network& net, const ProcessedStay& stay) {
    const auto logits = predict(net, stay);
    const auto p = squash(TaskKind::binary, logits);
    return p[1];
}

EvalResult evaluate(const Network& net, const std::vector<const ProcessedStay*>& test,
                    TaskKind task) {
    EvalResult out;
    out.n_test = int(test.size());
    if (test.empty()) throw EmptyCohort("evaluate: empty test set");

    if (task == TaskKind::binary) {
        ScoredLabels sl;
        for (const auto* s : test) {
            sl.scores.push_back(binary_score(net, *s));
            sl.labels.push_back(s->outcome.value);
        }
        long pos = 0;
        for (int y : sl.labels) pos += y;
        out.prevalence = double(pos) / double(sl.labels.size());
        try {
            out.auroc = auroc(sl);
        } catch (const UndefinedMetric&) {
            out.excluded_classes = 1;
        }
        try {
            out.auprc = auprc(sl);
        } catch (const UndefinedMetric&) {
        }
        return out;
    }

    // multiclass: one-vs-rest per class; multilabel: per label. Macro mean
    // over classes where the metric is defined.
    std::vector<std::vector<double>> probs;
    probs.reserve(test.size());
    for (const auto* s : test) probs.push_back(squash(task, predict(net, *s)));

    const int n_cls = net.out_width;
    std::vector<std::optional<double>> roc_per(n_cls), prc_per(n_cls);
    double prevalence_sum = 0.0;
    for (int c = 0; c < n_cls; ++c) {
        ScoredLabels sl;
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto& y = test[i]->outcome;
            const int bit = task == TaskKind::multilabel ? y.bits[std::size_t(c)]
                                                         : (y.value == c ? 1 : 0);
            sl.scores.push_back(probs[i][std::size_t(c)]);
            sl.labels.push_back(bit);
        }
        long pos = 0;
        for (int y : sl.labels) pos += y;
        prevalence_sum += double(pos) / double(sl.labels.size());
        EvalResult::PerClass pc;
        pc.cls = c;
        try {
            pc.auroc = auroc(sl);
        } catch (const UndefinedMetric&) {
        }
        try {
            pc.auprc = auprc(sl);
        } catch (const UndefinedMetric&) {
        }
        roc_per[std::size_t(c)] = pc.auroc;
        prc_per[std::size_t(c)] = pc.auprc;
        out.per_class.push_back(pc);
    }
    out.prevalence = prevalence_sum / double(n_cls);
    try {
        const auto m = macro(roc_per);
        out.auroc = m.value;
        out.excluded_classes = m.excluded;
    } catch (const UndefinedMetric&) {
        out.excluded_classes = n_cls;
    }
    try {
        out.auprc = macro(prc_per).value;
    } catch (const UndefinedMetric&) {
    }
    return out;
}

std::map<std::string, SeedStats> run_seeds(
    const std::function<std::map<std::string, double>(std::uint64_t)>& runner,
    const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw ConfigError("run_seeds needs at least 2 seeds");
    std::map<std::string, std::vector<double>> values;
    for (const auto seed : seeds)
        for (const auto& [key, v] : runner(seed)) values[key].push_back(v);
    std::map<std::string, SeedStats> out;
    for (const auto& [key, vs] : values) {
        if (vs.size() != seeds.size()) continue;  // metric absent for some seed
        SeedStats st;
        for (double v : vs) st.mean += v;
        st.mean /= double(vs.size());
        for (double v : vs) st.stddev += (v - st.mean) * (v - st.mean);
        st.stddev = std::sqrt(st.stddev / double(vs.size()));
        out[key] = st;
    }
    return out;
}

}  // namespace rarecast
