#include "rarecast/model.hpp"

#include <algorithm>
#include <cmath>

#include "rarecast/checkpoint.hpp"
#include "rarecast/errors.hpp"

namespace rarecast {

Network Network::make(TaskKind task, int n_vars, int n_ctx, int n_classes,
                      int n_domains, int hidden, Rng& init_rng) {
    Network net;
    net.task = task;
    net.n_vars = n_vars;
    net.n_ctx = n_ctx;
    net.hidden = hidden;
    net.out_width = task == TaskKind::binary ? 2 : n_classes;
    net.n_domains = n_domains;

    const auto H = std::size_t(hidden);
    net.temporal.resize(H, std::size_t(n_vars));
    net.contextual.resize(H, H, std::size_t(n_ctx));
    net.proj.resize(H, 2 * H);
    net.decoder.resize(std::size_t(n_vars), H, H);
    net.classifier.resize(std::size_t(net.out_width), H, H);
    net.discriminator.resize(std::size_t(n_domains), H, H + std::size_t(net.out_width));

    net.temporal.init(init_rng);
    net.contextual.init(init_rng);
    net.proj.init(init_rng);
    net.decoder.init(init_rng);
    net.classifier.init(init_rng);
    net.discriminator.init(init_rng);
    return net;
}

Network Network::zero_clone() const {
    Network g = *this;
    for (auto& [name, t] : g.all_params().items) t->fill(0.0);
    return g;
}

ParamSet Network::encoder_params() {
    ParamSet p;
    p.add("f_temp.w_ih", &temporal.w_ih);
    p.add("f_temp.w_hh", &temporal.w_hh);
    p.add("f_temp.b", &temporal.b);
    p.add("f_cont.l1.W", &contextual.l1.W);
    p.add("f_cont.l1.b", &contextual.l1.b);
    p.add("f_cont.l2.W", &contextual.l2.W);
    p.add("f_cont.l2.b", &contextual.l2.b);
    p.add("f_proj.W", &proj.W);
    p.add("f_proj.b", &proj.b);
    return p;
}

ParamSet Network::pretrain_params() {
    ParamSet p = encoder_params();
    p.add("f_dec.l1.W", &decoder.l1.W);
    p.add("f_dec.l1.b", &decoder.l1.b);
    p.add("f_dec.l2.W", &decoder.l2.W);
    p.add("f_dec.l2.b", &decoder.l2.b);
    return p;
}

ParamSet Network::adapt_params() {
    ParamSet p = encoder_params();
    p.add("clf.l1.W", &classifier.l1.W);
    p.add("clf.l1.b", &classifier.l1.b);
    p.add("clf.l2.W", &classifier.l2.W);
    p.add("clf.l2.b", &classifier.l2.b);
    return p;
}

ParamSet Network::disc_params() {
    ParamSet p;
    p.add("disc.l1.W", &discriminator.l1.W);
    p.add("disc.l1.b", &discriminator.l1.b);
    p.add("disc.l2.W", &discriminator.l2.W);
    p.add("disc.l2.b", &discriminator.l2.b);
    return p;
}

ParamSet Network::all_params() {
    ParamSet p = pretrain_params();
    p.add("clf.l1.W", &classifier.l1.W);
    p.add("clf.l1.b", &classifier.l1.b);
    p.add("clf.l2.W", &classifier.l2.W);
    p.add("clf.l2.b", &classifier.l2.b);
    p.append(disc_params());
    return p;
}

void encode(const Network& net, const double* x, int T, const double* ctx,
            EncodeCache& cache) {
    if (T < 1) throw ShapeMismatch("encode: empty sequence");
    const auto H = std::size_t(net.hidden);
    cache.T = T;
    cache.ctx_emb.assign(H, 0.0);
    net.contextual.forward(ctx, cache.ctx_emb.data(), &cache.ctx_cache);
    lstm_forward(net.temporal, x, T, cache.lstm);
    cache.proj_in.assign(std::size_t(T) * 2 * H, 0.0);
    cache.h.assign(std::size_t(T) * H, 0.0);
    for (int t = 0; t < T; ++t) {
        double* in = cache.proj_in.data() + std::size_t(t) * 2 * H;
        std::copy_n(cache.lstm.h.data() + std::size_t(t) * H, H, in);
        std::copy_n(cache.ctx_emb.data(), H, in + H);
        net.proj.forward(in, cache.h.data() + std::size_t(t) * H);
    }
}

void encode_backward(const Network& net, const EncodeCache& cache, const double* dh,
                     Network& g) {
    const auto H = std::size_t(net.hidden);
    const int T = cache.T;
    std::vector<double> dlstm_h(std::size_t(T) * H, 0.0);
    std::vector<double> dctx(H, 0.0);
    std::vector<double> dproj_in(2 * H);
    for (int t = T - 1; t >= 0; --t) {
        std::fill(dproj_in.begin(), dproj_in.end(), 0.0);
        net.proj.backward(cache.proj_in.data() + std::size_t(t) * 2 * H,
                          dh + std::size_t(t) * H, g.proj, dproj_in.data());
        for (std::size_t j = 0; j < H; ++j) {
            dlstm_h[std::size_t(t) * H + j] += dproj_in[j];
            dctx[j] += dproj_in[H + j];
        }
    }
    lstm_backward(net.temporal, cache.lstm, dlstm_h.data(), g.temporal, nullptr);
    net.contextual.backward(cache.ctx_cache, dctx.data(), g.contextual, nullptr);
}

double pretrain_loss(const Network& net, const std::vector<const ProcessedStay*>& batch,
                     Network* g) {
    if (batch.empty()) throw EmptyCohort("pretrain_loss: empty batch");
    const int F = net.n_vars;
    double loss = 0.0;
    for (const auto* stay : batch) {
        const int T = stay->T;
        if (T < 2) throw DegenerateSequence("pretrain needs at least 2 time steps");
        EncodeCache cache;
        encode(net, stay->x.data(), T, stay->context.data(), cache);
        const auto H = std::size_t(net.hidden);
        const double scale =
            1.0 / (double(batch.size()) * double(T - 1) * double(F));
        std::vector<double> yhat(std::size_t(F), 0.0);
        std::vector<double> dh(std::size_t(T) * H, 0.0);
        std::vector<Mlp2::Cache> dec_caches(g ? std::size_t(T - 1) : 0);
        std::vector<std::vector<double>> preds(std::size_t(T - 1));
        for (int t = 0; t + 1 < T; ++t) {
            net.decoder.forward(cache.h.data() + std::size_t(t) * H, yhat.data(),
                                g ? &dec_caches[std::size_t(t)] : nullptr);
            const double* next = stay->x.data() + std::size_t(t + 1) * F;
            for (int f = 0; f < F; ++f) {
                const double d = yhat[std::size_t(f)] - next[std::size_t(f)];
                loss += scale * d * d;
            }
            if (g) preds[std::size_t(t)] = yhat;
        }
        if (g) {
            std::vector<double> ddec(std::size_t(F), 0.0);
            for (int t = 0; t + 1 < T; ++t) {
                const double* next = stay->x.data() + std::size_t(t + 1) * F;
                for (int f = 0; f < F; ++f)
                    ddec[std::size_t(f)] =
                        2.0 * scale * (preds[std::size_t(t)][std::size_t(f)] - next[std::size_t(f)]);
                net.decoder.backward(dec_caches[std::size_t(t)], ddec.data(), g->decoder,
                                     dh.data() + std::size_t(t) * H);
            }
            encode_backward(net, cache, dh.data(), *g);
        }
    }
    return loss;
}

std::vector<double> predict(const Network& net, const ProcessedStay& stay) {
    EncodeCache cache;
    encode(net, stay.x.data(), stay.T, stay.context.data(), cache);
    std::vector<double> logits(std::size_t(net.out_width));
    net.classifier.forward(cache.h_last(), logits.data());
    return logits;
}

std::vector<double> squash(TaskKind task, const std::vector<double>& logits) {
    std::vector<double> p(logits.size());
    if (task == TaskKind::multilabel) {
        for (std::size_t i = 0; i < logits.size(); ++i) p[i] = logistic(logits[i]);
    } else {
        softmax(logits, p);
    }
    return p;
}

double propensity_weight(const ConditionCode& condition,
                         const std::map<ConditionCode, long>& train_counts) {
    const auto it = train_counts.find(condition);
    if (it == train_counts.end() || it->second <= 0)
        throw UnknownCondition("no training samples for condition " + condition);
    long total = 0;
    for (const auto& [code, n] : train_counts) total += n;
    return double(total) / double(it->second);
}

void normalize_weights(std::vector<double>& weights) {
    if (weights.empty()) return;
    double sum = 0.0;
    for (double w : weights) sum += w;
    const double scale = double(weights.size()) / sum;
    for (auto& w : weights) w *= scale;
}

double domain_loss(const Network& net, const std::vector<const double*>& h_last,
                   const std::vector<std::vector<double>>& probs,
                   const std::vector<int>& domain_ids) {
    if (h_last.size() != probs.size() || h_last.size() != domain_ids.size())
        throw ShapeMismatch("domain_loss: batch arrays disagree");
    const auto H = std::size_t(net.hidden);
    std::vector<double> disc_in(H + std::size_t(net.out_width));
    std::vector<double> dom_logits(std::size_t(net.n_domains));
    double loss = 0.0;
    for (std::size_t i = 0; i < h_last.size(); ++i) {
        if (int(probs[i].size()) != net.out_width)
            throw ShapeMismatch("domain_loss: prediction width mismatch");
        std::copy_n(h_last[i], H, disc_in.data());
        std::copy_n(probs[i].data(), probs[i].size(), disc_in.data() + H);
        net.discriminator.forward(disc_in.data(), dom_logits.data());
        loss += cross_entropy(dom_logits, domain_ids[i], 1.0);
    }
    return loss / double(h_last.size());
}

double total_loss(double pred_loss, double dom_loss, double lambda) {
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    return pred_loss - lambda * dom_loss;
}

void forward_sample(const Network& net, const ProcessedStay& stay, SampleForward& out) {
    encode(net, stay.x.data(), stay.T, stay.context.data(), out.enc);
    out.logits.assign(std::size_t(net.out_width), 0.0);
    net.classifier.forward(out.enc.h_last(), out.logits.data(), &out.clf_cache);
    out.probs = squash(net.task, out.logits);
    const auto H = std::size_t(net.hidden);
    out.disc_in.assign(H + std::size_t(net.out_width), 0.0);
    std::copy_n(out.enc.h_last(), H, out.disc_in.data());
    std::copy_n(out.probs.data(), out.probs.size(), out.disc_in.data() + H);
}

double disc_backward(const Network& net, const std::vector<SampleForward>& fwd,
                     const DomainBatch& batch, Network& g) {
    const std::size_t B = fwd.size();
    std::vector<double> dom_logits(std::size_t(net.n_domains));
    std::vector<double> ddom(std::size_t(net.n_domains));
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        Mlp2::Cache cache;
        net.discriminator.forward(fwd[i].disc_in.data(), dom_logits.data(), &cache);
        loss += cross_entropy(dom_logits, batch.domain_ids[i], 1.0) / double(B);
        std::fill(ddom.begin(), ddom.end(), 0.0);
        cross_entropy_grad(dom_logits, batch.domain_ids[i], 1.0, 1.0 / double(B),
                           ddom.data());
        net.discriminator.backward(cache, ddom.data(), g.discriminator, nullptr);
    }
    return loss;
}

double prediction_loss(TaskKind task, const std::vector<double>& logits,
                       const OutcomeLabel& y, double weight) {
    if (task == TaskKind::multilabel)
        return bce_multilabel(logits, y.bits, weight);
    return cross_entropy(logits, y.value, weight);
}

AdaptLosses adapt_encoder_backward(const Network& net, const std::vector<SampleForward>& fwd,
                                   const DomainBatch& batch, double lambda, Network& g) {
    const std::size_t B = fwd.size();
    const auto H = std::size_t(net.hidden);
    AdaptLosses losses;
    Network disc_sink = net.zero_clone();  // discriminator grads discarded here

    std::vector<double> dom_logits(std::size_t(net.n_domains));
    std::vector<double> ddom(std::size_t(net.n_domains));
    std::vector<double> ddisc_in(H + std::size_t(net.out_width));

    for (std::size_t i = 0; i < B; ++i) {
        const auto& s = fwd[i];
        const auto& stay = *batch.stays[i];
        const double w = batch.weights[i];
        const double inv_b = 1.0 / double(B);

        losses.pred += inv_b * prediction_loss(net.task, s.logits, stay.outcome, w);

        std::vector<double> dlogits(std::size_t(net.out_width), 0.0);
        if (net.task == TaskKind::multilabel)
            bce_multilabel_grad(s.logits, stay.outcome.bits, w, inv_b, dlogits.data());
        else
            cross_entropy_grad(s.logits, stay.outcome.value, w, inv_b, dlogits.data());

        std::vector<double> dh_last(H, 0.0);
        if (lambda > 0.0) {
            Mlp2::Cache cache;
            net.discriminator.forward(s.disc_in.data(), dom_logits.data(), &cache);
            losses.dom += inv_b * cross_entropy(dom_logits, batch.domain_ids[i], 1.0);
            // encoder maximizes domain confusion: -lambda * dL_adv
            std::fill(ddom.begin(), ddom.end(), 0.0);
            cross_entropy_grad(dom_logits, batch.domain_ids[i], 1.0, -lambda * inv_b,
                               ddom.data());
            std::fill(ddisc_in.begin(), ddisc_in.end(), 0.0);
            net.discriminator.backward(cache, ddom.data(), disc_sink.discriminator,
                                       ddisc_in.data());
            for (std::size_t j = 0; j < H; ++j) dh_last[j] += ddisc_in[j];
            // through the squashed prediction into the classifier logits
            const double* dp = ddisc_in.data() + H;
            if (net.task == TaskKind::multilabel) {
                for (int j = 0; j < net.out_width; ++j) {
                    const double p = s.probs[std::size_t(j)];
                    dlogits[std::size_t(j)] += dp[j] * p * (1.0 - p);
                }
            } else {
                double dot = 0.0;
                for (int j = 0; j < net.out_width; ++j)
                    dot += dp[j] * s.probs[std::size_t(j)];
                for (int j = 0; j < net.out_width; ++j)
                    dlogits[std::size_t(j)] += s.probs[std::size_t(j)] * (dp[j] - dot);
            }
        }

        net.classifier.backward(s.clf_cache, dlogits.data(), g.classifier, dh_last.data());

        std::vector<double> dh(std::size_t(s.enc.T) * H, 0.0);
        std::copy_n(dh_last.data(), H, dh.data() + std::size_t(s.enc.T - 1) * H);
        encode_backward(net, s.enc, dh.data(), g);
    }
    return losses;
}

void save_network(const std::filesystem::path& path, const Network& net) {
    // all_params() needs a mutable ref; parameters are not modified here.
    auto& mut = const_cast<Network&>(net);
    NamedTensors tensors;
    for (const auto& [name, t] : mut.all_params().items) tensors.emplace_back(name, t);
    save_checkpoint(path, tensors);
}

void load_network(const std::filesystem::path& path, Network& net) {
    const auto tensors = load_checkpoint(path);
    for (auto& [name, t] : net.all_params().items) {
        const auto it = tensors.find(name);
        if (it == tensors.end())
            throw ParseError(path.string() + ": missing tensor " + name);
        if (it->second.shape != t->shape)
            throw ShapeMismatch(path.string() + ": shape mismatch for " + name);
        *t = it->second;
    }
}

}  // namespace rarecast
