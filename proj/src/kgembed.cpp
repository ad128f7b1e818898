#include "rarecast/kgembed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "rarecast/adam.hpp"
#include "rarecast/checkpoint.hpp"
#include "rarecast/csv.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/nn.hpp"
#include "rarecast/rng.hpp"
#include "rarecast/util.hpp"

namespace rarecast {

int TuckerModel::index_of(const ConditionCode& code) const {
    const auto it = std::lower_bound(conditions.begin(), conditions.end(), code);
    if (it == conditions.end() || *it != code)
        throw UnknownCondition("condition " + code + " not in embedding");
    return int(it - conditions.begin());
}

double tucker_score(const TuckerModel& m, int head, int rel, int tail) {
    const int d = m.dim;
    const double* eh = m.E.data() + std::size_t(head) * d;
    const double* rr = m.R.data() + std::size_t(rel) * d;
    const double* et = m.E.data() + std::size_t(tail) * d;
    // u[b,c] = sum_a eh[a] W[a,b,c]; score = sum_{b,c} rr[b] u[b,c] et[c]
    double score = 0.0;
    for (int b = 0; b < d; ++b) {
        double row = 0.0;
        for (int c = 0; c < d; ++c) {
            double u = 0.0;
            const double* w = m.W.data() + std::size_t(b) * d + std::size_t(c);
            for (int a = 0; a < d; ++a) u += eh[a] * w[std::size_t(a) * d * d];
            row += u * et[c];
        }
        score += rr[b] * row;
    }
    return score;
}

void tucker_score_backward(const TuckerModel& m, int head, int rel, int tail,
                           double dscore, Tensor& gE, Tensor& gR, Tensor& gW) {
    const int d = m.dim;
    const double* eh = m.E.data() + std::size_t(head) * d;
    const double* rr = m.R.data() + std::size_t(rel) * d;
    const double* et = m.E.data() + std::size_t(tail) * d;
    double* geh = gE.data() + std::size_t(head) * d;
    double* grr = gR.data() + std::size_t(rel) * d;
    double* get = gE.data() + std::size_t(tail) * d;

    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            const double ehr = eh[a] * rr[b];
            const double* w = m.W.data() + (std::size_t(a) * d + std::size_t(b)) * d;
            double* gw = gW.data() + (std::size_t(a) * d + std::size_t(b)) * d;
            double acc_a = 0.0;
            for (int c = 0; c < d; ++c) {
                acc_a += w[c] * rr[b] * et[c];
                grr[b] += dscore * eh[a] * w[c] * et[c];
                get[c] += dscore * ehr * w[c];
                gw[c] += dscore * ehr * et[c];
            }
            geh[a] += dscore * acc_a;
        }
    }
}

TuckerModel train_tucker(const ConditionGraph& graph, const TuckerTrainConfig& cfg) {
    if (graph.edges.empty() || graph.nodes.empty())
        throw EmptyGraph("train_tucker: empty graph");
    if (cfg.dim < 1) throw ConfigError("tucker dim must be >= 1");

    TuckerModel m;
    m.conditions = graph.nodes;
    std::sort(m.conditions.begin(), m.conditions.end());
    const int n = int(m.conditions.size());
    const int d = cfg.dim;
    m.dim = d;
    m.E = Tensor::zeros({std::size_t(n), std::size_t(d)});
    m.R = Tensor::zeros({3, std::size_t(d)});
    m.W = Tensor::zeros({std::size_t(d), std::size_t(d), std::size_t(d)});

    Rng init_rng = derive_rng(cfg.seed, "tucker-init");
    for (auto& x : m.E.v) x = init_rng.uniform(-0.1, 0.1);
    for (auto& x : m.R.v) x = init_rng.uniform(-0.1, 0.1);
    for (auto& x : m.W.v) x = init_rng.uniform(-0.1, 0.1);

    struct Triple {
        int h, r, t;
    };
    std::vector<Triple> positives;
    std::vector<std::set<int>> adjacency(std::size_t(n) * 3);
    for (const auto& e : graph.edges) {
        const int h = m.index_of(e.head), t = m.index_of(e.tail);
        const int r = int(e.rel);
        positives.push_back({h, r, t});
        adjacency[std::size_t(h) * 3 + std::size_t(r)].insert(t);
    }

    TuckerModel best = m;
    double best_loss = std::numeric_limits<double>::infinity();

    Tensor gE = Tensor::zeros(m.E.shape);
    Tensor gR = Tensor::zeros(m.R.shape);
    Tensor gW = Tensor::zeros(m.W.shape);
    ParamSet params, grads;
    params.add("E", &m.E);
    params.add("R", &m.R);
    params.add("W", &m.W);
    grads.add("E", &gE);
    grads.add("R", &gR);
    grads.add("W", &gW);
    AdamState adam;
    adam.init(params.total());

    Rng neg_rng = derive_rng(cfg.seed, "tucker-neg");
    auto clamped_log = [](double x) { return std::log(std::max(x, 1e-12)); };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        gE.fill(0.0);
        gR.fill(0.0);
        gW.fill(0.0);
        double loss = 0.0;
        long count = 0;
        for (const auto& pos : positives) {
            const double s = tucker_score(m, pos.h, pos.r, pos.t);
            const double p = logistic(s);
            loss += -clamped_log(p);
            tucker_score_backward(m, pos.h, pos.r, pos.t, p - 1.0, gE, gR, gW);
            ++count;

            const auto& taken = adjacency[std::size_t(pos.h) * 3 + std::size_t(pos.r)];
            if (int(taken.size()) >= n) continue;  // nothing left to corrupt
            for (int j = 0; j < cfg.negatives_per_positive; ++j) {
                int t2;
                do {
                    t2 = int(neg_rng.below(std::uint64_t(n)));
                } while (taken.count(t2));
                const double s2 = tucker_score(m, pos.h, pos.r, t2);
                const double p2 = logistic(s2);
                loss += -clamped_log(1.0 - p2);
                tucker_score_backward(m, pos.h, pos.r, t2, p2, gE, gR, gW);
                ++count;
            }
        }
        loss /= double(count);
        const double inv = 1.0 / double(count);
        for (auto& x : gE.v) x *= inv;
        for (auto& x : gR.v) x *= inv;
        for (auto& x : gW.v) x *= inv;
        adam_step(adam, params, grads, cfg.lr);
        if (loss < best_loss) {
            best_loss = loss;
            best = m;
        }
    }
    return cfg.epochs > 0 ? best : m;
}

SelectionResult select_sources(const TuckerModel& m, const ConditionCode& target, int k) {
    const int n = int(m.conditions.size());
    if (k < 1 || k > n - 1)
        throw ConfigError("select_sources: k must be in [1, |V|-1]");
    const int ti = m.index_of(target);
    const int d = m.dim;
    auto norm = [&](int i) {
        double acc = 0.0;
        const double* e = m.E.data() + std::size_t(i) * d;
        for (int a = 0; a < d; ++a) acc += e[a] * e[a];
        return std::sqrt(acc);
    };
    const double tn = norm(ti);
    if (tn == 0.0) throw ZeroVector("target embedding has zero norm");
    std::vector<std::pair<ConditionCode, double>> scored;
    for (int i = 0; i < n; ++i) {
        if (i == ti) continue;
        const double sn = norm(i);
        if (sn == 0.0)
            throw ZeroVector("embedding of " + m.conditions[std::size_t(i)] + " has zero norm");
        double dot = 0.0;
        const double* a = m.E.data() + std::size_t(ti) * d;
        const double* b = m.E.data() + std::size_t(i) * d;
        for (int c = 0; c < d; ++c) dot += a[c] * b[c];
        scored.emplace_back(m.conditions[std::size_t(i)], dot / (tn * sn));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });
    SelectionResult sel;
    sel.target = target;
    sel.sources.assign(scored.begin(), scored.begin() + k);
    return sel;
}

int default_k(int n_conditions) {
    if (n_conditions < 2) throw ConfigError("default_k needs at least 2 conditions");
    const int k = int(std::ceil(0.10 * double(n_conditions)));
    return std::clamp(k, 1, n_conditions - 1);
}

void save_embeddings(const std::filesystem::path& path, const TuckerModel& m) {
    std::vector<std::string> header = {"condition"};
    for (int a = 0; a < m.dim; ++a) header.push_back("dim_" + std::to_string(a));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < m.conditions.size(); ++i) {
        std::vector<std::string> row = {m.conditions[i]};
        for (int a = 0; a < m.dim; ++a)
            row.push_back(fmt_exact(m.E.v[i * std::size_t(m.dim) + std::size_t(a)]));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

void save_selection(const std::filesystem::path& path, const SelectionResult& sel) {
    nlohmann::json j;
    j["target"] = sel.target;
    j["k"] = sel.sources.size();
    auto sources = nlohmann::json::array();
    for (const auto& [code, cosine] : sel.sources)
        sources.push_back({{"code", code}, {"cosine", cosine}});
    j["sources"] = std::move(sources);
    write_text_file(path, j.dump(2) + "\n");
}

SelectionResult load_selection(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    SelectionResult sel;
    sel.target = j.at("target").get<std::string>();
    for (const auto& s : j.at("sources"))
        sel.sources.emplace_back(s.at("code").get<std::string>(),
                                 s.at("cosine").get<double>());
    return sel;
}

void save_tucker(const std::filesystem::path& path, const TuckerModel& m) {
    save_checkpoint(path, {{"E", &m.E}, {"R", &m.R}, {"W", &m.W}});
}

}  // namespace rarecast
