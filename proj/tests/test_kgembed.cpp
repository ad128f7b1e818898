#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rarecast/errors.hpp"
#include "rarecast/gradcheck.hpp"
#include "rarecast/kgembed.hpp"
#include "rarecast/nn.hpp"
#include "rarecast/rng.hpp"
#include "rarecast/util.hpp"

using namespace rarecast;

namespace {

// naive triple-loop contraction, the independent oracle for tucker_score
double naive_score(const TuckerModel& m, int h, int r, int t) {
    double acc = 0.0;
    const int d = m.dim;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            for (int c = 0; c < d; ++c)
                acc += m.W.at3(std::size_t(a), std::size_t(b), std::size_t(c)) *
                       m.E.at2(std::size_t(h), std::size_t(a)) *
                       m.R.at2(std::size_t(r), std::size_t(b)) *
                       m.E.at2(std::size_t(t), std::size_t(c));
    return acc;
}

TuckerModel random_model(Rng& rng, int n, int d) {
    TuckerModel m;
    for (int i = 0; i < n; ++i) m.conditions.push_back("c" + std::to_string(10 + i));
    m.dim = d;
    m.E = Tensor::zeros({std::size_t(n), std::size_t(d)});
    m.R = Tensor::zeros({3, std::size_t(d)});
    m.W = Tensor::zeros({std::size_t(d), std::size_t(d), std::size_t(d)});
    for (auto& v : m.E.v) v = rng.normal();
    for (auto& v : m.R.v) v = rng.normal();
    for (auto& v : m.W.v) v = rng.normal();
    return m;
}

// two planted clusters wired densely inside, sparsely across
ConditionGraph two_cluster_graph(int per_cluster) {
    ConditionGraph g;
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < per_cluster; ++i) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "%d%02d", c, c * per_cluster + i);
            g.nodes.push_back(buf);
        }
    auto add_sym = [&](const std::string& a, const std::string& b, Relation rel, double w) {
        g.edges.push_back({a, rel, b, w});
        g.edges.push_back({b, rel, a, w});
    };
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < per_cluster; ++i)
            for (int j = i + 1; j < per_cluster; ++j) {
                add_sym(g.nodes[std::size_t(c * per_cluster + i)],
                        g.nodes[std::size_t(c * per_cluster + j)], Relation::record, 0.9);
                add_sym(g.nodes[std::size_t(c * per_cluster + i)],
                        g.nodes[std::size_t(c * per_cluster + j)], Relation::drug, 0.7);
            }
    return g;
}

}  // namespace

TEST_CASE("tucker score closed forms") {
    // d=1: W=[2], E=[[3],[5]], R=[[7]] -> score(0,0,1) = 2*3*7*5
    TuckerModel m;
    m.conditions = {"a00", "a01"};
    m.dim = 1;
    m.E = Tensor::zeros({2, 1});
    m.R = Tensor::zeros({3, 1});
    m.W = Tensor::zeros({1, 1, 1});
    m.E.v = {3.0, 5.0};
    m.R.v[0] = 7.0;
    m.W.v[0] = 2.0;
    CHECK(tucker_score(m, 0, 0, 1) == doctest::Approx(210.0));

    m.W.v[0] = 0.0;
    CHECK(tucker_score(m, 0, 0, 1) == 0.0);
    CHECK(tucker_score(m, 1, 0, 0) == 0.0);
}

TEST_CASE("tucker score matches the naive triple loop on 100 random models") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + int(rng.below(8));
        const int n = 2 + int(rng.below(6));
        const auto m = random_model(rng, n, d);
        const int h = int(rng.below(std::uint64_t(n)));
        const int t = int(rng.below(std::uint64_t(n)));
        const int r = int(rng.below(3));
        CHECK(std::abs(tucker_score(m, h, r, t) - naive_score(m, h, r, t)) < 1e-12 * std::max(1.0, std::abs(naive_score(m, h, r, t))));
    }
}

TEST_CASE("tucker gradients pass central differences, head==tail included") {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 2 + int(rng.below(3));
        const int n = 3;
        auto m = random_model(rng, n, d);
        const int h = int(rng.below(3));
        const int r = int(rng.below(3));
        const int t = trial % 3 == 0 ? h : int(rng.below(3));  // exercise h == t

        Tensor gE = Tensor::zeros(m.E.shape);
        Tensor gR = Tensor::zeros(m.R.shape);
        Tensor gW = Tensor::zeros(m.W.shape);
        tucker_score_backward(m, h, r, t, 1.0, gE, gR, gW);

        ParamSet params, grads;
        params.add("E", &m.E);
        params.add("R", &m.R);
        params.add("W", &m.W);
        grads.add("E", &gE);
        grads.add("R", &gR);
        grads.add("W", &gW);
        auto f = [&]() { return tucker_score(m, h, r, t); };
        CHECK(grad_check(f, flatten(params), flatten_values(grads), 1e-5) < 1e-4);
    }
}

TEST_CASE("training drives a single positive triple above 0.9") {
    ConditionGraph g;
    g.nodes = {"a00", "a01"};
    g.edges = {{"a00", Relation::diag, "a01", 1.0}};
    TuckerTrainConfig cfg;
    cfg.dim = 4;
    cfg.epochs = 600;
    cfg.lr = 0.05;
    cfg.seed = 3;
    const auto m = train_tucker(g, cfg);
    const double p = logistic(tucker_score(m, m.index_of("a00"), 0, m.index_of("a01")));
    CHECK(p > 0.9);
}

TEST_CASE("zero epochs return the initialization") {
    ConditionGraph g;
    g.nodes = {"a00", "a01"};
    g.edges = {{"a00", Relation::diag, "a01", 1.0}};
    TuckerTrainConfig cfg;
    cfg.dim = 3;
    cfg.epochs = 0;
    cfg.seed = 5;
    const auto m = train_tucker(g, cfg);
    Rng init = derive_rng(5, "tucker-init");
    for (double v : m.E.v) CHECK(v == init.uniform(-0.1, 0.1));
}

TEST_CASE("training is deterministic in the seed") {
    const auto g = two_cluster_graph(4);
    TuckerTrainConfig cfg;
    cfg.dim = 6;
    cfg.epochs = 50;
    cfg.seed = 11;
    const auto a = train_tucker(g, cfg);
    const auto b = train_tucker(g, cfg);
    CHECK(a.E.v == b.E.v);
    CHECK(a.W.v == b.W.v);
}

TEST_CASE("two-cluster graph separates in embedding space") {
    const auto g = two_cluster_graph(5);
    double separation = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TuckerTrainConfig cfg;
        cfg.dim = 8;
        cfg.epochs = 300;
        cfg.lr = 0.02;
        cfg.seed = seed;
        const auto m = train_tucker(g, cfg);
        auto cosine = [&](int i, int j) {
            double dot = 0, ni = 0, nj = 0;
            for (int a = 0; a < m.dim; ++a) {
                const double x = m.E.at2(std::size_t(i), std::size_t(a));
                const double y = m.E.at2(std::size_t(j), std::size_t(a));
                dot += x * y;
                ni += x * x;
                nj += y * y;
            }
            return dot / std::sqrt(ni * nj);
        };
        double intra = 0, inter = 0;
        int n_intra = 0, n_inter = 0;
        const int n = int(m.conditions.size());
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const bool same = m.conditions[std::size_t(i)][0] == m.conditions[std::size_t(j)][0];
                (same ? intra : inter) += cosine(i, j);
                (same ? n_intra : n_inter) += 1;
            }
        separation += intra / n_intra - inter / n_inter;
    }
    CHECK(separation / 5.0 > 0.2);
}

TEST_CASE("select_sources equals a full-sort oracle") {
    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 5 + int(rng.below(10));
        auto m = random_model(rng, n, 4);
        const auto& target = m.conditions[std::size_t(rng.below(std::uint64_t(n)))];
        const int k = 1 + int(rng.below(std::uint64_t(n - 1)));
        const auto sel = select_sources(m, target, k);
        REQUIRE(int(sel.sources.size()) == k);

        // oracle: full sort of all candidates by cosine then code
        const int ti = m.index_of(target);
        std::vector<std::pair<double, std::string>> all;
        for (int i = 0; i < n; ++i) {
            if (i == ti) continue;
            double dot = 0, na = 0, nb = 0;
            for (int a = 0; a < m.dim; ++a) {
                const double x = m.E.at2(std::size_t(ti), std::size_t(a));
                const double y = m.E.at2(std::size_t(i), std::size_t(a));
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            all.emplace_back(dot / std::sqrt(na * nb), m.conditions[std::size_t(i)]);
        }
        std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return x.second < y.second;
        });
        for (int i = 0; i < k; ++i) {
            CHECK(sel.sources[std::size_t(i)].first == all[std::size_t(i)].second);
            CHECK(sel.sources[std::size_t(i)].second ==
                  doctest::Approx(all[std::size_t(i)].first).epsilon(1e-12));
        }
        for (std::size_t i = 1; i < sel.sources.size(); ++i)
            CHECK(sel.sources[i - 1].second >= sel.sources[i].second);
        for (const auto& [code, cosine] : sel.sources) CHECK(code != target);
    }
}

TEST_CASE("selection is invariant to storage order and embedding scale") {
    Rng rng(53);
    auto m = random_model(rng, 8, 5);
    const auto sel = select_sources(m, m.conditions[2], 3);

    // permute storage rows together with the code list
    TuckerModel perm = m;
    std::vector<std::size_t> order(m.conditions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
        perm.conditions[i] = m.conditions[order[i]];
        for (int a = 0; a < m.dim; ++a)
            perm.E.at2(i, std::size_t(a)) = m.E.at2(order[i], std::size_t(a));
    }
    std::vector<std::size_t> sort_order(perm.conditions.size());
    for (std::size_t i = 0; i < sort_order.size(); ++i) sort_order[i] = i;
    std::sort(sort_order.begin(), sort_order.end(), [&](std::size_t a, std::size_t b) {
        return perm.conditions[a] < perm.conditions[b];
    });
    TuckerModel sorted = perm;
    for (std::size_t i = 0; i < sort_order.size(); ++i) {
        sorted.conditions[i] = perm.conditions[sort_order[i]];
        for (int a = 0; a < m.dim; ++a)
            sorted.E.at2(i, std::size_t(a)) = perm.E.at2(sort_order[i], std::size_t(a));
    }
    const auto sel2 = select_sources(sorted, m.conditions[2], 3);
    REQUIRE(sel2.sources.size() == sel.sources.size());
    for (std::size_t i = 0; i < sel.sources.size(); ++i)
        CHECK(sel2.sources[i].first == sel.sources[i].first);

    // positive scaling leaves the selection unchanged
    TuckerModel scaled = m;
    for (auto& v : scaled.E.v) v *= 3.7;
    const auto sel3 = select_sources(scaled, m.conditions[2], 3);
    for (std::size_t i = 0; i < sel.sources.size(); ++i) {
        CHECK(sel3.sources[i].first == sel.sources[i].first);
        CHECK(sel3.sources[i].second == doctest::Approx(sel.sources[i].second).epsilon(1e-12));
    }
}

TEST_CASE("select_sources zero-norm and range errors") {
    Rng rng(59);
    auto m = random_model(rng, 4, 3);
    for (int a = 0; a < 3; ++a) m.E.at2(1, std::size_t(a)) = 0.0;
    CHECK_THROWS_AS(select_sources(m, m.conditions[1], 2), ZeroVector);
    CHECK_THROWS_AS(select_sources(m, m.conditions[0], 2), ZeroVector);  // candidate row 1
    CHECK_THROWS_AS(select_sources(m, m.conditions[0], 0), ConfigError);
    CHECK_THROWS_AS(select_sources(m, m.conditions[0], 4), ConfigError);
    CHECK_THROWS_AS(select_sources(m, "zzz", 1), UnknownCondition);
}

TEST_CASE("default_k arithmetic") {
    CHECK(default_k(303) == 31);
    CHECK(default_k(10) == 1);
    CHECK(default_k(2) == 1);
    CHECK(default_k(20) == 2);
    CHECK_THROWS_AS(default_k(1), ConfigError);
}

TEST_CASE("selection json round-trips") {
    SelectionResult sel;
    sel.target = "000";
    sel.sources = {{"104", 0.93}, {"001", 0.81}};
    const auto dir = std::filesystem::temp_directory_path() / "rarecast_sel";
    std::filesystem::create_directories(dir);
    save_selection(dir / "selection.json", sel);
    const auto loaded = load_selection(dir / "selection.json");
    CHECK(loaded.target == sel.target);
    REQUIRE(loaded.sources.size() == 2);
    CHECK(loaded.sources[0].first == "104");
    CHECK(loaded.sources[0].second == doctest::Approx(0.93));
}
